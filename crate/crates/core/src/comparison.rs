//! One-sided comparison of unknown pure states.
//!
//! The SWAP test projects a pair of registers onto the symmetric or the
//! antisymmetric subspace. Landing in the antisymmetric subspace proves the
//! inputs differ; the symmetric outcome is compatible with both. Identical
//! inputs are therefore never rejected, and the rejection probability for
//! inputs with fidelity `F` is `(1 - F) / 2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::qsim::{self, QsimError, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    PossiblySame,
    DefinitelyDifferent,
}

/// Pairing granularity when comparing multi-qubit registers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComparisonMode {
    /// One SWAP test per qubit pair; any rejection rejects.
    PerQubit,
    /// One SWAP test on the whole register pair.
    WholeRegister,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonResult {
    pub verdict: Verdict,
    /// Joint register after the measurement; the first input's qubits come first.
    pub post_state: StateVector,
}

/// Project `joint` onto the (anti)symmetric subspace of the simultaneous swap
/// of all `pairs`.
pub fn swap_test_pairs<R: Rng + ?Sized>(
    joint: &StateVector,
    pairs: &[(usize, usize)],
    rng: &mut R,
) -> Result<ComparisonResult, QsimError> {
    let k = joint.qubit_count();
    let mut masks = Vec::with_capacity(pairs.len());
    for (i, &(a, b)) in pairs.iter().enumerate() {
        for q in [a, b] {
            if q >= k {
                return Err(QsimError::QubitOutOfRange { qubit: q, qubits: k });
            }
            if pairs[..i].iter().any(|&(x, y)| x == q || y == q) {
                return Err(QsimError::RepeatedQubit(q));
            }
        }
        if a == b {
            return Err(QsimError::RepeatedQubit(a));
        }
        masks.push((1usize << (k - 1 - a), 1usize << (k - 1 - b)));
    }
    let amps = joint.amplitudes();
    let swapped = |i: usize| {
        masks.iter().fold(i, |acc, &(ma, mb)| {
            let (ba, bb) = (acc & ma != 0, acc & mb != 0);
            if ba == bb {
                acc
            } else {
                acc ^ ma ^ mb
            }
        })
    };
    let mut anti = Vec::with_capacity(amps.len());
    let mut sym = Vec::with_capacity(amps.len());
    for (i, &a) in amps.iter().enumerate() {
        let s = amps[swapped(i)];
        anti.push((a - s) * 0.5);
        sym.push((a + s) * 0.5);
    }
    let p_anti: f64 = anti.iter().map(|z| z.norm_sqr()).sum();
    // below this the antisymmetric weight is rounding noise on identical inputs
    let different = p_anti > 1e-14 && rng.random::<f64>() < p_anti;
    let (verdict, post) = if different {
        (Verdict::DefinitelyDifferent, anti)
    } else {
        (Verdict::PossiblySame, sym)
    };
    Ok(ComparisonResult {
        verdict,
        post_state: StateVector::normalized(post)?,
    })
}

fn check_same_size(a: &StateVector, b: &StateVector) -> Result<(), QsimError> {
    if a.qubit_count() != b.qubit_count() {
        return Err(QsimError::DimensionMismatch {
            left: a.qubit_count(),
            right: b.qubit_count(),
        });
    }
    Ok(())
}

/// Whole-register SWAP test between `a` and `b`.
pub fn swap_test<R: Rng + ?Sized>(
    a: &StateVector,
    b: &StateVector,
    rng: &mut R,
) -> Result<ComparisonResult, QsimError> {
    check_same_size(a, b)?;
    let k = a.qubit_count();
    let joint = qsim::tensor(a, b)?;
    let pairs: Vec<_> = (0..k).map(|i| (i, k + i)).collect();
    swap_test_pairs(&joint, &pairs, rng)
}

/// Analytic rejection probability of [`swap_test`]: `(1 - |<a|b>|²) / 2`.
pub fn detect_probability(a: &StateVector, b: &StateVector) -> Result<f64, QsimError> {
    Ok((1.0 - qsim::fidelity(a, b)?) / 2.0)
}

/// Mean rejection probability for two independent Haar-random `n`-qubit
/// states: `(1 - 2^-n) / 2`.
pub fn average_q(n: usize) -> f64 {
    0.5 * (1.0 - 0.5f64.powi(n as i32))
}

/// Qubit-by-qubit comparison of two `n`-qubit registers: a SWAP test on each
/// pair `(a_i, b_i)` in turn.
pub fn compare_product<R: Rng + ?Sized>(
    a: &StateVector,
    b: &StateVector,
    n: usize,
    rng: &mut R,
) -> Result<ComparisonResult, QsimError> {
    check_same_size(a, b)?;
    if a.qubit_count() != n {
        return Err(QsimError::DimensionMismatch {
            left: a.qubit_count(),
            right: n,
        });
    }
    let joint = qsim::tensor(a, b)?;
    let pairs: Vec<_> = (0..n).map(|i| (i, n + i)).collect();
    compare_pairs(&joint, &pairs, ComparisonMode::PerQubit, rng)
}

/// Compare the registers paired up in `pairs`, all living in `joint`.
pub fn compare_pairs<R: Rng + ?Sized>(
    joint: &StateVector,
    pairs: &[(usize, usize)],
    mode: ComparisonMode,
    rng: &mut R,
) -> Result<ComparisonResult, QsimError> {
    match mode {
        ComparisonMode::WholeRegister => swap_test_pairs(joint, pairs, rng),
        ComparisonMode::PerQubit => {
            let mut verdict = Verdict::PossiblySame;
            let mut state = joint.clone();
            for &pair in pairs {
                let r = swap_test_pairs(&state, &[pair], rng)?;
                if r.verdict == Verdict::DefinitelyDifferent {
                    verdict = Verdict::DefinitelyDifferent;
                }
                state = r.post_state;
            }
            Ok(ComparisonResult {
                verdict,
                post_state: state,
            })
        }
    }
}

/// Monte Carlo estimate of the rejection rate for pairs drawn from `prior`.
/// Returns the number of rejections out of `trials`.
pub fn count_rejections<R, F>(n: usize, trials: usize, rng: &mut R, mut prior: F) -> Result<usize, QsimError>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &mut R) -> StateVector,
{
    let mut rejected = 0;
    for _ in 0..trials {
        let a = prior(n, rng);
        let b = prior(n, rng);
        if swap_test(&a, &b, rng)?.verdict == Verdict::DefinitelyDifferent {
            rejected += 1;
        }
    }
    Ok(rejected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{haar_random_state, haar_random_unitary, new_basis_state, XOutcome, TOLERANCE};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binomial_sigma(p: f64, n: usize) -> f64 {
        (p * (1.0 - p) / n as f64).sqrt()
    }

    /// Antisymmetric weight of |a>|b> computed directly from amplitudes:
    /// || (|ab> - |ba>) / 2 ||².
    fn brute_force_antisymmetric(a: &[Complex64], b: &[Complex64]) -> f64 {
        let mut total = 0.0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                let z = (a[i] * b[j] - a[j] * b[i]) * 0.5;
                total += z.norm_sqr();
            }
        }
        total
    }

    #[test]
    fn oracle_values_for_fixed_pairs() {
        let zero = new_basis_state(1, 0).unwrap();
        let one = new_basis_state(1, 1).unwrap();
        let plus = XOutcome::PlusX.state();
        let p01 = brute_force_antisymmetric(zero.amplitudes(), one.amplitudes());
        let p0p = brute_force_antisymmetric(zero.amplitudes(), plus.amplitudes());
        assert!((p01 - 0.5).abs() < TOLERANCE);
        assert!((p0p - 0.25).abs() < TOLERANCE);
        assert!((detect_probability(&zero, &one).unwrap() - 0.5).abs() < TOLERANCE);
        assert!((detect_probability(&zero, &plus).unwrap() - 0.25).abs() < TOLERANCE);
        assert!(detect_probability(&plus, &plus).unwrap().abs() < TOLERANCE);
    }

    #[test]
    fn identical_states_never_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 1..=3 {
            let s = haar_random_state(k, &mut rng).unwrap();
            for _ in 0..2000 {
                let r = swap_test(&s, &s, &mut rng).unwrap();
                assert_eq!(r.verdict, Verdict::PossiblySame);
                assert!((r.post_state.norm_sqr() - 1.0).abs() < TOLERANCE);
            }
        }
    }

    #[test]
    fn empirical_rate_matches_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let zero = new_basis_state(1, 0).unwrap();
        let plus = XOutcome::PlusX.state();
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| swap_test(&zero, &plus, &mut rng).unwrap().verdict == Verdict::DefinitelyDifferent)
            .count();
        let rate = hits as f64 / trials as f64;
        assert!((rate - 0.25).abs() < 3.0 * binomial_sigma(0.25, trials), "rate {rate}");
    }

    #[test]
    fn post_state_is_antisymmetric_on_rejection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let zero = new_basis_state(1, 0).unwrap();
        let one = new_basis_state(1, 1).unwrap();
        loop {
            let r = swap_test(&zero, &one, &mut rng).unwrap();
            if r.verdict == Verdict::DefinitelyDifferent {
                let a = r.post_state.amplitudes();
                assert!((a[1] + a[2]).norm() < TOLERANCE);
                assert!((a[1].norm_sqr() - 0.5).abs() < TOLERANCE);
                break;
            }
        }
    }

    #[test]
    fn average_q_values() {
        assert!((average_q(1) - 0.25).abs() < 1e-15);
        assert!((average_q(3) - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = new_basis_state(1, 0).unwrap();
        let b = new_basis_state(2, 0).unwrap();
        assert!(swap_test(&a, &b, &mut rng).is_err());
        assert!(detect_probability(&a, &b).is_err());
        assert!(compare_product(&b, &b, 1, &mut rng).is_err());
    }

    #[test]
    fn compare_product_identical_never_rejects() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let parts: Vec<_> = (0..3).map(|_| haar_random_state(1, &mut rng).unwrap()).collect();
        let p = qsim::tensor_all(&parts).unwrap();
        for _ in 0..1000 {
            assert_eq!(
                compare_product(&p, &p, 3, &mut rng).unwrap().verdict,
                Verdict::PossiblySame
            );
        }
    }

    #[test]
    fn invariant_under_common_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = new_basis_state(2, 0).unwrap();
        let b = haar_random_state(2, &mut rng).unwrap();
        let u = haar_random_unitary(4, &mut rng);
        let ua = a.apply_unitary(&u).unwrap();
        let ub = b.apply_unitary(&u).unwrap();
        let trials = 50_000;
        let count = |x: &StateVector, y: &StateVector, rng: &mut ChaCha8Rng| {
            (0..trials)
                .filter(|_| swap_test(x, y, rng).unwrap().verdict == Verdict::DefinitelyDifferent)
                .count() as f64
                / trials as f64
        };
        let r1 = count(&a, &b, &mut rng);
        let r2 = count(&ua, &ub, &mut rng);
        let p = detect_probability(&a, &b).unwrap();
        // difference of two independent estimates
        let sigma = (2.0f64).sqrt() * binomial_sigma(p, trials);
        assert!((r1 - r2).abs() < 3.0 * sigma, "{r1} vs {r2}");
    }

    #[test]
    fn bad_pairs_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = new_basis_state(2, 0).unwrap();
        assert!(swap_test_pairs(&s, &[(0, 0)], &mut rng).is_err());
        assert!(swap_test_pairs(&s, &[(0, 2)], &mut rng).is_err());
        let s3 = new_basis_state(3, 0).unwrap();
        assert!(swap_test_pairs(&s3, &[(0, 1), (1, 2)], &mut rng).is_err());
    }
}
