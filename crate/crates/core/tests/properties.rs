use aqsim::comparison::{self, Verdict};
use aqsim::crypto::{self, BitString, KeyMaterial, KeyOwner, SigningKeyLayout, SigningModel};
use aqsim::qsim::{self, StateVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(n: usize, seed: u64) -> StateVector {
    qsim::haar_random_state(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn bits(v: &[bool]) -> BitString {
    BitString::new(v.to_vec())
}

proptest! {
    #[test]
    fn gates_preserve_norm(n in 1usize..5, seed: u64, target_seed: u64) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let s = qsim::haar_random_state(n, &mut r).unwrap();
        let u = qsim::haar_random_unitary(2, &mut r);
        let t = (target_seed % n as u64) as usize;
        let out = s.apply_one_qubit(&u, t).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn measurement_leaves_normalized_rest(n in 2usize..5, seed: u64) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let s = qsim::haar_random_state(n, &mut r).unwrap();
        let (_, rest) = s.measure_x(0, &mut r).unwrap();
        prop_assert_eq!(rest.qubit_count(), n - 1);
        prop_assert!((rest.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn qotp_roundtrip(n in 1usize..5, seed: u64, pad in proptest::collection::vec(any::<bool>(), 8)) {
        let s = state(n, seed);
        let pad = bits(&pad[..2 * n]);
        let back = crypto::qotp_decrypt(&crypto::qotp_encrypt(&s, &pad).unwrap(), &pad).unwrap();
        prop_assert!(qsim::fidelity(&s, &back).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn classical_roundtrip(v in proptest::collection::vec(any::<bool>(), 0..64), seed: u64) {
        let msg = bits(&v);
        let pad = BitString::random(v.len(), &mut ChaCha8Rng::seed_from_u64(seed));
        let back = crypto::classical_decrypt(&crypto::classical_encrypt(&msg, &pad).unwrap(), &pad).unwrap();
        prop_assert_eq!(back, msg);
    }

    #[test]
    fn derived_transforms_are_unitary(n in 1usize..4, seed: u64, general: bool) {
        let model = if general { SigningModel::GeneralUnitary } else { SigningModel::PerQubitProduct };
        let layout = SigningKeyLayout::new(n, model);
        let key = KeyMaterial::random(KeyOwner::AliceArbitrator, layout.total_bits(), &mut ChaCha8Rng::seed_from_u64(seed));
        let t = crypto::derive_signing_transform(&key, n, model).unwrap();
        prop_assert!(t.full_matrix().is_unitary(1e-10));
        let s = state(n, seed ^ 1);
        let back = t.inverse().apply_on(&crypto::sign_state(&s, &t).unwrap(), &(0..n).collect::<Vec<_>>()).unwrap();
        prop_assert!(qsim::fidelity(&s, &back).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn signature_roundtrip(n in 1usize..4, seed: u64) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let layout = SigningKeyLayout::new(n, SigningModel::PerQubitProduct);
        let key = KeyMaterial::random(KeyOwner::AliceArbitrator, layout.total_bits(), &mut r);
        let bell: Vec<_> = (0..n).map(|i| qsim::BellOutcome::ALL[(seed as usize + i) % 4]).collect();
        let rstate = qsim::haar_random_state(n, &mut r).unwrap();
        let pkg = crypto::make_signature(&bell, &rstate, &key, &layout).unwrap();
        let (b2, r2) = crypto::open_signature(&pkg, &key, &layout).unwrap();
        prop_assert_eq!(b2, bell);
        prop_assert!(qsim::fidelity(&r2, &rstate).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn identical_states_pass_the_swap_test(n in 1usize..4, seed: u64) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let s = qsim::haar_random_state(n, &mut r).unwrap();
        prop_assert_eq!(comparison::swap_test(&s, &s, &mut r).unwrap().verdict, Verdict::PossiblySame);
    }

    #[test]
    fn detection_probability_in_range(n in 1usize..4, a: u64, b: u64) {
        let p = comparison::detect_probability(&state(n, a), &state(n, b)).unwrap();
        prop_assert!((0.0..=0.5 + 1e-12).contains(&p));
    }
}
