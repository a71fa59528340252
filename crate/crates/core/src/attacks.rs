//! Forgery strategies and Monte Carlo estimators run through the full
//! protocol.

use std::fmt;

use rand::seq::index;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison::ComparisonMode;
use crate::crypto::{SignaturePackage, SigningModel};
use crate::protocol::{
    self, Interceptor, MessageKnowledge, MessageSpec, MtMode, ProtocolConfig, ProtocolError,
    ProtocolVariant, RPrimeSource,
};
use crate::qsim::{self, Matrix, QsimError, StateVector};
use crate::stats::Estimate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("need 1 <= m <= n, got m = {m} with n = {n}")]
    ReplaceCount { m: usize, n: usize },
    #[error("qubit replacement needs a product-state message")]
    NotProduct,
    #[error("need at least one trial")]
    NoTrials,
    #[error("unsupported variant: {0}")]
    WrongVariant(String),
    #[error("trial {0} stopped before Bob built a candidate")]
    NoCandidate(usize),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ForgeryKind {
    /// Swap `m` uniformly chosen message qubits for sampler draws.
    ReplaceQubits { m: usize },
    /// Swap the whole message for one sampler draw.
    ReplaceWholeRegister,
    /// Leave the message alone and replace one qubit of the signature.
    GarbleSignature,
}

impl fmt::Display for ForgeryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForgeryKind::ReplaceQubits { .. } => "replace-qubits",
            ForgeryKind::ReplaceWholeRegister => "replace-whole-register",
            ForgeryKind::GarbleSignature => "garble-signature",
        })
    }
}

/// Where the forger acts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Placement {
    /// On the Alice-to-Bob channel.
    #[default]
    Channel,
    /// A dishonest Bob swaps the copy he puts into `y_b`.
    InsideYb,
}

/// Source of replacement states.
pub trait ReplacementSampler: Sync {
    /// A replacement for `original` with the same number of qubits.
    fn sample(&self, original: &StateVector, rng: &mut dyn RngCore) -> StateVector;

    /// `(E[F], E[F^2])` of the fidelity between a draw and the original, if
    /// known in closed form for dimension `dim`.
    fn fidelity_moments(&self, _dim: usize) -> Option<(f64, f64)> {
        None
    }

    fn name(&self) -> String {
        "custom".to_string()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sampler {
    /// Uniform over pure states.
    #[default]
    Haar,
    /// Returns the original state; an honest control.
    Original,
    /// A state orthogonal to the original.
    Orthogonal,
}

impl ReplacementSampler for Sampler {
    fn sample(&self, original: &StateVector, rng: &mut dyn RngCore) -> StateVector {
        match self {
            Sampler::Haar => qsim::haar_random_state(original.qubit_count(), rng)
                .expect("size of an existing state"),
            Sampler::Original => original.clone(),
            Sampler::Orthogonal => qsim::orthogonal_state(original, rng),
        }
    }

    fn fidelity_moments(&self, dim: usize) -> Option<(f64, f64)> {
        let d = dim as f64;
        Some(match self {
            Sampler::Haar => (1.0 / d, 2.0 / (d * (d + 1.0))),
            Sampler::Original => (1.0, 1.0),
            Sampler::Orthogonal => (0.0, 0.0),
        })
    }

    fn name(&self) -> String {
        match self {
            Sampler::Haar => "haar",
            Sampler::Original => "original",
            Sampler::Orthogonal => "orthogonal",
        }
        .to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForgeryStrategy {
    pub kind: ForgeryKind,
    #[serde(default)]
    pub sampler: Sampler,
    #[serde(default)]
    pub placement: Placement,
}

impl ForgeryStrategy {
    pub fn new(kind: ForgeryKind) -> Self {
        Self {
            kind,
            sampler: Sampler::Haar,
            placement: Placement::Channel,
        }
    }

    pub fn with_sampler(mut self, sampler: Sampler) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    /// Check the strategy against an `n`-qubit message.
    pub fn validate(&self, n: usize) -> Result<(), AttackError> {
        if let ForgeryKind::ReplaceQubits { m } = self.kind {
            if m == 0 || m > n {
                return Err(AttackError::ReplaceCount { m, n });
            }
        }
        Ok(())
    }
}

/// Apply a message forgery to `p`. `GarbleSignature` leaves `p` unchanged.
pub fn forge<R: Rng + ?Sized>(
    p: &StateVector,
    strategy: &ForgeryStrategy,
    rng: &mut R,
) -> Result<StateVector, AttackError> {
    forge_with(p, strategy.kind, &strategy.sampler, rng)
}

pub fn forge_with<R: Rng + ?Sized>(
    p: &StateVector,
    kind: ForgeryKind,
    sampler: &dyn ReplacementSampler,
    rng: &mut R,
) -> Result<StateVector, AttackError> {
    let n = p.qubit_count();
    let mut rng = DynRng(rng);
    match kind {
        ForgeryKind::ReplaceQubits { m } => {
            if m == 0 || m > n {
                return Err(AttackError::ReplaceCount { m, n });
            }
            let mut factors = p.factorize().ok_or(AttackError::NotProduct)?;
            let mut positions = index::sample(&mut rng, n, m).into_vec();
            positions.sort_unstable();
            for i in positions {
                factors[i] = sampler.sample(&factors[i], &mut rng);
            }
            Ok(qsim::tensor_all(&factors)?)
        }
        ForgeryKind::ReplaceWholeRegister => Ok(sampler.sample(p, &mut rng)),
        ForgeryKind::GarbleSignature => Ok(p.clone()),
    }
}

/// Adapter so generic callers can hand `&mut R` to `dyn RngCore` APIs.
struct DynRng<'a, R: ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for DynRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Replace one uniformly chosen qubit of the (encrypted) signature register
/// with a sampler draw. When that qubit is entangled with the rest, the
/// whole register is replaced instead.
pub fn garble_signature<R: Rng + ?Sized>(
    signature: &SignaturePackage,
    sampler: &dyn ReplacementSampler,
    rng: &mut R,
) -> Result<SignaturePackage, AttackError> {
    let state = &signature.enc_state;
    let mut rng = DynRng(rng);
    let q = rng.random_range(0..state.qubit_count());
    let enc_state = match state.qubit_factor(q)? {
        Some(f) => {
            let new = sampler.sample(&f, &mut rng);
            let perp = |s: &StateVector| {
                let a = s.amplitudes();
                vec![-a[1].conj(), a[0].conj()]
            };
            // unitary taking f to new
            let to = Matrix::from_columns(&[new.amplitudes().to_vec(), perp(&new)]);
            let from = Matrix::from_columns(&[f.amplitudes().to_vec(), perp(&f)]);
            state.apply_one_qubit(&to.mul(&from.adjoint()), q)?
        }
        None => sampler.sample(state, &mut rng),
    };
    Ok(SignaturePackage {
        enc_state,
        ..signature.clone()
    })
}

/// Interceptor that applies one forgery and remembers what it sent on.
pub struct Forger<'a> {
    kind: ForgeryKind,
    placement: Placement,
    sampler: &'a dyn ReplacementSampler,
    forged: Option<StateVector>,
}

impl<'a> Forger<'a> {
    pub fn new(kind: ForgeryKind, placement: Placement, sampler: &'a dyn ReplacementSampler) -> Self {
        Self {
            kind,
            placement,
            sampler,
            forged: None,
        }
    }

    /// The message as it left the forger's hands in the last run.
    pub fn forged(&self) -> Option<&StateVector> {
        self.forged.as_ref()
    }

    fn forge_message(
        &mut self,
        message: StateVector,
        rng: &mut dyn RngCore,
    ) -> Result<StateVector, ProtocolError> {
        let out = forge_with(&message, self.kind, self.sampler, rng)
            .map_err(|e| ProtocolError::Interceptor(e.to_string()))?;
        self.forged = Some(out.clone());
        Ok(out)
    }
}

impl Interceptor for Forger<'_> {
    fn on_transmission(
        &mut self,
        message: StateVector,
        signature: SignaturePackage,
        rng: &mut dyn RngCore,
    ) -> Result<(StateVector, SignaturePackage), ProtocolError> {
        if self.kind == ForgeryKind::GarbleSignature {
            let garbled = garble_signature(&signature, self.sampler, rng)
                .map_err(|e| ProtocolError::Interceptor(e.to_string()))?;
            self.forged = Some(message.clone());
            return Ok((message, garbled));
        }
        match self.placement {
            Placement::Channel => Ok((self.forge_message(message, rng)?, signature)),
            Placement::InsideYb => Ok((message, signature)),
        }
    }

    fn on_forward(
        &mut self,
        message: StateVector,
        rng: &mut dyn RngCore,
    ) -> Result<StateVector, ProtocolError> {
        match (self.kind, self.placement) {
            (ForgeryKind::GarbleSignature, _) | (_, Placement::Channel) => Ok(message),
            (_, Placement::InsideYb) => self.forge_message(message, rng),
        }
    }
}

/// Summary of a forgery experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub strategy: ForgeryKind,
    pub sampler: String,
    pub placement: Placement,
    pub qubits: usize,
    pub trials: usize,
    pub seed: u64,
    /// Fraction of runs Bob accepted.
    pub acceptance: Estimate,
    /// Fraction of runs with `gamma = 1`.
    pub gamma_rate: Estimate,
    /// Mean fidelity between the forged and the original message.
    pub mean_fidelity: f64,
    pub analytic_prediction: Option<f64>,
    pub variant: ProtocolVariant,
    pub idealized_comparison: bool,
}

#[derive(Serialize)]
struct CsvRow {
    strategy: String,
    n: usize,
    m: Option<usize>,
    trials: usize,
    acceptance: f64,
    prediction: Option<f64>,
    ci_low: f64,
    ci_high: f64,
}

impl AttackReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV record with a header line.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(CsvRow {
            strategy: self.strategy.to_string(),
            n: self.qubits,
            m: match self.strategy {
                ForgeryKind::ReplaceQubits { m } => Some(m),
                _ => None,
            },
            trials: self.trials,
            acceptance: self.acceptance.value,
            prediction: self.analytic_prediction,
            ci_low: self.acceptance.ci_low,
            ci_high: self.acceptance.ci_high,
        })
        .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn within_interval(&self) -> Option<bool> {
        self.analytic_prediction.map(|p| self.acceptance.contains(p))
    }
}

/// `E[((1 + F) / 2)^k]` from the first two moments of `F`.
fn pass_probability(k: usize, (m1, m2): (f64, f64)) -> f64 {
    match k {
        0 => 1.0,
        1 => (1.0 + m1) / 2.0,
        _ => (1.0 + 2.0 * m1 + m2) / 4.0,
    }
}

/// Closed-form acceptance when one is available for this setup.
///
/// Each SWAP test that sees the forged state passes with probability
/// `(1 + F) / 2`. The arbitrator's test sees a forged message only when `|R'>`
/// is built from it; Bob's test sees it only when the arbitrator hands the
/// message back. `None` covers x-basis `M_t` (Bob's candidate is random),
/// per-qubit tests on entangled registers, and repeated tests on a message
/// disturbed by the first one.
pub fn analytic_acceptance(
    config: &ProtocolConfig,
    kind: ForgeryKind,
    sampler: &dyn ReplacementSampler,
) -> Option<f64> {
    let v = config.variant;
    let n = config.qubits;
    if v.m_t_mode == MtMode::MeasureX {
        return None;
    }
    let entangled_signature = v.key_model == SigningModel::GeneralUnitary && n > 1;
    if v.comparison_mode == ComparisonMode::PerQubit && entangled_signature {
        return None;
    }
    let per_qubit = v.comparison_mode == ComparisonMode::PerQubit;
    if kind == ForgeryKind::GarbleSignature {
        let dim = if entangled_signature { 1 << n } else { 2 };
        return Some(pass_probability(1, sampler.fidelity_moments(dim)?));
    }
    let k = usize::from(v.r_prime_source == RPrimeSource::FromMessageP)
        + usize::from(v.message_knowledge == MessageKnowledge::AliceOnly);
    if k == 2 && !config.idealized_comparison {
        return None;
    }
    match kind {
        ForgeryKind::ReplaceQubits { m } => {
            let (f1, f2) = sampler.fidelity_moments(2)?;
            if per_qubit {
                Some(pass_probability(k, (f1, f2)).powi(m as i32))
            } else {
                Some(pass_probability(k, (f1.powi(m as i32), f2.powi(m as i32))))
            }
        }
        ForgeryKind::ReplaceWholeRegister => {
            if per_qubit && n > 1 {
                return None;
            }
            Some(pass_probability(k, sampler.fidelity_moments(1 << n)?))
        }
        ForgeryKind::GarbleSignature => unreachable!(),
    }
}

#[derive(Clone, Copy)]
struct TrialResult {
    accepted: bool,
    gamma: bool,
    fidelity: f64,
}

fn run_trial(
    config: &ProtocolConfig,
    kind: ForgeryKind,
    placement: Placement,
    sampler: &dyn ReplacementSampler,
    seed: u64,
) -> Result<TrialResult, AttackError> {
    let mut forger = Forger::new(kind, placement, sampler);
    let out = protocol::run_protocol_with(config, seed, &mut forger)?;
    let original = out.message.register();
    let fidelity = match forger.forged() {
        Some(f) => qsim::fidelity(f, &original)?,
        None => 1.0,
    };
    Ok(TrialResult {
        accepted: out.transcript.accepted(),
        gamma: out.transcript.gamma() == 1,
        fidelity,
    })
}

/// Run `trials` forged protocol runs in parallel. Trial `i` uses
/// [`protocol::trial_seed`]`(seed, i)`, so the report does not depend on the
/// thread count.
pub fn estimate_forgery_acceptance(
    config: &ProtocolConfig,
    strategy: &ForgeryStrategy,
    trials: usize,
    seed: u64,
) -> Result<AttackReport, AttackError> {
    let mut report = estimate_with_sampler(
        config,
        strategy.kind,
        strategy.placement,
        &strategy.sampler,
        trials,
        seed,
    )?;
    report.sampler = strategy.sampler.name();
    Ok(report)
}

pub fn estimate_with_sampler(
    config: &ProtocolConfig,
    kind: ForgeryKind,
    placement: Placement,
    sampler: &dyn ReplacementSampler,
    trials: usize,
    seed: u64,
) -> Result<AttackReport, AttackError> {
    if trials == 0 {
        return Err(AttackError::NoTrials);
    }
    ForgeryStrategy {
        kind,
        sampler: Sampler::Haar,
        placement,
    }
    .validate(config.qubits)?;
    let results: Vec<TrialResult> = (0..trials)
        .into_par_iter()
        .map(|i| run_trial(config, kind, placement, sampler, protocol::trial_seed(seed, i as u64)))
        .collect::<Result<_, _>>()?;
    let accepted = results.iter().filter(|r| r.accepted).count();
    let gamma = results.iter().filter(|r| r.gamma).count();
    let mean_fidelity = results.iter().map(|r| r.fidelity).sum::<f64>() / trials as f64;
    Ok(AttackReport {
        strategy: kind,
        sampler: sampler.name(),
        placement,
        qubits: config.qubits,
        trials,
        seed,
        acceptance: Estimate::proportion(accepted, trials),
        gamma_rate: Estimate::proportion(gamma, trials),
        mean_fidelity,
        analytic_prediction: analytic_acceptance(config, kind, sampler),
        variant: config.variant,
        idealized_comparison: config.idealized_comparison,
    })
}

/// Mean fidelity between `p` and its forgery over `trials` draws.
pub fn fidelity_drop(
    p: &StateVector,
    strategy: &ForgeryStrategy,
    trials: usize,
    seed: u64,
) -> Result<Estimate, AttackError> {
    if trials == 0 {
        return Err(AttackError::NoTrials);
    }
    strategy.validate(p.qubit_count())?;
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = protocol::run_rng(protocol::trial_seed(seed, i as u64));
            let f = forge(p, strategy, &mut rng)?;
            Ok(qsim::fidelity(p, &f)?)
        })
        .collect::<Result<_, AttackError>>()?;
    Ok(Estimate::mean(&samples))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub qubits: usize,
    pub trials: usize,
    pub seed: u64,
    pub m_t_mode: MtMode,
    /// Fidelity of Bob's candidate `|P'>` with the signed message.
    pub candidate_fidelity: Estimate,
    pub variant: ProtocolVariant,
}

impl RecoveryReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Honest runs; how well Bob's reconstruction matches the signed message.
pub fn recovery_failure_experiment(
    config: &ProtocolConfig,
    trials: usize,
    seed: u64,
) -> Result<RecoveryReport, AttackError> {
    if trials == 0 {
        return Err(AttackError::NoTrials);
    }
    let v = config.variant;
    if v.key_model == SigningModel::GeneralUnitary
        && v.comparison_mode == ComparisonMode::PerQubit
        && config.qubits > 1
    {
        return Err(AttackError::WrongVariant(
            "per-qubit comparison of a general-unitary signature rejects honest runs".into(),
        ));
    }
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let out = protocol::run_protocol_with(
                config,
                protocol::trial_seed(seed, i as u64),
                &mut protocol::Honest,
            )?;
            let cand = out
                .candidate
                .as_ref()
                .and_then(|c| c.to_plain())
                .ok_or(AttackError::NoCandidate(i))?;
            Ok(qsim::fidelity(&cand, &out.message.register())?)
        })
        .collect::<Result<_, AttackError>>()?;
    Ok(RecoveryReport {
        qubits: config.qubits,
        trials,
        seed,
        m_t_mode: v.m_t_mode,
        candidate_fidelity: Estimate::mean(&samples),
        variant: v,
    })
}

/// Config for the forgery experiments: Haar messages, idealized comparison.
pub fn forgery_config(n: usize, variant: ProtocolVariant) -> ProtocolConfig {
    ProtocolConfig {
        qubits: n,
        variant,
        idealized_comparison: true,
        message: MessageSpec::HaarProduct,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ProductMessage;
    use crate::qsim::{XOutcome, TOLERANCE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    fn product(n: usize, seed: u64) -> StateVector {
        ProductMessage::haar(n, &mut rng(seed)).unwrap().register()
    }

    fn default_variant(model: SigningModel, mode: ComparisonMode) -> ProtocolVariant {
        ProtocolVariant::known_message(model, mode)
    }

    #[test]
    fn replace_count_bounds() {
        let p = product(3, 1);
        for m in [0, 4] {
            let s = ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m });
            assert_eq!(
                forge(&p, &s, &mut rng(0)).unwrap_err(),
                AttackError::ReplaceCount { m, n: 3 }
            );
        }
    }

    #[test]
    fn replacing_needs_a_product_state() {
        let bell = qsim::BellOutcome::PsiPlus.state();
        let s = ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m: 1 });
        assert_eq!(forge(&bell, &s, &mut rng(0)).unwrap_err(), AttackError::NotProduct);
    }

    #[test]
    fn replaced_qubits_keep_the_rest() {
        let p = product(4, 2);
        let factors = p.factorize().unwrap();
        let s = ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m: 2 });
        let f = forge(&p, &s, &mut rng(5)).unwrap();
        let forged = f.factorize().unwrap();
        let kept = factors
            .iter()
            .zip(&forged)
            .filter(|(a, b)| qsim::fidelity(a, b).unwrap() > 1.0 - TOLERANCE)
            .count();
        assert_eq!(kept, 2);
    }

    #[test]
    fn original_sampler_is_identity() {
        let p = product(3, 3);
        let s = ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m: 2 }).with_sampler(Sampler::Original);
        let e = fidelity_drop(&p, &s, 50, 0).unwrap();
        assert!((e.value - 1.0).abs() < TOLERANCE);
    }

    #[test]
    fn garbling_an_orthogonal_qubit() {
        let sig = SignaturePackage {
            enc_bell: "00".parse().unwrap(),
            enc_state: XOutcome::PlusX.state(),
            qubit_count: 1,
        };
        let g = garble_signature(&sig, &Sampler::Orthogonal, &mut rng(0)).unwrap();
        assert!(qsim::fidelity(&g.enc_state, &sig.enc_state).unwrap() < TOLERANCE);
        let same = garble_signature(&sig, &Sampler::Original, &mut rng(0)).unwrap();
        assert!(qsim::fidelity(&same.enc_state, &sig.enc_state).unwrap() > 1.0 - TOLERANCE);
    }

    #[test]
    fn garbling_keeps_other_signature_qubits() {
        let enc_state = product(3, 9);
        let sig = SignaturePackage {
            enc_bell: "000000".parse().unwrap(),
            enc_state: enc_state.clone(),
            qubit_count: 3,
        };
        let g = garble_signature(&sig, &Sampler::Orthogonal, &mut rng(4)).unwrap();
        let a = enc_state.factorize().unwrap();
        let b = g.enc_state.factorize().unwrap();
        let fids: Vec<f64> = a.iter().zip(&b).map(|(x, y)| qsim::fidelity(x, y).unwrap()).collect();
        assert_eq!(fids.iter().filter(|&&f| f > 1.0 - 1e-9).count(), 2);
        assert_eq!(fids.iter().filter(|&&f| f < 1e-9).count(), 1);
    }

    #[test]
    fn analytic_cases() {
        let v = default_variant(SigningModel::PerQubitProduct, ComparisonMode::PerQubit);
        let c = forgery_config(3, v);
        let haar = Sampler::Haar;
        let p = |k| analytic_acceptance(&c, k, &haar).unwrap();
        assert!((p(ForgeryKind::ReplaceQubits { m: 1 }) - 0.75).abs() < 1e-15);
        assert!((p(ForgeryKind::ReplaceQubits { m: 2 }) - 0.5625).abs() < 1e-15);
        assert!((p(ForgeryKind::GarbleSignature) - 0.75).abs() < 1e-15);
        assert_eq!(
            analytic_acceptance(&c, ForgeryKind::GarbleSignature, &Sampler::Orthogonal),
            Some(0.5)
        );
        let w = default_variant(SigningModel::GeneralUnitary, ComparisonMode::WholeRegister);
        let c = forgery_config(3, w);
        let q = crate::comparison::average_q(3);
        let got = analytic_acceptance(&c, ForgeryKind::ReplaceWholeRegister, &haar).unwrap();
        assert!((got - (1.0 - q)).abs() < 1e-15);
        let x = ProtocolVariant {
            m_t_mode: MtMode::MeasureX,
            ..w
        };
        assert_eq!(
            analytic_acceptance(&forgery_config(3, x), ForgeryKind::ReplaceWholeRegister, &haar),
            None
        );
    }

    #[test]
    fn honest_control_through_the_harness() {
        let v = default_variant(SigningModel::PerQubitProduct, ComparisonMode::PerQubit);
        let s = ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m: 2 }).with_sampler(Sampler::Original);
        let r = estimate_forgery_acceptance(&forgery_config(2, v), &s, 200, 1).unwrap();
        assert_eq!(r.acceptance.value, 1.0);
        assert_eq!(r.analytic_prediction, Some(1.0));
    }

    #[test]
    fn report_is_thread_count_independent() {
        let v = default_variant(SigningModel::PerQubitProduct, ComparisonMode::PerQubit);
        let s = ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m: 1 });
        let cfg = forgery_config(2, v);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| estimate_forgery_acceptance(&cfg, &s, 300, 9).unwrap());
        let b = estimate_forgery_acceptance(&cfg, &s, 300, 9).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn csv_row_layout() {
        let v = default_variant(SigningModel::PerQubitProduct, ComparisonMode::PerQubit);
        let s = ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m: 1 });
        let r = estimate_forgery_acceptance(&forgery_config(1, v), &s, 20, 0).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "strategy,n,m,trials,acceptance,prediction,ci_low,ci_high"
        );
        assert!(lines.next().unwrap().starts_with("replace-qubits,1,1,20,"));
    }

    #[test]
    fn dishonest_bob_placement_matches_channel() {
        let v = default_variant(SigningModel::PerQubitProduct, ComparisonMode::PerQubit);
        let s = ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m: 1 }).with_placement(Placement::InsideYb);
        let r = estimate_forgery_acceptance(&forgery_config(1, v), &s, 4000, 3).unwrap();
        assert!(r.within_interval().unwrap(), "{}", r.acceptance.value);
    }

    #[test]
    fn zero_trials_rejected() {
        let v = default_variant(SigningModel::PerQubitProduct, ComparisonMode::PerQubit);
        let s = ForgeryStrategy::new(ForgeryKind::ReplaceWholeRegister);
        assert_eq!(
            estimate_forgery_acceptance(&forgery_config(1, v), &s, 0, 0).unwrap_err(),
            AttackError::NoTrials
        );
    }
}
