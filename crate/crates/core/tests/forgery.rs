use aqsim::attacks::{
    self, fidelity_drop, forgery_config, ForgeryKind, ForgeryStrategy, Placement, Sampler,
};
use aqsim::comparison::{self, ComparisonMode};
use aqsim::crypto::SigningModel;
use aqsim::protocol::{ProductMessage, ProtocolVariant};
use aqsim::qsim;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 100_000;

fn known(model: SigningModel, mode: ComparisonMode) -> ProtocolVariant {
    ProtocolVariant::known_message(model, mode)
}

#[test]
fn whole_replacement_matches_full_qubit_replacement() {
    let p = ProductMessage::haar(3, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap()
        .register();
    let a = fidelity_drop(&p, &ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m: 3 }), TRIALS, 2)
        .unwrap();
    let b = fidelity_drop(&p, &ForgeryStrategy::new(ForgeryKind::ReplaceWholeRegister), TRIALS, 3)
        .unwrap();
    assert!((a.value - b.value).abs() <= 0.01, "{} vs {}", a.value, b.value);
    assert!((a.value - 0.125).abs() <= 0.01);
}

#[test]
fn single_qubit_whole_replacement_halves_fidelity() {
    let p = qsim::haar_random_state(1, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let e = fidelity_drop(&p, &ForgeryStrategy::new(ForgeryKind::ReplaceWholeRegister), TRIALS, 5)
        .unwrap();
    assert!((e.value - 0.5).abs() <= 0.01);
}

#[test]
fn one_of_three_replaced() {
    let p = ProductMessage::haar(3, &mut ChaCha8Rng::seed_from_u64(6))
        .unwrap()
        .register();
    let e = fidelity_drop(&p, &ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m: 1 }), TRIALS, 7)
        .unwrap();
    assert!((e.value - 0.5).abs() <= 0.01);
}

#[test]
fn orthogonal_signature_garbling_is_caught_half_the_time() {
    let v = known(SigningModel::PerQubitProduct, ComparisonMode::PerQubit);
    let s = ForgeryStrategy::new(ForgeryKind::GarbleSignature).with_sampler(Sampler::Orthogonal);
    for n in [1, 3] {
        let rep = attacks::estimate_forgery_acceptance(&forgery_config(n, v), &s, TRIALS, 8).unwrap();
        assert!((rep.acceptance.value - 0.5).abs() <= 0.01, "n={n}: {}", rep.acceptance.value);
        assert_eq!(rep.analytic_prediction, Some(0.5));
    }
}

#[test]
fn anchored_reports_sit_within_three_sigma() {
    let per = attacks::estimate_forgery_acceptance(
        &forgery_config(2, known(SigningModel::PerQubitProduct, ComparisonMode::PerQubit)),
        &ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m: 1 }),
        TRIALS,
        9,
    )
    .unwrap();
    assert_eq!(per.analytic_prediction, Some(0.75));
    assert!(per.within_interval().unwrap(), "{:?}", per.acceptance);
    for n in 1..=3 {
        let whole = attacks::estimate_forgery_acceptance(
            &forgery_config(n, known(SigningModel::GeneralUnitary, ComparisonMode::WholeRegister)),
            &ForgeryStrategy::new(ForgeryKind::ReplaceWholeRegister),
            TRIALS,
            10 + n as u64,
        )
        .unwrap();
        let expect = 0.5 * (1.0 + 2f64.powi(-(n as i32)));
        assert!((whole.analytic_prediction.unwrap() - expect).abs() < 1e-12);
        assert!((1.0 - comparison::average_q(n) - expect).abs() < 1e-12);
        assert!(whole.within_interval().unwrap(), "n={n}: {:?}", whole.acceptance);
    }
}

#[test]
fn acceptance_falls_with_more_replaced_qubits() {
    let v = known(SigningModel::PerQubitProduct, ComparisonMode::PerQubit);
    let cfg = forgery_config(4, v);
    let mut prev: Option<attacks::AttackReport> = None;
    for m in 1..=4 {
        let rep = attacks::estimate_forgery_acceptance(
            &cfg,
            &ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m }),
            TRIALS,
            20 + m as u64,
        )
        .unwrap();
        if let Some(p) = &prev {
            let slack = 3.0 * (p.acceptance.std_error.powi(2) + rep.acceptance.std_error.powi(2)).sqrt();
            assert!(rep.acceptance.value <= p.acceptance.value + slack, "m={m}");
        }
        prev = Some(rep);
    }
}

#[test]
fn identity_forgery_is_always_accepted() {
    let v = known(SigningModel::PerQubitProduct, ComparisonMode::PerQubit);
    for placement in [Placement::Channel, Placement::InsideYb] {
        let s = ForgeryStrategy::new(ForgeryKind::ReplaceQubits { m: 3 })
            .with_sampler(Sampler::Original)
            .with_placement(placement);
        let rep = attacks::estimate_forgery_acceptance(&forgery_config(3, v), &s, 2000, 30).unwrap();
        assert_eq!(rep.acceptance.value, 1.0);
        assert!((rep.mean_fidelity - 1.0).abs() < 1e-10);
    }
}

#[test]
fn report_roundtrips_through_json() {
    let v = known(SigningModel::PerQubitProduct, ComparisonMode::WholeRegister);
    let rep = attacks::estimate_forgery_acceptance(
        &forgery_config(2, v),
        &ForgeryStrategy::new(ForgeryKind::ReplaceWholeRegister),
        500,
        31,
    )
    .unwrap();
    let back: attacks::AttackReport = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(back, rep);
    assert!(rep.acceptance.ci_low <= rep.acceptance.value && rep.acceptance.value <= rep.acceptance.ci_high);
}
