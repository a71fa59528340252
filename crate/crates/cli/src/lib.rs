//! Scenario runner behind the `aqsim` binary.
//!
//! Settings come from an optional JSON config file and from flags; flags win.
//! Reports are JSON or CSV and depend only on the validated config, never on
//! the worker count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aqsim::attacks::{self, AttackReport, ForgeryKind, ForgeryStrategy, Placement, RecoveryReport, Sampler};
use aqsim::comparison::{self, ComparisonMode};
use aqsim::crypto::SigningModel;
use aqsim::protocol::{
    self, MessageKnowledge, MtMode, PauliFrame, ProtocolConfig, ProtocolVariant, RPrimeSource,
};
use aqsim::qsim::{self, BellOutcome, PauliOp, XOutcome};
use aqsim::stats::Estimate;
use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the default report directory.
pub const OUT_DIR_ENV: &str = "AQS_OUT_DIR";
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_N: usize = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Largest statevector the scenarios build.
const MAX_JOINT_QUBITS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Honest,
    Forgery,
    QEstimate,
    CorrelationTable,
    RecoveryFailure,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RPrimeArg {
    Message,
    Ghz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MtArg {
    Measure,
    Forward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnowledgeArg {
    All,
    Alice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyModelArg {
    PerQubit,
    General,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonArg {
    PerQubit,
    Whole,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    ReplaceQubits,
    ReplaceWholeRegister,
    GarbleSignature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerArg {
    Haar,
    Original,
    Orthogonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementArg {
    Channel,
    InsideYb,
}

/// Every setting, each optional. Used both for flags and for the config file.
#[derive(Clone, Debug, Default, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "aqsim", version, about = "Run arbitrated quantum signature experiments")]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
    /// Message qubits.
    #[arg(long)]
    pub n: Option<usize>,
    /// Forged qubits (forgery with replace-qubits).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Source of the arbitrator's |R'> [default: message].
    #[arg(long, value_enum)]
    pub variant_r_prime: Option<RPrimeArg>,
    /// What the arbitrator sends as M_t [default: forward].
    #[arg(long, visible_alias = "mt", value_enum)]
    pub variant_mt: Option<MtArg>,
    /// Who knows the message [default: all].
    #[arg(long, value_enum)]
    pub knowledge: Option<KnowledgeArg>,
    /// Signing transform family [default: per-qubit].
    #[arg(long, value_enum)]
    pub key_model: Option<KeyModelArg>,
    /// SWAP-test granularity [default: per-qubit].
    #[arg(long, value_enum)]
    pub comparison: Option<ComparisonArg>,
    /// Keep pre-comparison states [default: true].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub idealized_comparison: Option<bool>,
    /// Forgery strategy [default: replace-qubits, or replace-whole-register without --m].
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Replacement sampler [default: haar].
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    /// Where the forger acts [default: channel].
    #[arg(long, value_enum)]
    pub placement: Option<PlacementArg>,
    /// Report file; defaults to a name under $AQS_OUT_DIR or the working directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; does not affect results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// JSON file with any of the settings above; flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl RawConfig {
    /// Fill every unset field of `self` from `base`.
    pub fn over(self, base: RawConfig) -> RawConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RawConfig { $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            scenario, n, m, trials, seed, variant_r_prime, variant_mt, knowledge, key_model,
            comparison, idealized_comparison, strategy, sampler, placement, out, format, workers,
            config
        )
    }
}

/// The variant flags, each possibly unset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VariantSelection {
    pub r_prime_source: Option<RPrimeSource>,
    pub m_t_mode: Option<MtMode>,
    pub message_knowledge: Option<MessageKnowledge>,
    pub key_model: Option<SigningModel>,
    pub comparison_mode: Option<ComparisonMode>,
}

impl VariantSelection {
    /// Unset fields take the documented defaults.
    pub fn resolve(&self) -> ProtocolVariant {
        ProtocolVariant {
            r_prime_source: self.r_prime_source.unwrap_or(RPrimeSource::FromMessageP),
            m_t_mode: self.m_t_mode.unwrap_or(MtMode::ForwardParticle),
            message_knowledge: self.message_knowledge.unwrap_or(MessageKnowledge::KnownToAll),
            key_model: self.key_model.unwrap_or(SigningModel::PerQubitProduct),
            comparison_mode: self.comparison_mode.unwrap_or(ComparisonMode::PerQubit),
        }
    }

    /// Every variant agreeing with the fields that are set.
    pub fn grid(&self) -> Vec<ProtocolVariant> {
        fn opts<T: Copy>(set: Option<T>, all: &[T]) -> Vec<T> {
            set.map_or_else(|| all.to_vec(), |v| vec![v])
        }
        let mut out = Vec::new();
        for r in opts(self.r_prime_source, &[RPrimeSource::FromMessageP, RPrimeSource::FromGhzParticle]) {
            for mt in opts(self.m_t_mode, &[MtMode::ForwardParticle, MtMode::MeasureX]) {
                for k in opts(
                    self.message_knowledge,
                    &[MessageKnowledge::KnownToAll, MessageKnowledge::AliceOnly],
                ) {
                    for key in opts(self.key_model, &[SigningModel::PerQubitProduct, SigningModel::GeneralUnitary]) {
                        for c in opts(self.comparison_mode, &[ComparisonMode::PerQubit, ComparisonMode::WholeRegister]) {
                            out.push(ProtocolVariant {
                                r_prime_source: r,
                                m_t_mode: mt,
                                message_knowledge: k,
                                key_model: key,
                                comparison_mode: c,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// A fully validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub m: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    pub variant: VariantSelection,
    pub idealized_comparison: bool,
    pub strategy: ForgeryStrategy,
    pub output_path: PathBuf,
    pub format: Format,
    pub workers: Option<usize>,
}

fn scenario_name(s: Scenario) -> &'static str {
    match s {
        Scenario::Honest => "honest",
        Scenario::Forgery => "forgery",
        Scenario::QEstimate => "q-estimate",
        Scenario::CorrelationTable => "correlation-table",
        Scenario::RecoveryFailure => "recovery-failure",
    }
}

/// Turn raw settings into a config, or list everything wrong with them.
/// `out_dir` is the default report directory.
pub fn validate_config(raw: &RawConfig, out_dir: Option<&Path>) -> Result<ExperimentConfig, Vec<String>> {
    let mut errors = Vec::new();
    let scenario = raw.scenario;
    if scenario.is_none() {
        errors.push(
            "--scenario is required (honest, forgery, q-estimate, correlation-table, recovery-failure)"
                .to_string(),
        );
    }
    let n = raw.n.unwrap_or(DEFAULT_N);
    let trials = raw.trials.unwrap_or(DEFAULT_TRIALS);
    let seed = raw.seed.unwrap_or(DEFAULT_SEED);
    let idealized = raw.idealized_comparison.unwrap_or(true);
    if n == 0 {
        errors.push("--n must be at least 1".to_string());
    }
    let per_run = if idealized { 2 * n } else { 3 * n };
    if per_run > MAX_JOINT_QUBITS {
        errors.push(format!(
            "--n {n} needs a {per_run}-qubit statevector; the limit is {MAX_JOINT_QUBITS}"
        ));
    }
    if trials == 0 {
        errors.push("--trials must be at least 1".to_string());
    }
    if let Some(m) = raw.m {
        if m == 0 {
            errors.push("--m must be at least 1".to_string());
        }
        if m > n {
            errors.push(format!("--m ({m}) must not exceed --n ({n})"));
        }
    }
    if raw.workers == Some(0) {
        errors.push("--workers must be at least 1".to_string());
    }

    let variant = VariantSelection {
        r_prime_source: raw.variant_r_prime.map(|v| match v {
            RPrimeArg::Message => RPrimeSource::FromMessageP,
            RPrimeArg::Ghz => RPrimeSource::FromGhzParticle,
        }),
        m_t_mode: raw.variant_mt.map(|v| match v {
            MtArg::Measure => MtMode::MeasureX,
            MtArg::Forward => MtMode::ForwardParticle,
        }),
        message_knowledge: raw.knowledge.map(|v| match v {
            KnowledgeArg::All => MessageKnowledge::KnownToAll,
            KnowledgeArg::Alice => MessageKnowledge::AliceOnly,
        }),
        key_model: raw.key_model.map(|v| match v {
            KeyModelArg::PerQubit => SigningModel::PerQubitProduct,
            KeyModelArg::General => SigningModel::GeneralUnitary,
        }),
        comparison_mode: raw.comparison.map(|v| match v {
            ComparisonArg::PerQubit => ComparisonMode::PerQubit,
            ComparisonArg::Whole => ComparisonMode::WholeRegister,
        }),
    };

    let kind = match raw.strategy {
        Some(StrategyArg::ReplaceQubits) | None if raw.m.is_some() || raw.strategy.is_some() => {
            ForgeryKind::ReplaceQubits { m: raw.m.unwrap_or(1) }
        }
        Some(StrategyArg::ReplaceWholeRegister) | None => ForgeryKind::ReplaceWholeRegister,
        Some(StrategyArg::GarbleSignature) => ForgeryKind::GarbleSignature,
        Some(StrategyArg::ReplaceQubits) => unreachable!(),
    };
    if raw.m.is_some() && !matches!(kind, ForgeryKind::ReplaceQubits { .. }) {
        errors.push("--m only applies to --strategy replace-qubits".to_string());
    }
    let sampler = match raw.sampler.unwrap_or(SamplerArg::Haar) {
        SamplerArg::Haar => Sampler::Haar,
        SamplerArg::Original => Sampler::Original,
        SamplerArg::Orthogonal => Sampler::Orthogonal,
    };
    let placement = match raw.placement.unwrap_or(PlacementArg::Channel) {
        PlacementArg::Channel => Placement::Channel,
        PlacementArg::InsideYb => Placement::InsideYb,
    };

    if scenario == Some(Scenario::RecoveryFailure) && n > 1 {
        let v = variant.resolve();
        if v.key_model == SigningModel::GeneralUnitary && v.comparison_mode == ComparisonMode::PerQubit {
            errors.push(
                "recovery-failure with --key-model general needs --comparison whole when --n > 1"
                    .to_string(),
            );
        }
    }

    let format = raw.format.unwrap_or_default();
    let Some(scenario) = scenario else {
        return Err(errors);
    };
    if !errors.is_empty() {
        return Err(errors);
    }
    let output_path = raw.out.clone().unwrap_or_else(|| {
        let ext = match format {
            Format::Json => "json",
            Format::Csv => "csv",
        };
        out_dir
            .map(Path::to_path_buf)
            .unwrap_or_default()
            .join(format!("{}-n{n}-seed{seed}.{ext}", scenario_name(scenario)))
    });
    Ok(ExperimentConfig {
        scenario,
        n,
        m: raw.m,
        trials,
        seed,
        variant,
        idealized_comparison: idealized,
        strategy: ForgeryStrategy {
            kind,
            sampler,
            placement,
        },
        output_path,
        format,
        workers: raw.workers,
    })
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Attack(#[from] attacks::AttackError),
    #[error(transparent)]
    Protocol(#[from] protocol::ProtocolError),
    #[error(transparent)]
    Qsim(#[from] qsim::QsimError),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_IO,
            _ => EXIT_INTERNAL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HonestRow {
    pub variant: ProtocolVariant,
    pub gamma_rate: Estimate,
    pub acceptance: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HonestReport {
    pub scenario: &'static str,
    pub qubits: usize,
    pub seed: u64,
    pub trials: usize,
    pub idealized_comparison: bool,
    pub rows: Vec<HonestRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QRow {
    pub n: usize,
    pub analytic: f64,
    pub empirical: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QReport {
    pub scenario: &'static str,
    pub seed: u64,
    pub rows: Vec<QRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub bell: BellOutcome,
    pub x: XOutcome,
    pub correction: PauliOp,
    pub min_fidelity: f64,
    pub messages: usize,
    pub verified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub scenario: &'static str,
    pub seed: u64,
    pub tolerance: f64,
    pub rows: Vec<CorrelationRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    Honest(HonestReport),
    Forgery(AttackReport),
    Q(QReport),
    Correlation(CorrelationReport),
    Recovery(RecoveryReport),
}

fn csv_string<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[derive(Serialize)]
struct HonestCsv {
    r_prime_source: RPrimeSource,
    m_t_mode: MtMode,
    message_knowledge: MessageKnowledge,
    key_model: SigningModel,
    comparison_mode: ComparisonMode,
    n: usize,
    trials: usize,
    gamma_rate: f64,
    gamma_ci_low: f64,
    gamma_ci_high: f64,
    acceptance: f64,
    acceptance_ci_low: f64,
    acceptance_ci_high: f64,
}

#[derive(Serialize)]
struct QCsv {
    n: usize,
    trials: usize,
    analytic: f64,
    empirical: f64,
    ci_low: f64,
    ci_high: f64,
}

#[derive(Serialize)]
struct RecoveryCsv {
    n: usize,
    m_t_mode: MtMode,
    trials: usize,
    mean_fidelity: f64,
    ci_low: f64,
    ci_high: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        match self {
            Report::Forgery(r) => r.to_csv(),
            Report::Honest(h) => csv_string(
                &h.rows
                    .iter()
                    .map(|r| HonestCsv {
                        r_prime_source: r.variant.r_prime_source,
                        m_t_mode: r.variant.m_t_mode,
                        message_knowledge: r.variant.message_knowledge,
                        key_model: r.variant.key_model,
                        comparison_mode: r.variant.comparison_mode,
                        n: h.qubits,
                        trials: h.trials,
                        gamma_rate: r.gamma_rate.value,
                        gamma_ci_low: r.gamma_rate.ci_low,
                        gamma_ci_high: r.gamma_rate.ci_high,
                        acceptance: r.acceptance.value,
                        acceptance_ci_low: r.acceptance.ci_low,
                        acceptance_ci_high: r.acceptance.ci_high,
                    })
                    .collect::<Vec<_>>(),
            ),
            Report::Q(q) => csv_string(
                &q.rows
                    .iter()
                    .map(|r| QCsv {
                        n: r.n,
                        trials: r.empirical.trials,
                        analytic: r.analytic,
                        empirical: r.empirical.value,
                        ci_low: r.empirical.ci_low,
                        ci_high: r.empirical.ci_high,
                    })
                    .collect::<Vec<_>>(),
            ),
            Report::Correlation(c) => csv_string(&c.rows),
            Report::Recovery(r) => csv_string(&[RecoveryCsv {
                n: r.qubits,
                m_t_mode: r.m_t_mode,
                trials: r.trials,
                mean_fidelity: r.candidate_fidelity.value,
                ci_low: r.candidate_fidelity.ci_low,
                ci_high: r.candidate_fidelity.ci_high,
            }]),
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }

    /// Short human-readable summary for standard output.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        match self {
            Report::Honest(h) => {
                for r in &h.rows {
                    let v = r.variant;
                    let _ = writeln!(
                        s,
                        "{:?}/{:?}/{:?}/{:?}/{:?}: gamma {:.4}, accepted {:.4} ({} runs)",
                        v.r_prime_source,
                        v.m_t_mode,
                        v.message_knowledge,
                        v.key_model,
                        v.comparison_mode,
                        r.gamma_rate.value,
                        r.acceptance.value,
                        r.acceptance.trials
                    );
                }
            }
            Report::Forgery(r) => {
                let _ = write!(
                    s,
                    "{} n={}: acceptance {:.4} [{:.4}, {:.4}] over {} trials",
                    r.strategy, r.qubits, r.acceptance.value, r.acceptance.ci_low, r.acceptance.ci_high, r.trials
                );
                if let Some(p) = r.analytic_prediction {
                    let _ = write!(s, ", predicted {p:.4}");
                }
                s.push('\n');
            }
            Report::Q(q) => {
                for r in &q.rows {
                    let _ = writeln!(
                        s,
                        "n={}: analytic {:.4}, empirical {:.4} [{:.4}, {:.4}] ({} pairs)",
                        r.n, r.analytic, r.empirical.value, r.empirical.ci_low, r.empirical.ci_high, r.empirical.trials
                    );
                }
            }
            Report::Correlation(c) => {
                for r in &c.rows {
                    let _ = writeln!(
                        s,
                        "({}, {}) -> {}  min fidelity {:.12}  {}",
                        r.bell,
                        r.x,
                        r.correction,
                        r.min_fidelity,
                        if r.verified { "verified" } else { "FAILED" }
                    );
                }
            }
            Report::Recovery(r) => {
                let _ = writeln!(
                    s,
                    "{:?}: candidate fidelity {:.4} [{:.4}, {:.4}] over {} runs",
                    r.m_t_mode,
                    r.candidate_fidelity.value,
                    r.candidate_fidelity.ci_low,
                    r.candidate_fidelity.ci_high,
                    r.trials
                );
            }
        }
        s
    }
}

fn protocol_config(cfg: &ExperimentConfig, variant: ProtocolVariant) -> ProtocolConfig {
    ProtocolConfig::new(cfg.n, variant).with_idealized_comparison(cfg.idealized_comparison)
}

fn run_honest(cfg: &ExperimentConfig) -> Result<HonestReport, CliError> {
    let mut rows = Vec::new();
    for variant in cfg.variant.grid() {
        let pc = protocol_config(cfg, variant);
        let results: Vec<(bool, bool)> = (0..cfg.trials)
            .into_par_iter()
            .map(|i| {
                let t = protocol::run_protocol(&pc, protocol::trial_seed(cfg.seed, i as u64))?;
                Ok((t.gamma() == 1, t.accepted()))
            })
            .collect::<Result<_, CliError>>()?;
        let gamma = results.iter().filter(|r| r.0).count();
        let accepted = results.iter().filter(|r| r.1).count();
        rows.push(HonestRow {
            variant,
            gamma_rate: Estimate::proportion(gamma, cfg.trials),
            acceptance: Estimate::proportion(accepted, cfg.trials),
        });
    }
    Ok(HonestReport {
        scenario: "honest",
        qubits: cfg.n,
        seed: cfg.seed,
        trials: cfg.trials,
        idealized_comparison: cfg.idealized_comparison,
        rows,
    })
}

fn run_q(cfg: &ExperimentConfig) -> Result<QReport, CliError> {
    let mut rows = Vec::new();
    for n in 1..=cfg.n {
        let mut rng = protocol::run_rng(protocol::trial_seed(cfg.seed, n as u64));
        let rejected = comparison::count_rejections(n, cfg.trials, &mut rng, |k, r| {
            qsim::haar_random_state(k, r).expect("validated size")
        })?;
        rows.push(QRow {
            n,
            analytic: comparison::average_q(n),
            empirical: Estimate::proportion(rejected, cfg.trials),
        });
    }
    Ok(QReport {
        scenario: "q-estimate",
        seed: cfg.seed,
        rows,
    })
}

const FRAME_TOLERANCE: f64 = 1e-10;

fn run_correlation(cfg: &ExperimentConfig) -> Result<CorrelationReport, CliError> {
    let frame = PauliFrame::derive()?;
    let mut rng = protocol::run_rng(cfg.seed);
    let messages = (0..cfg.trials)
        .map(|_| qsim::haar_random_state(1, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for e in frame.entries() {
        let mut worst: f64 = 1.0;
        for p in &messages {
            if let Some(res) = protocol::arbitrator_residual(p, e.bell, e.x)? {
                let fixed = res.apply_pauli(e.correction, 0)?;
                worst = worst.min(qsim::fidelity(&fixed, p)?);
            }
        }
        rows.push(CorrelationRow {
            bell: e.bell,
            x: e.x,
            correction: e.correction,
            min_fidelity: worst,
            messages: messages.len(),
            verified: worst >= 1.0 - FRAME_TOLERANCE,
        });
    }
    Ok(CorrelationReport {
        scenario: "correlation-table",
        seed: cfg.seed,
        tolerance: FRAME_TOLERANCE,
        rows,
    })
}

/// Run the experiment without touching the filesystem.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let work = || -> Result<Report, CliError> {
        Ok(match cfg.scenario {
            Scenario::Honest => Report::Honest(run_honest(cfg)?),
            Scenario::Forgery => Report::Forgery(attacks::estimate_forgery_acceptance(
                &protocol_config(cfg, cfg.variant.resolve()),
                &cfg.strategy,
                cfg.trials,
                cfg.seed,
            )?),
            Scenario::QEstimate => Report::Q(run_q(cfg)?),
            Scenario::CorrelationTable => Report::Correlation(run_correlation(cfg)?),
            Scenario::RecoveryFailure => Report::Recovery(attacks::recovery_failure_experiment(
                &protocol_config(cfg, cfg.variant.resolve()),
                cfg.trials,
                cfg.seed,
            )?),
        })
    };
    match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Pool(e.to_string()))?
            .install(work),
        None => work(),
    }
}

/// Read a JSON config file.
pub fn load_config_file(path: &Path) -> Result<RawConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))
}

/// Merge, validate, run and write the report. Returns the validated config
/// and the report.
pub fn execute(flags: RawConfig, out_dir: Option<&Path>) -> Result<(ExperimentConfig, Report), CliError> {
    let raw = match &flags.config {
        Some(path) => {
            let file = load_config_file(path)?;
            flags.over(file)
        }
        None => flags,
    };
    let cfg = validate_config(&raw, out_dir).map_err(CliError::Validation)?;
    let report = run_scenario(&cfg)?;
    let body = report.render(cfg.format);
    if let Some(parent) = cfg.output_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(&cfg.output_path, body).map_err(|source| CliError::Io {
        path: cfg.output_path.clone(),
        source,
    })?;
    Ok((cfg, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(args: &[&str]) -> RawConfig {
        RawConfig::try_parse_from(std::iter::once("aqsim").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults_are_documented_values() {
        let cfg = validate_config(&raw(&["--scenario", "honest"]), None).unwrap();
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.n, DEFAULT_N);
        assert_eq!(cfg.trials, DEFAULT_TRIALS);
        assert!(cfg.idealized_comparison);
        assert_eq!(cfg.format, Format::Json);
        assert_eq!(cfg.output_path, PathBuf::from("honest-n1-seed0.json"));
        let v = cfg.variant.resolve();
        assert_eq!(v, ProtocolVariant::known_message(SigningModel::PerQubitProduct, ComparisonMode::PerQubit));
    }

    #[test]
    fn m_above_n_names_both_flags() {
        let errs = validate_config(&raw(&["--scenario", "forgery", "--m", "2", "--n", "1"]), None).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("--m") && e.contains("--n")), "{errs:?}");
    }

    #[test]
    fn all_errors_are_collected() {
        let errs = validate_config(&raw(&["--n", "0", "--trials", "0"]), None).unwrap_err();
        assert_eq!(errs.len(), 3, "{errs:?}");
    }

    #[test]
    fn flags_override_file_values() {
        let file: RawConfig = serde_json::from_str(r#"{"scenario":"forgery","n":3,"trials":50,"seed":9}"#).unwrap();
        let merged = raw(&["--n", "2"]).over(file);
        let cfg = validate_config(&merged, None).unwrap();
        assert_eq!((cfg.n, cfg.trials, cfg.seed), (2, 50, 9));
        assert_eq!(cfg.scenario, Scenario::Forgery);
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        assert!(serde_json::from_str::<RawConfig>(r#"{"scenarioo":"forgery"}"#).is_err());
        assert!(serde_json::from_str::<RawConfig>(r#"{"scenario":"nope"}"#).is_err());
    }

    #[test]
    fn strategy_inference() {
        let c = validate_config(&raw(&["--scenario", "forgery", "--n", "3", "--m", "2"]), None).unwrap();
        assert_eq!(c.strategy.kind, ForgeryKind::ReplaceQubits { m: 2 });
        let c = validate_config(&raw(&["--scenario", "forgery", "--n", "3"]), None).unwrap();
        assert_eq!(c.strategy.kind, ForgeryKind::ReplaceWholeRegister);
        let c = validate_config(&raw(&["--scenario", "forgery", "--strategy", "replace-qubits"]), None).unwrap();
        assert_eq!(c.strategy.kind, ForgeryKind::ReplaceQubits { m: 1 });
        assert!(validate_config(&raw(&["--scenario", "forgery", "--strategy", "garble-signature", "--m", "1"]), None).is_err());
    }

    #[test]
    fn out_dir_sets_default_path() {
        let c = validate_config(&raw(&["--scenario", "q-estimate", "--format", "csv"]), Some(Path::new("/tmp/x"))).unwrap();
        assert_eq!(c.output_path, PathBuf::from("/tmp/x/q-estimate-n1-seed0.csv"));
    }

    #[test]
    fn grid_respects_fixed_fields() {
        let sel = VariantSelection {
            m_t_mode: Some(MtMode::ForwardParticle),
            message_knowledge: Some(MessageKnowledge::KnownToAll),
            ..Default::default()
        };
        assert_eq!(sel.grid().len(), 8);
        assert_eq!(VariantSelection::default().grid().len(), 32);
    }

    #[test]
    fn mt_alias_and_bool_flag() {
        let r = raw(&["--scenario", "honest", "--mt", "measure", "--idealized-comparison", "false"]);
        assert_eq!(r.variant_mt, Some(MtArg::Measure));
        assert_eq!(r.idealized_comparison, Some(false));
        assert_eq!(raw(&["--idealized-comparison"]).idealized_comparison, Some(true));
    }
}
