//! The three-party arbitrated signature protocol.
//!
//! One run has three phases. In the initial phase the parties share keys
//! `K_a` (Alice/arbitrator) and `K_b` (Bob/arbitrator) and one GHZ triple per
//! message qubit. In the signing phase Alice Bell-measures a copy of each
//! message qubit with her GHZ share, signs the message with the keyed unitary
//! `M_{K_a}` and sends message and signature to Bob. In the verification
//! phase Bob measures his shares in the x basis and forwards everything to
//! the arbitrator, who runs the forgery test and answers with `y_tb`; Bob then
//! makes the final decision.
//!
//! Steps that admit several readings are selected by [`ProtocolVariant`].

mod channel;
mod frame;
mod parties;
mod transcript;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use channel::{Channel, Envelope, Party, Payload};
pub use frame::{arbitrator_residual, FrameEntry, PauliFrame};
pub use parties::{
    alice_sign, arbitrator_verify, bob_candidate, bob_final_verify, bob_receive_and_forward,
    ArbitratorOutcome, ArbitratorReply, BobRequest, FinalDecision, GhzStore, MtPayload,
    OpenedReply, OpenedRequest, ReplyPads, RequestPads, Signed,
};
pub use transcript::{FinalVerdict, Transcript, TranscriptHeader};

use crate::comparison::ComparisonMode;
use crate::crypto::{
    self, CryptoError, KeyMaterial, KeyOwner, SignaturePackage, SigningKeyLayout, SigningModel,
    SigningTransform,
};
use crate::qsim::{self, BellOutcome, QsimError, StateVector, XOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("a message needs at least one qubit")]
    NoQubits,
    #[error("expected {expected} message qubits, got {got}")]
    QubitCount { expected: usize, got: usize },
    #[error("GHZ share {index} is not available to {party}")]
    MissingShare { index: usize, party: Party },
    #[error("next envelope is addressed to {found}, not {expected}")]
    OutOfOrder { expected: Party, found: Party },
    #[error("no envelope waiting for {0}")]
    EmptyChannel(Party),
    #[error("unexpected {found} delivered to {party}")]
    UnexpectedPayload { party: Party, found: &'static str },
    #[error("y_b could not be decrypted: {0}")]
    UndecryptableRequest(CryptoError),
    #[error("y_tb could not be decrypted: {0}")]
    UndecryptableReply(CryptoError),
    #[error("this variant needs Bob's own copy of the message")]
    MissingReference,
    #[error("y_tb does not carry the message")]
    MissingMessage,
    #[error("no unique Pauli correction for ({bell}, {x})")]
    FrameUnresolved { bell: BellOutcome, x: XOutcome },
    #[error("transcript would accept with gamma = 0")]
    GammaGate,
    #[error("interceptor failed: {0}")]
    Interceptor(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// Where the arbitrator's second state `|R'>` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RPrimeSource {
    /// `|R'> = M_{K_a}|P>` from the message Bob forwarded.
    FromMessageP,
    /// `|R'> = M_{K_a}` applied to the arbitrator's frame-corrected GHZ particle.
    FromGhzParticle,
}

/// What the arbitrator puts in `y_tb` in place of `M_t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MtMode {
    /// Measure his particle in the x basis and send the outcome.
    MeasureX,
    /// Send the particle itself.
    ForwardParticle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKnowledge {
    /// Every party holds a classical description of `|P>` and can mint copies.
    KnownToAll,
    /// Only Alice knows `|P>`; Bob gets it back from the arbitrator in `y_tb`.
    AliceOnly,
}

/// One reading of every ambiguous protocol step. There is no default.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtocolVariant {
    pub r_prime_source: RPrimeSource,
    pub m_t_mode: MtMode,
    pub message_knowledge: MessageKnowledge,
    pub key_model: SigningModel,
    pub comparison_mode: ComparisonMode,
}

impl ProtocolVariant {
    /// Arbitrator forwards his GHZ particle and Bob checks it against the
    /// publicly known message.
    pub fn known_message(key_model: SigningModel, comparison_mode: ComparisonMode) -> Self {
        Self {
            r_prime_source: RPrimeSource::FromMessageP,
            m_t_mode: MtMode::ForwardParticle,
            message_knowledge: MessageKnowledge::KnownToAll,
            key_model,
            comparison_mode,
        }
    }
}

/// Classical description of a product message `|P> = ⊗ (α_i|0> + β_i|1>)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductMessage(Vec<StateVector>);

impl ProductMessage {
    pub fn new(qubits: Vec<StateVector>) -> Result<Self, ProtocolError> {
        if qubits.is_empty() {
            return Err(ProtocolError::NoQubits);
        }
        if let Some(q) = qubits.iter().find(|q| q.qubit_count() != 1) {
            return Err(ProtocolError::QubitCount {
                expected: 1,
                got: q.qubit_count(),
            });
        }
        Ok(Self(qubits))
    }

    pub fn haar<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, ProtocolError> {
        let qubits = (0..n)
            .map(|_| qsim::haar_random_state(1, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(qubits)
    }

    pub fn qubits(&self) -> &[StateVector] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// A fresh copy of the full register.
    pub fn register(&self) -> StateVector {
        qsim::tensor_all(&self.0).expect("non-empty by construction")
    }
}

/// A logical register that may live inside a larger joint state, e.g. after a
/// comparison entangled it with the register it was compared against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumRegister {
    state: StateVector,
    qubits: Vec<usize>,
}

impl QuantumRegister {
    pub fn plain(state: StateVector) -> Self {
        let qubits = (0..state.qubit_count()).collect();
        Self { state, qubits }
    }

    pub fn embedded(state: StateVector, qubits: Vec<usize>) -> Result<Self, ProtocolError> {
        for (i, &q) in qubits.iter().enumerate() {
            if q >= state.qubit_count() {
                return Err(QsimError::QubitOutOfRange {
                    qubit: q,
                    qubits: state.qubit_count(),
                }
                .into());
            }
            if qubits[..i].contains(&q) {
                return Err(QsimError::RepeatedQubit(q).into());
            }
        }
        Ok(Self { state, qubits })
    }

    pub fn joint_state(&self) -> &StateVector {
        &self.state
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    /// The register as a standalone state, if it is not entangled with
    /// anything else in the joint state.
    pub fn to_plain(&self) -> Option<StateVector> {
        let k = self.state.qubit_count();
        let m = self.qubits.len();
        let rest: Vec<usize> = (0..k).filter(|q| !self.qubits.contains(q)).collect();
        let bit = |index: usize, q: usize| (index >> (k - 1 - q)) & 1;
        // amplitude matrix: rows over the register, columns over the rest
        let mut columns = vec![vec![Complex64::new(0.0, 0.0); 1 << m]; 1 << rest.len()];
        for (index, &a) in self.state.amplitudes().iter().enumerate() {
            let row = self.qubits.iter().fold(0, |acc, &q| (acc << 1) | bit(index, q));
            let col = rest.iter().fold(0, |acc, &q| (acc << 1) | bit(index, q));
            columns[col][row] = a;
        }
        let weight = |c: &[Complex64]| c.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let pivot = columns
            .iter()
            .max_by(|a, b| weight(a).total_cmp(&weight(b)))?
            .clone();
        let norm = weight(&pivot).sqrt();
        let v: Vec<Complex64> = pivot.iter().map(|z| z / norm).collect();
        for c in &columns {
            let overlap: Complex64 = v.iter().zip(c).map(|(x, y)| x.conj() * y).sum();
            if weight(c) - overlap.norm_sqr() > qsim::TOLERANCE {
                return None;
            }
        }
        StateVector::normalized(v).ok()
    }

    pub fn map_state<F>(&self, f: F) -> Result<Self, ProtocolError>
    where
        F: FnOnce(&StateVector, &[usize]) -> Result<StateVector, ProtocolError>,
    {
        Ok(Self {
            state: f(&self.state, &self.qubits)?,
            qubits: self.qubits.clone(),
        })
    }

    pub fn transform(&self, t: &SigningTransform) -> Result<Self, ProtocolError> {
        self.map_state(|s, q| Ok(t.apply_on(s, q)?))
    }

    pub fn qotp_encrypt(&self, pad: &crypto::BitString) -> Result<Self, ProtocolError> {
        self.map_state(|s, q| Ok(crypto::qotp_encrypt_on(s, q, pad)?))
    }

    pub fn qotp_decrypt(&self, pad: &crypto::BitString) -> Result<Self, ProtocolError> {
        self.map_state(|s, q| Ok(crypto::qotp_decrypt_on(s, q, pad)?))
    }
}

/// Everything fixed before a run starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub qubits: usize,
    pub variant: ProtocolVariant,
    /// Continue with the pre-comparison states instead of the disturbed ones.
    pub idealized_comparison: bool,
    pub message: MessageSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MessageSpec {
    /// Fresh Haar-random qubit factors per run.
    HaarProduct,
    Fixed(ProductMessage),
}

impl ProtocolConfig {
    pub fn new(qubits: usize, variant: ProtocolVariant) -> Self {
        Self {
            qubits,
            variant,
            idealized_comparison: true,
            message: MessageSpec::HaarProduct,
        }
    }

    pub fn with_message(mut self, message: ProductMessage) -> Self {
        self.message = MessageSpec::Fixed(message);
        self
    }

    pub fn with_idealized_comparison(mut self, idealized: bool) -> Self {
        self.idealized_comparison = idealized;
        self
    }

    pub fn signing_layout(&self) -> SigningKeyLayout {
        SigningKeyLayout::new(self.qubits, self.variant.key_model)
    }

    fn validate(&self) -> Result<(), ProtocolError> {
        if self.qubits == 0 {
            return Err(ProtocolError::NoQubits);
        }
        if let MessageSpec::Fixed(m) = &self.message {
            if m.len() != self.qubits {
                return Err(ProtocolError::QubitCount {
                    expected: self.qubits,
                    got: m.len(),
                });
            }
        }
        Ok(())
    }
}

/// Output of the initial phase.
#[derive(Clone, Debug)]
pub struct Session {
    pub k_a: KeyMaterial,
    pub k_b: KeyMaterial,
    pub ghz: GhzStore,
    pub header: TranscriptHeader,
}

/// Bits of `K_b` consumed by one run.
pub fn bob_key_bits(n: usize) -> usize {
    RequestPads::bits(n) + ReplyPads::bits(n)
}

/// Initial phase: fresh keys sized for one run and one GHZ triple per qubit.
pub fn initialize<R: Rng + ?Sized>(
    n: usize,
    seed: u64,
    variant: ProtocolVariant,
    idealized_comparison: bool,
    rng: &mut R,
) -> Result<Session, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::NoQubits);
    }
    let layout = SigningKeyLayout::new(n, variant.key_model);
    let k_a = KeyMaterial::random(KeyOwner::AliceArbitrator, layout.total_bits(), rng);
    let k_b = KeyMaterial::random(KeyOwner::BobArbitrator, bob_key_bits(n), rng);
    let header = TranscriptHeader {
        seed,
        qubits: n,
        variant,
        idealized_comparison,
        k_a: k_a.to_hex(),
        k_b: k_b.to_hex(),
    };
    Ok(Session {
        k_a,
        k_b,
        ghz: GhzStore::fresh(n),
        header,
    })
}

/// Adversary hooks on the two quantum hand-offs of the message.
pub trait Interceptor {
    /// Alice-to-Bob channel.
    fn on_transmission(
        &mut self,
        message: StateVector,
        signature: SignaturePackage,
        _rng: &mut dyn RngCore,
    ) -> Result<(StateVector, SignaturePackage), ProtocolError> {
        Ok((message, signature))
    }

    /// The copy of `|P>` Bob places into `y_b`.
    fn on_forward(
        &mut self,
        message: StateVector,
        _rng: &mut dyn RngCore,
    ) -> Result<StateVector, ProtocolError> {
        Ok(message)
    }
}

/// No adversary.
pub struct Honest;

impl Interceptor for Honest {}

/// A finished run with the simulation-side data the transcript omits.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub transcript: Transcript,
    /// The message Alice signed.
    pub message: ProductMessage,
    /// What Bob received from the channel.
    pub received: StateVector,
    /// Bob's `|P'>`; `None` when the run stopped at `gamma = 0`.
    pub candidate: Option<QuantumRegister>,
}

/// Per-run generator for a run seed.
pub fn run_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of trial `index` split from `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(index);
    r.next_u64()
}

pub fn run_protocol(config: &ProtocolConfig, seed: u64) -> Result<Transcript, ProtocolError> {
    Ok(run_protocol_with(config, seed, &mut Honest)?.transcript)
}

/// Run all three phases over an in-process channel, letting `interceptor`
/// tamper with the message in transit. Deterministic in `(config, seed)`.
pub fn run_protocol_with(
    config: &ProtocolConfig,
    seed: u64,
    interceptor: &mut dyn Interceptor,
) -> Result<RunOutcome, ProtocolError> {
    config.validate()?;
    let mut rng = run_rng(seed);
    let n = config.qubits;
    let variant = config.variant;
    let frame = PauliFrame::standard();

    let mut session = initialize(n, seed, variant, config.idealized_comparison, &mut rng)?;
    let message = match &config.message {
        MessageSpec::HaarProduct => ProductMessage::haar(n, &mut rng)?,
        MessageSpec::Fixed(m) => m.clone(),
    };
    let mut channel = Channel::new();

    // signing
    let signed = alice_sign(&message, &session.k_a, variant.key_model, &mut session.ghz, &mut rng)?;
    channel.send(
        Party::Alice,
        Party::Bob,
        Payload::Signed {
            message: signed.transmitted,
            signature: signed.signature,
        },
    );

    // verification, Bob's first step
    let (received, signature) = match channel.recv(Party::Bob)?.payload {
        Payload::Signed { message, signature } => {
            interceptor.on_transmission(message, signature, &mut rng)?
        }
        other => {
            return Err(ProtocolError::UnexpectedPayload {
                party: Party::Bob,
                found: other.kind(),
            })
        }
    };
    let forwarded = interceptor.on_forward(received.clone(), &mut rng)?;
    let (y_b, m_b) =
        bob_receive_and_forward(&forwarded, &signature, &mut session.ghz, &session.k_b, &mut rng)?;
    channel.send(Party::Bob, Party::Arbitrator, Payload::Request(y_b.clone()));

    // arbitrator
    let y_b_in = match channel.recv(Party::Arbitrator)?.payload {
        Payload::Request(y) => y,
        other => {
            return Err(ProtocolError::UnexpectedPayload {
                party: Party::Arbitrator,
                found: other.kind(),
            })
        }
    };
    let arb = arbitrator_verify(
        &y_b_in,
        &session.k_a,
        &session.k_b,
        &mut session.ghz,
        config,
        frame,
        &mut rng,
    )?;
    channel.send(Party::Arbitrator, Party::Bob, Payload::Reply(arb.reply.clone()));

    // Bob's final decision
    let y_tb = match channel.recv(Party::Bob)?.payload {
        Payload::Reply(y) => y,
        other => {
            return Err(ProtocolError::UnexpectedPayload {
                party: Party::Bob,
                found: other.kind(),
            })
        }
    };
    let reference = match variant.message_knowledge {
        MessageKnowledge::KnownToAll => Some(&message),
        MessageKnowledge::AliceOnly => None,
    };
    let decision = bob_final_verify(&y_tb, reference, &session.k_b, &variant, frame, &mut rng)?;

    let transcript = Transcript::new(
        session.header,
        signed.bell,
        m_b,
        arb.m_t,
        arb.gamma,
        y_b,
        y_tb,
        decision.verdict,
    )?;
    Ok(RunOutcome {
        transcript,
        message,
        received,
        candidate: decision.candidate,
    })
}
