//! Local computations of Alice, Bob and the arbitrator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::frame::PauliFrame;
use super::transcript::FinalVerdict;
use super::{
    MessageKnowledge, MtMode, Party, ProductMessage, ProtocolConfig, ProtocolError,
    ProtocolVariant, QuantumRegister, RPrimeSource,
};
use crate::comparison::{self, Verdict};
use crate::crypto::{
    self, BitString, CryptoError, KeyMaterial, SignaturePackage, SigningKeyLayout, SigningModel,
};
use crate::qsim::{self, BellOutcome, StateVector, XOutcome};

#[derive(Clone, Debug)]
enum Share {
    /// Qubits (Alice, Bob, arbitrator).
    Fresh(StateVector),
    /// Qubits (Bob, arbitrator) after Alice's Bell measurement.
    AfterAlice(StateVector),
    /// The arbitrator's qubit after Bob's x measurement.
    AfterBob(StateVector),
    Spent,
}

/// The `n` GHZ triples distributed in the initial phase, tracked through the
/// measurements that consume them.
#[derive(Clone, Debug)]
pub struct GhzStore {
    shares: Vec<Share>,
}

impl GhzStore {
    pub fn fresh(n: usize) -> Self {
        Self {
            shares: vec![Share::Fresh(qsim::ghz_state()); n],
        }
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    /// The untouched triple `index`, if nobody has measured it yet.
    pub fn triple(&self, index: usize) -> Option<&StateVector> {
        match self.shares.get(index) {
            Some(Share::Fresh(s)) => Some(s),
            _ => None,
        }
    }

    /// Alice measures (message qubit, her share) in the Bell basis.
    pub fn alice_bell_measure<R: Rng + ?Sized>(
        &mut self,
        index: usize,
        message_qubit: &StateVector,
        rng: &mut R,
    ) -> Result<BellOutcome, ProtocolError> {
        let Some(Share::Fresh(triple)) = self.shares.get(index) else {
            return Err(ProtocolError::MissingShare {
                index,
                party: Party::Alice,
            });
        };
        let joint = qsim::tensor(message_qubit, triple)?;
        let (outcome, rest) = joint.bell_measure(0, 1, rng)?;
        self.shares[index] = Share::AfterAlice(rest);
        Ok(outcome)
    }

    pub fn bob_measure_x<R: Rng + ?Sized>(
        &mut self,
        index: usize,
        rng: &mut R,
    ) -> Result<XOutcome, ProtocolError> {
        let Some(Share::AfterAlice(pair)) = self.shares.get(index) else {
            return Err(ProtocolError::MissingShare {
                index,
                party: Party::Bob,
            });
        };
        let (outcome, rest) = pair.measure_x(0, rng)?;
        self.shares[index] = Share::AfterBob(rest);
        Ok(outcome)
    }

    pub fn take_arbitrator(&mut self, index: usize) -> Result<StateVector, ProtocolError> {
        match self.shares.get_mut(index) {
            Some(slot @ Share::AfterBob(_)) => match std::mem::replace(slot, Share::Spent) {
                Share::AfterBob(s) => Ok(s),
                _ => unreachable!(),
            },
            _ => Err(ProtocolError::MissingShare {
                index,
                party: Party::Arbitrator,
            }),
        }
    }
}

fn bits_of_x(xs: &[XOutcome]) -> BitString {
    BitString::new(xs.iter().map(|x| x.bit() == 1).collect())
}

fn x_of_bits(bits: &BitString) -> Vec<XOutcome> {
    bits.as_slice()
        .iter()
        .map(|&b| XOutcome::from_bit(b as u8))
        .collect()
}

/// `K_b` bits that encrypt `y_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct RequestPads {
    pub m_b: BitString,
    pub sig_classical: BitString,
    pub sig_quantum: BitString,
    pub message: BitString,
}

impl RequestPads {
    pub fn bits(n: usize) -> usize {
        7 * n
    }

    pub fn from_key(k_b: &KeyMaterial, n: usize) -> Result<Self, CryptoError> {
        let mut c = k_b.cursor();
        Ok(Self {
            m_b: c.take(n)?,
            sig_classical: c.take(2 * n)?,
            sig_quantum: c.take(2 * n)?,
            message: c.take(2 * n)?,
        })
    }
}

/// `K_b` bits that encrypt `y_tb`; they follow the request pads.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplyPads {
    pub m_a: BitString,
    pub m_b: BitString,
    pub m_t: BitString,
    pub gamma: BitString,
    pub sig_classical: BitString,
    pub sig_quantum: BitString,
    pub particle: BitString,
    pub message: BitString,
}

impl ReplyPads {
    pub fn bits(n: usize) -> usize {
        12 * n + 1
    }

    pub fn from_key(k_b: &KeyMaterial, n: usize) -> Result<Self, CryptoError> {
        let mut c = k_b.cursor();
        c.take(RequestPads::bits(n))?;
        Ok(Self {
            m_a: c.take(2 * n)?,
            m_b: c.take(n)?,
            m_t: c.take(n)?,
            gamma: c.take(1)?,
            sig_classical: c.take(2 * n)?,
            sig_quantum: c.take(2 * n)?,
            particle: c.take(2 * n)?,
            message: c.take(2 * n)?,
        })
    }
}

/// `y_b = K_b(M_b, |S>, |P>)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BobRequest {
    pub enc_m_b: BitString,
    pub signature: SignaturePackage,
    pub enc_message: StateVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpenedRequest {
    pub m_b: Vec<XOutcome>,
    /// Still under Alice's key.
    pub signature: SignaturePackage,
    pub message: StateVector,
}

impl BobRequest {
    pub fn open(&self, k_b: &KeyMaterial, n: usize) -> Result<OpenedRequest, ProtocolError> {
        let inner = || -> Result<OpenedRequest, CryptoError> {
            let pads = RequestPads::from_key(k_b, n)?;
            if self.enc_m_b.len() != n || self.enc_message.qubit_count() != n {
                return Err(CryptoError::DimensionMismatch {
                    transform: n,
                    state: self.enc_message.qubit_count(),
                });
            }
            Ok(OpenedRequest {
                m_b: x_of_bits(&crypto::classical_decrypt(&self.enc_m_b, &pads.m_b)?),
                signature: self.signature.unseal(&pads.sig_classical, &pads.sig_quantum)?,
                message: crypto::qotp_decrypt(&self.enc_message, &pads.message)?,
            })
        };
        inner().map_err(ProtocolError::UndecryptableRequest)
    }
}

/// The arbitrator's answer `y_tb`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArbitratorReply {
    pub enc_m_a: BitString,
    pub enc_m_b: BitString,
    pub enc_m_t: Option<BitString>,
    pub enc_gamma: BitString,
    pub signature: SignaturePackage,
    pub mt_particle: Option<QuantumRegister>,
    /// Present only when Bob has no description of the message.
    pub message: Option<QuantumRegister>,
    /// The arbitrator already applied the Pauli frame to his particle.
    pub particle_corrected: bool,
}

/// What the arbitrator reveals in place of `M_t`.
#[derive(Clone, Debug, PartialEq)]
pub enum MtPayload {
    Outcomes(Vec<XOutcome>),
    Particle(QuantumRegister),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpenedReply {
    pub m_a: Vec<BellOutcome>,
    pub m_b: Vec<XOutcome>,
    pub m_t: MtPayload,
    pub gamma: u8,
    pub message: Option<QuantumRegister>,
    pub particle_corrected: bool,
}

impl ArbitratorReply {
    pub fn open(&self, k_b: &KeyMaterial, n: usize) -> Result<OpenedReply, ProtocolError> {
        let inner = || -> Result<OpenedReply, ProtocolError> {
            let pads = ReplyPads::from_key(k_b, n)?;
            let m_t = match (&self.enc_m_t, &self.mt_particle) {
                (Some(bits), None) => {
                    MtPayload::Outcomes(x_of_bits(&crypto::classical_decrypt(bits, &pads.m_t)?))
                }
                (None, Some(reg)) => MtPayload::Particle(reg.qotp_decrypt(&pads.particle)?),
                _ => {
                    return Err(CryptoError::PadLength {
                        expected: n,
                        got: 0,
                    }
                    .into())
                }
            };
            let message = self
                .message
                .as_ref()
                .map(|m| m.qotp_decrypt(&pads.message))
                .transpose()?;
            let m_a = crypto::classical_decrypt(&self.enc_m_a, &pads.m_a)?;
            if m_a.len() != 2 * n || self.enc_m_b.len() != n {
                return Err(CryptoError::PadLength {
                    expected: 2 * n,
                    got: m_a.len(),
                }
                .into());
            }
            Ok(OpenedReply {
                m_a: m_a.to_bell_outcomes(),
                m_b: x_of_bits(&crypto::classical_decrypt(&self.enc_m_b, &pads.m_b)?),
                m_t,
                gamma: crypto::classical_decrypt(&self.enc_gamma, &pads.gamma)?.bit(0) as u8,
                message,
                particle_corrected: self.particle_corrected,
            })
        };
        inner().map_err(|e| match e {
            ProtocolError::Crypto(c) => ProtocolError::UndecryptableReply(c),
            ProtocolError::Qsim(q) => ProtocolError::UndecryptableReply(q.into()),
            other => other,
        })
    }
}

/// Alice's output of the signing phase.
#[derive(Clone, Debug)]
pub struct Signed {
    pub bell: Vec<BellOutcome>,
    pub signature: SignaturePackage,
    pub transmitted: StateVector,
}

/// Signing phase: Bell-measure a copy of every message qubit with Alice's
/// GHZ share, then sign and encrypt.
pub fn alice_sign<R: Rng + ?Sized>(
    message: &ProductMessage,
    k_a: &KeyMaterial,
    model: SigningModel,
    ghz: &mut GhzStore,
    rng: &mut R,
) -> Result<Signed, ProtocolError> {
    let n = message.len();
    if ghz.len() != n {
        return Err(ProtocolError::QubitCount {
            expected: ghz.len(),
            got: n,
        });
    }
    let bell = message
        .qubits()
        .iter()
        .enumerate()
        .map(|(i, p)| ghz.alice_bell_measure(i, p, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let layout = SigningKeyLayout::new(n, model);
    let transform = crypto::derive_signing_transform(k_a, n, model)?;
    let p = message.register();
    let r = crypto::sign_state(&p, &transform)?;
    let signature = crypto::make_signature(&bell, &r, k_a, &layout)?;
    Ok(Signed {
        bell,
        signature,
        transmitted: p,
    })
}

/// Bob's first step: measure his GHZ shares and wrap everything in `y_b`.
pub fn bob_receive_and_forward<R: Rng + ?Sized>(
    message: &StateVector,
    signature: &SignaturePackage,
    ghz: &mut GhzStore,
    k_b: &KeyMaterial,
    rng: &mut R,
) -> Result<(BobRequest, Vec<XOutcome>), ProtocolError> {
    let n = ghz.len();
    if message.qubit_count() != n {
        return Err(ProtocolError::QubitCount {
            expected: n,
            got: message.qubit_count(),
        });
    }
    let m_b = (0..n)
        .map(|i| ghz.bob_measure_x(i, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let pads = RequestPads::from_key(k_b, n)?;
    let request = BobRequest {
        enc_m_b: crypto::classical_encrypt(&bits_of_x(&m_b), &pads.m_b)?,
        signature: signature.seal(&pads.sig_classical, &pads.sig_quantum)?,
        enc_message: crypto::qotp_encrypt(message, &pads.message)?,
    };
    Ok((request, m_b))
}

/// The arbitrator's contribution to the run.
#[derive(Clone, Debug)]
pub struct ArbitratorOutcome {
    pub reply: ArbitratorReply,
    pub m_a: Vec<BellOutcome>,
    pub m_t: Option<Vec<XOutcome>>,
    pub gamma: u8,
}

fn frame_correct(
    register: &QuantumRegister,
    bell: &[BellOutcome],
    xs: &[XOutcome],
    frame: &PauliFrame,
) -> Result<QuantumRegister, ProtocolError> {
    register.map_state(|s, qubits| {
        let mut out = s.clone();
        for (i, &q) in qubits.iter().enumerate() {
            out = out.apply_pauli(frame.correction(bell[i], xs[i]), q)?;
        }
        Ok(out)
    })
}

fn measure_x_all<R: Rng + ?Sized>(
    register: &QuantumRegister,
    rng: &mut R,
) -> Result<Vec<XOutcome>, ProtocolError> {
    // highest index first so the remaining indices stay valid
    let mut order: Vec<(usize, usize)> = register.qubits().iter().copied().enumerate().collect();
    order.sort_by_key(|&(_, q)| std::cmp::Reverse(q));
    let mut state = register.joint_state().clone();
    let mut out = vec![XOutcome::PlusX; register.len()];
    for (slot, q) in order {
        let (x, rest) = state.measure_x(q, rng)?;
        out[slot] = x;
        state = rest;
    }
    Ok(out)
}

/// Run the comparison between two registers that live in separate joint
/// states. Returns the verdict and both registers re-embedded in the
/// post-measurement state.
fn compare_registers<R: Rng + ?Sized>(
    a: &QuantumRegister,
    b: &QuantumRegister,
    mode: comparison::ComparisonMode,
    rng: &mut R,
) -> Result<(Verdict, QuantumRegister, QuantumRegister), ProtocolError> {
    if a.len() != b.len() {
        return Err(ProtocolError::QubitCount {
            expected: a.len(),
            got: b.len(),
        });
    }
    let offset = a.joint_state().qubit_count();
    let joint = qsim::tensor(a.joint_state(), b.joint_state())?;
    let pairs: Vec<(usize, usize)> = a
        .qubits()
        .iter()
        .zip(b.qubits())
        .map(|(&x, &y)| (x, offset + y))
        .collect();
    let result = comparison::compare_pairs(&joint, &pairs, mode, rng)?;
    let a_out = QuantumRegister::embedded(result.post_state.clone(), a.qubits().to_vec())?;
    let b_out = QuantumRegister::embedded(
        result.post_state,
        b.qubits().iter().map(|&y| offset + y).collect(),
    )?;
    Ok((result.verdict, a_out, b_out))
}

/// Verification phase at the arbitrator: decrypt `y_b`, rebuild `|R'>`,
/// compare it with `|R>`, then assemble `y_tb`.
pub fn arbitrator_verify<R: Rng + ?Sized>(
    y_b: &BobRequest,
    k_a: &KeyMaterial,
    k_b: &KeyMaterial,
    ghz: &mut GhzStore,
    config: &ProtocolConfig,
    frame: &PauliFrame,
    rng: &mut R,
) -> Result<ArbitratorOutcome, ProtocolError> {
    let n = config.qubits;
    let variant = config.variant;
    let opened = y_b.open(k_b, n)?;
    let layout = SigningKeyLayout::new(n, variant.key_model);
    let (bell, r) = crypto::open_signature(&opened.signature, k_a, &layout)?;
    let transform = crypto::derive_signing_transform(k_a, n, variant.key_model)?;

    let particles: Vec<StateVector> = (0..n)
        .map(|i| ghz.take_arbitrator(i))
        .collect::<Result<_, _>>()?;
    let mut particle = QuantumRegister::plain(qsim::tensor_all(&particles)?);
    let mut message = QuantumRegister::plain(opened.message);
    let mut particle_corrected = false;

    let source = match variant.r_prime_source {
        RPrimeSource::FromMessageP => &message,
        RPrimeSource::FromGhzParticle => {
            particle = frame_correct(&particle, &bell, &opened.m_b, frame)?;
            particle_corrected = true;
            &particle
        }
    };
    let r_prime = source.transform(&transform)?;
    let (verdict, _, r_prime_after) = compare_registers(
        &QuantumRegister::plain(r),
        &r_prime,
        variant.comparison_mode,
        rng,
    )?;
    let gamma = u8::from(verdict == Verdict::PossiblySame);
    if !config.idealized_comparison {
        let restored = r_prime_after.transform(&transform.inverse())?;
        match variant.r_prime_source {
            RPrimeSource::FromMessageP => message = restored,
            RPrimeSource::FromGhzParticle => particle = restored,
        }
    }

    let pads = ReplyPads::from_key(k_b, n)?;
    let (m_t, enc_m_t, mt_particle) = match variant.m_t_mode {
        MtMode::MeasureX => {
            let xs = measure_x_all(&particle, rng)?;
            let enc = crypto::classical_encrypt(&bits_of_x(&xs), &pads.m_t)?;
            (Some(xs), Some(enc), None)
        }
        MtMode::ForwardParticle => (None, None, Some(particle.qotp_encrypt(&pads.particle)?)),
    };
    let message_out = match variant.message_knowledge {
        MessageKnowledge::AliceOnly => Some(message.qotp_encrypt(&pads.message)?),
        MessageKnowledge::KnownToAll => None,
    };
    let reply = ArbitratorReply {
        enc_m_a: crypto::classical_encrypt(&BitString::from_bell_outcomes(&bell), &pads.m_a)?,
        enc_m_b: crypto::classical_encrypt(&bits_of_x(&opened.m_b), &pads.m_b)?,
        enc_m_t,
        enc_gamma: crypto::classical_encrypt(&BitString::new(vec![gamma == 1]), &pads.gamma)?,
        signature: opened
            .signature
            .seal(&pads.sig_classical, &pads.sig_quantum)?,
        mt_particle,
        message: message_out,
        particle_corrected,
    };
    Ok(ArbitratorOutcome {
        reply,
        m_a: bell,
        m_t,
        gamma,
    })
}

/// Bob's final decision.
#[derive(Clone, Debug)]
pub struct FinalDecision {
    pub verdict: FinalVerdict,
    pub gamma: u8,
    /// Bob's reconstruction `|P'>` of the message; `None` when `gamma = 0`.
    pub candidate: Option<QuantumRegister>,
}

/// Bob's reconstruction of the message from `M_t` and the Pauli frame.
pub fn bob_candidate(
    reply: &OpenedReply,
    frame: &PauliFrame,
) -> Result<QuantumRegister, ProtocolError> {
    match &reply.m_t {
        MtPayload::Outcomes(xs) => {
            let mut qubits = Vec::with_capacity(xs.len());
            for (i, x) in xs.iter().enumerate() {
                let mut q = x.state();
                if !reply.particle_corrected {
                    q = q.apply_pauli(frame.correction(reply.m_a[i], reply.m_b[i]), 0)?;
                }
                qubits.push(q);
            }
            Ok(QuantumRegister::plain(qsim::tensor_all(&qubits)?))
        }
        MtPayload::Particle(reg) if reply.particle_corrected => Ok(reg.clone()),
        MtPayload::Particle(reg) => frame_correct(reg, &reply.m_a, &reply.m_b, frame),
    }
}

/// Stop at `gamma = 0`; otherwise rebuild `|P'>` and compare it with the
/// reference copy of the message.
pub fn bob_final_verify<R: Rng + ?Sized>(
    y_tb: &ArbitratorReply,
    reference: Option<&ProductMessage>,
    k_b: &KeyMaterial,
    variant: &ProtocolVariant,
    frame: &PauliFrame,
    rng: &mut R,
) -> Result<FinalDecision, ProtocolError> {
    let n = y_tb.enc_m_b.len();
    let opened = y_tb.open(k_b, n)?;
    if opened.gamma == 0 {
        return Ok(FinalDecision {
            verdict: FinalVerdict::Rejected,
            gamma: 0,
            candidate: None,
        });
    }
    let candidate = bob_candidate(&opened, frame)?;
    let reference = match variant.message_knowledge {
        MessageKnowledge::KnownToAll => {
            QuantumRegister::plain(reference.ok_or(ProtocolError::MissingReference)?.register())
        }
        MessageKnowledge::AliceOnly => opened.message.clone().ok_or(ProtocolError::MissingMessage)?,
    };
    let (verdict, _, _) = compare_registers(&candidate, &reference, variant.comparison_mode, rng)?;
    Ok(FinalDecision {
        verdict: match verdict {
            Verdict::PossiblySame => FinalVerdict::Accepted,
            Verdict::DefinitelyDifferent => FinalVerdict::Rejected,
        },
        gamma: 1,
        candidate: Some(candidate),
    })
}
