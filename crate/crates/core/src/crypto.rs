//! Classical key material, keyed signing unitaries and one-time pads.
//!
//! Keys are classical bitstrings shared between one party and the arbitrator.
//! A signing key is consumed in a fixed order: signing-transform bits first,
//! then the quantum pad for the signature register, then the classical pad for
//! the Bell outcomes. The slices never overlap.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::qsim::{self, BellOutcome, Matrix, PauliOp, QsimError, StateVector, TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CryptoError {
    #[error("key holds {available} bits but {needed} are required")]
    KeyTooShort { needed: usize, available: usize },
    #[error("pad has {got} bits, expected {expected}")]
    PadLength { expected: usize, got: usize },
    #[error("transform acts on {transform} qubits but the state has {state}")]
    DimensionMismatch { transform: usize, state: usize },
    #[error("invalid hex key: {0}")]
    BadHex(String),
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// A classical bitstring. Serialized as a string of `0`/`1` characters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random::<bool>()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// Pack the first 64 bits (most significant first) into an integer.
    pub fn to_u64(&self) -> u64 {
        self.0
            .iter()
            .take(64)
            .fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn concat(parts: &[&BitString]) -> Self {
        Self(parts.iter().flat_map(|p| p.0.iter().copied()).collect())
    }

    pub fn from_bell_outcomes(outcomes: &[BellOutcome]) -> Self {
        Self(
            outcomes
                .iter()
                .flat_map(|o| {
                    let (p, s) = o.bits();
                    [p == 1, s == 1]
                })
                .collect(),
        )
    }

    /// Inverse of [`BitString::from_bell_outcomes`]; ignores a trailing odd bit.
    pub fn to_bell_outcomes(&self) -> Vec<BellOutcome> {
        self.0
            .chunks_exact(2)
            .map(|c| BellOutcome::from_bits(c[0] as u8, c[1] as u8))
            .collect()
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for BitString {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(format!("unexpected character {other:?} in bitstring")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitString)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyOwner {
    /// `K_a`, shared by Alice and the arbitrator.
    AliceArbitrator,
    /// `K_b`, shared by Bob and the arbitrator.
    BobArbitrator,
}

/// Pre-shared classical key. Stored byte-aligned; hex on the wire.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyMaterial {
    #[serde(with = "hex_bytes")]
    bytes: Vec<u8>,
    owner: KeyOwner,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

impl KeyMaterial {
    pub fn from_bytes(owner: KeyOwner, bytes: Vec<u8>) -> Self {
        Self { bytes, owner }
    }

    pub fn from_hex(owner: KeyOwner, text: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(text).map_err(|e| CryptoError::BadHex(e.to_string()))?;
        Ok(Self { bytes, owner })
    }

    /// Fresh uniformly random key holding at least `bits` bits.
    pub fn random<R: Rng + ?Sized>(owner: KeyOwner, bits: usize, rng: &mut R) -> Self {
        let mut bytes = vec![0u8; bits.div_ceil(8)];
        rng.fill(bytes.as_mut_slice());
        Self { bytes, owner }
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn owner(&self) -> KeyOwner {
        self.owner
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn bit(&self, i: usize) -> bool {
        (self.bytes[i / 8] >> (7 - i % 8)) & 1 == 1
    }

    /// Bits `[offset, offset + len)`.
    pub fn slice(&self, offset: usize, len: usize) -> Result<BitString, CryptoError> {
        let needed = offset + len;
        if needed > self.bit_len() {
            return Err(CryptoError::KeyTooShort {
                needed,
                available: self.bit_len(),
            });
        }
        Ok(BitString((offset..needed).map(|i| self.bit(i)).collect()))
    }

    /// Sequential reader over disjoint slices of this key.
    pub fn cursor(&self) -> KeyCursor<'_> {
        KeyCursor {
            key: self,
            offset: 0,
        }
    }
}

pub struct KeyCursor<'a> {
    key: &'a KeyMaterial,
    offset: usize,
}

impl KeyCursor<'_> {
    pub fn take(&mut self, len: usize) -> Result<BitString, CryptoError> {
        let bits = self.key.slice(self.offset, len)?;
        self.offset += len;
        Ok(bits)
    }

    pub fn position(&self) -> usize {
        self.offset
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SigningModel {
    /// One 2x2 unitary per message qubit, chosen from `{I, H, S, HS}`.
    PerQubitProduct,
    /// One Haar-distributed unitary on the whole register, seeded by the key.
    GeneralUnitary,
}

/// Bit budget of a signing key for one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SigningKeyLayout {
    pub qubits: usize,
    pub model: SigningModel,
}

impl SigningKeyLayout {
    pub const GENERAL_SEED_BITS: usize = 64;

    pub fn new(qubits: usize, model: SigningModel) -> Self {
        Self { qubits, model }
    }

    pub fn transform_bits(&self) -> usize {
        match self.model {
            SigningModel::PerQubitProduct => 2 * self.qubits,
            SigningModel::GeneralUnitary => Self::GENERAL_SEED_BITS,
        }
    }

    pub fn quantum_pad_offset(&self) -> usize {
        self.transform_bits()
    }

    pub fn classical_pad_offset(&self) -> usize {
        self.quantum_pad_offset() + 2 * self.qubits
    }

    pub fn total_bits(&self) -> usize {
        self.classical_pad_offset() + 2 * self.qubits
    }
}

/// The keyed unitary `M_K`.
#[derive(Clone, Debug, PartialEq)]
pub struct SigningTransform {
    model: SigningModel,
    unitaries: Vec<Matrix>,
    qubits: usize,
}

impl SigningTransform {
    pub fn model(&self) -> SigningModel {
        self.model
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn unitaries(&self) -> &[Matrix] {
        &self.unitaries
    }

    pub fn identity(qubits: usize) -> Self {
        Self {
            model: SigningModel::PerQubitProduct,
            unitaries: vec![Matrix::identity(2); qubits],
            qubits,
        }
    }

    pub fn from_per_qubit(unitaries: Vec<Matrix>) -> Result<Self, CryptoError> {
        if unitaries.iter().any(|u| u.dim() != 2 || !u.is_unitary(TOLERANCE)) {
            return Err(QsimError::NotUnitary.into());
        }
        Ok(Self {
            model: SigningModel::PerQubitProduct,
            qubits: unitaries.len(),
            unitaries,
        })
    }

    /// The full `2^n x 2^n` matrix.
    pub fn full_matrix(&self) -> Matrix {
        match self.model {
            SigningModel::GeneralUnitary => self.unitaries[0].clone(),
            SigningModel::PerQubitProduct => self
                .unitaries
                .iter()
                .skip(1)
                .fold(self.unitaries[0].clone(), |acc, u| acc.kron(u)),
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            model: self.model,
            unitaries: self.unitaries.iter().map(Matrix::adjoint).collect(),
            qubits: self.qubits,
        }
    }

    /// Apply the transform to the logical register living at `qubits` of `state`.
    pub fn apply_on(&self, state: &StateVector, qubits: &[usize]) -> Result<StateVector, CryptoError> {
        if qubits.len() != self.qubits {
            return Err(CryptoError::DimensionMismatch {
                transform: self.qubits,
                state: qubits.len(),
            });
        }
        match self.model {
            SigningModel::PerQubitProduct => {
                let mut out = state.clone();
                for (u, &q) in self.unitaries.iter().zip(qubits) {
                    out = out.apply_one_qubit(u, q)?;
                }
                Ok(out)
            }
            SigningModel::GeneralUnitary => Ok(state.apply_gate(&self.unitaries[0], qubits)?),
        }
    }
}

fn per_qubit_set(index: usize) -> Matrix {
    match index {
        0 => Matrix::identity(2),
        1 => qsim::hadamard(),
        2 => qsim::phase_s(),
        _ => qsim::hadamard().mul(&qsim::phase_s()),
    }
}

/// Select `M_K` from the leading bits of `key`.
pub fn derive_signing_transform(
    key: &KeyMaterial,
    qubits: usize,
    model: SigningModel,
) -> Result<SigningTransform, CryptoError> {
    let layout = SigningKeyLayout::new(qubits, model);
    let bits = key.slice(0, layout.transform_bits())?;
    let unitaries = match model {
        SigningModel::PerQubitProduct => bits
            .as_slice()
            .chunks_exact(2)
            .map(|c| per_qubit_set(2 * c[0] as usize + c[1] as usize))
            .collect(),
        SigningModel::GeneralUnitary => {
            let mut stream = ChaCha8Rng::seed_from_u64(bits.to_u64());
            vec![qsim::haar_random_unitary(1 << qubits, &mut stream)]
        }
    };
    Ok(SigningTransform {
        model,
        unitaries,
        qubits,
    })
}

/// `|R> = M_K |P>`.
pub fn sign_state(p: &StateVector, transform: &SigningTransform) -> Result<StateVector, CryptoError> {
    if p.qubit_count() != transform.qubits {
        return Err(CryptoError::DimensionMismatch {
            transform: transform.qubits,
            state: p.qubit_count(),
        });
    }
    let all: Vec<usize> = (0..p.qubit_count()).collect();
    transform.apply_on(p, &all)
}

fn check_pad(qubits: usize, pad: &BitString) -> Result<(), CryptoError> {
    if pad.len() != 2 * qubits {
        return Err(CryptoError::PadLength {
            expected: 2 * qubits,
            got: pad.len(),
        });
    }
    Ok(())
}

/// Quantum one-time pad on the qubits listed in `qubits`: `X^a Z^b` with
/// `(a, b) = (pad[2i], pad[2i+1])` on `qubits[i]`.
pub fn qotp_encrypt_on(
    state: &StateVector,
    qubits: &[usize],
    pad: &BitString,
) -> Result<StateVector, CryptoError> {
    check_pad(qubits.len(), pad)?;
    let mut out = state.clone();
    for (i, &q) in qubits.iter().enumerate() {
        if pad.bit(2 * i + 1) {
            out = out.apply_pauli(PauliOp::Z, q)?;
        }
        if pad.bit(2 * i) {
            out = out.apply_pauli(PauliOp::X, q)?;
        }
    }
    Ok(out)
}

pub fn qotp_decrypt_on(
    state: &StateVector,
    qubits: &[usize],
    pad: &BitString,
) -> Result<StateVector, CryptoError> {
    check_pad(qubits.len(), pad)?;
    let mut out = state.clone();
    for (i, &q) in qubits.iter().enumerate() {
        if pad.bit(2 * i) {
            out = out.apply_pauli(PauliOp::X, q)?;
        }
        if pad.bit(2 * i + 1) {
            out = out.apply_pauli(PauliOp::Z, q)?;
        }
    }
    Ok(out)
}

pub fn qotp_encrypt(state: &StateVector, pad: &BitString) -> Result<StateVector, CryptoError> {
    let all: Vec<usize> = (0..state.qubit_count()).collect();
    qotp_encrypt_on(state, &all, pad)
}

pub fn qotp_decrypt(state: &StateVector, pad: &BitString) -> Result<StateVector, CryptoError> {
    let all: Vec<usize> = (0..state.qubit_count()).collect();
    qotp_decrypt_on(state, &all, pad)
}

/// XOR with the leading `bits.len()` bits of `pad`.
pub fn classical_encrypt(bits: &BitString, pad: &BitString) -> Result<BitString, CryptoError> {
    if pad.len() < bits.len() {
        return Err(CryptoError::PadLength {
            expected: bits.len(),
            got: pad.len(),
        });
    }
    Ok(BitString(
        bits.0.iter().zip(&pad.0).map(|(a, b)| a ^ b).collect(),
    ))
}

pub fn classical_decrypt(bits: &BitString, pad: &BitString) -> Result<BitString, CryptoError> {
    classical_encrypt(bits, pad)
}

/// The signature `|S>`: encrypted Bell outcomes plus the padded `|R>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignaturePackage {
    pub enc_bell: BitString,
    pub enc_state: StateVector,
    pub qubit_count: usize,
}

impl SignaturePackage {
    /// Add (or, applied again with the same pads, strip) an outer layer of
    /// encryption.
    pub fn seal(&self, classical_pad: &BitString, quantum_pad: &BitString) -> Result<Self, CryptoError> {
        Ok(Self {
            enc_bell: classical_encrypt(&self.enc_bell, classical_pad)?,
            enc_state: qotp_encrypt(&self.enc_state, quantum_pad)?,
            qubit_count: self.qubit_count,
        })
    }

    pub fn unseal(&self, classical_pad: &BitString, quantum_pad: &BitString) -> Result<Self, CryptoError> {
        Ok(Self {
            enc_bell: classical_decrypt(&self.enc_bell, classical_pad)?,
            enc_state: qotp_decrypt(&self.enc_state, quantum_pad)?,
            qubit_count: self.qubit_count,
        })
    }
}

pub fn make_signature(
    bell: &[BellOutcome],
    r: &StateVector,
    key: &KeyMaterial,
    layout: &SigningKeyLayout,
) -> Result<SignaturePackage, CryptoError> {
    let n = layout.qubits;
    if bell.len() != n || r.qubit_count() != n {
        return Err(CryptoError::DimensionMismatch {
            transform: n,
            state: r.qubit_count(),
        });
    }
    let qpad = key.slice(layout.quantum_pad_offset(), 2 * n)?;
    let cpad = key.slice(layout.classical_pad_offset(), 2 * n)?;
    Ok(SignaturePackage {
        enc_bell: classical_encrypt(&BitString::from_bell_outcomes(bell), &cpad)?,
        enc_state: qotp_encrypt(r, &qpad)?,
        qubit_count: n,
    })
}

pub fn open_signature(
    package: &SignaturePackage,
    key: &KeyMaterial,
    layout: &SigningKeyLayout,
) -> Result<(Vec<BellOutcome>, StateVector), CryptoError> {
    let n = layout.qubits;
    if package.qubit_count != n || package.enc_state.qubit_count() != n {
        return Err(CryptoError::DimensionMismatch {
            transform: n,
            state: package.enc_state.qubit_count(),
        });
    }
    let qpad = key.slice(layout.quantum_pad_offset(), 2 * n)?;
    let cpad = key.slice(layout.classical_pad_offset(), 2 * n)?;
    let bell = classical_decrypt(&package.enc_bell, &cpad)?.to_bell_outcomes();
    Ok((bell, qotp_decrypt(&package.enc_state, &qpad)?))
}
