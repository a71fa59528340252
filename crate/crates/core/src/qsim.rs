//! Pure-state qubit simulation.
//!
//! Registers are stored as dense amplitude vectors. Qubit 0 is the most
//! significant bit of a basis index, so `tensor(a, b)` places `a`'s qubits
//! first. Every operation returns a new value; measurements remove the
//! measured qubits from the returned register.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Absolute tolerance for amplitude, norm and unitarity checks.
pub const TOLERANCE: f64 = 1e-10;

/// Hard ceiling on register size. Dense simulation beyond this is not useful here.
pub const MAX_QUBITS: usize = 24;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("basis index {index} out of range for {qubits} qubits")]
    IndexOutOfRange { index: usize, qubits: usize },
    #[error("qubit {qubit} out of range for a {qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, qubits: usize },
    #[error("qubit {0} listed more than once")]
    RepeatedQubit(usize),
    #[error("a register needs at least one qubit")]
    NoQubits,
    #[error("register of {0} qubits exceeds the simulator limit")]
    TooManyQubits(usize),
    #[error("amplitude count {0} is not a power of two")]
    BadLength(usize),
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("matrix is not unitary within tolerance")]
    NotUnitary,
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix of dimension {dim} cannot act on {targets} qubits")]
    GateSize { dim: usize, targets: usize },
    #[error("measurement basis is not orthonormal and complete")]
    BadBasis,
}

/// A normalized pure state on `qubit_count` qubits.
///
/// The zero-qubit register (a single unit amplitude) is what remains after a
/// measurement consumes every qubit; it cannot be built directly.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    qubit_count: usize,
}

impl StateVector {
    /// Build a state from raw amplitudes, checking length and normalization.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, QsimError> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QsimError::BadLength(len));
        }
        let qubit_count = len.trailing_zeros() as usize;
        if qubit_count > MAX_QUBITS {
            return Err(QsimError::TooManyQubits(qubit_count));
        }
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > TOLERANCE {
            return Err(QsimError::NotNormalized(norm_sqr));
        }
        Ok(Self {
            amplitudes,
            qubit_count,
        })
    }

    /// Normalize arbitrary nonzero amplitudes into a state.
    pub fn normalized(mut amplitudes: Vec<Complex64>) -> Result<Self, QsimError> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm <= TOLERANCE {
            return Err(QsimError::NotNormalized(norm * norm));
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Self::from_amplitudes(amplitudes)
    }

    fn from_parts_unchecked(amplitudes: Vec<Complex64>) -> Self {
        let qubit_count = amplitudes.len().trailing_zeros() as usize;
        Self {
            amplitudes,
            qubit_count,
        }
    }

    /// One-qubit state `alpha|0> + beta|1>`.
    pub fn qubit(alpha: Complex64, beta: Complex64) -> Result<Self, QsimError> {
        Self::from_amplitudes(vec![alpha, beta])
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_count
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<(), QsimError> {
        if qubit >= self.qubit_count {
            return Err(QsimError::QubitOutOfRange {
                qubit,
                qubits: self.qubit_count,
            });
        }
        Ok(())
    }

    fn check_targets(&self, targets: &[usize]) -> Result<(), QsimError> {
        for (i, &t) in targets.iter().enumerate() {
            self.check_qubit(t)?;
            if targets[..i].contains(&t) {
                return Err(QsimError::RepeatedQubit(t));
            }
        }
        Ok(())
    }

    fn shift(&self, qubit: usize) -> usize {
        self.qubit_count - 1 - qubit
    }

    /// Apply a one-qubit gate to `target`.
    pub fn apply_one_qubit(&self, gate: &Matrix, target: usize) -> Result<Self, QsimError> {
        self.apply_gate(gate, &[target])
    }

    /// Apply a unitary acting on `targets`; `targets[0]` is the gate's most
    /// significant qubit.
    pub fn apply_gate(&self, gate: &Matrix, targets: &[usize]) -> Result<Self, QsimError> {
        self.check_targets(targets)?;
        if gate.dim() != 1 << targets.len() {
            return Err(QsimError::GateSize {
                dim: gate.dim(),
                targets: targets.len(),
            });
        }
        if !gate.is_unitary(TOLERANCE) {
            return Err(QsimError::NotUnitary);
        }
        let offsets = self.target_offsets(targets);
        let mask: usize = offsets.iter().fold(0, |m, &o| m | o);
        let mut out = self.amplitudes.clone();
        let mut gathered = vec![ZERO; offsets.len()];
        for base in (0..self.dim()).filter(|i| i & mask == 0) {
            for (g, &o) in gathered.iter_mut().zip(&offsets) {
                *g = self.amplitudes[base | o];
            }
            for (row, &o) in offsets.iter().enumerate() {
                out[base | o] = gathered
                    .iter()
                    .enumerate()
                    .map(|(col, &v)| gate.get(row, col) * v)
                    .sum();
            }
        }
        Ok(Self::from_parts_unchecked(out))
    }

    /// Apply a unitary on the whole register.
    pub fn apply_unitary(&self, unitary: &Matrix) -> Result<Self, QsimError> {
        let targets: Vec<usize> = (0..self.qubit_count).collect();
        self.apply_gate(unitary, &targets)
    }

    pub fn apply_pauli(&self, pauli: PauliOp, target: usize) -> Result<Self, QsimError> {
        self.apply_one_qubit(&pauli.matrix(), target)
    }

    /// Basis offsets of every assignment of the target qubits, in gate order.
    fn target_offsets(&self, targets: &[usize]) -> Vec<usize> {
        let t = targets.len();
        (0..1usize << t)
            .map(|j| {
                targets.iter().enumerate().fold(0, |acc, (b, &q)| {
                    let bit = (j >> (t - 1 - b)) & 1;
                    acc | (bit << self.shift(q))
                })
            })
            .collect()
    }

    /// Contract `targets` against `vector` (i.e. apply `<vector|` on those
    /// qubits) and return the unnormalized residual on the other qubits.
    fn contract(&self, targets: &[usize], vector: &[Complex64]) -> Vec<Complex64> {
        let offsets = self.target_offsets(targets);
        let mask: usize = offsets.iter().fold(0, |m, &o| m | o);
        let rest: Vec<usize> = (0..self.qubit_count)
            .filter(|q| !targets.contains(q))
            .collect();
        let mut residual = vec![ZERO; 1 << rest.len()];
        for (r, slot) in residual.iter_mut().enumerate() {
            let base = rest.iter().enumerate().fold(0, |acc, (b, &q)| {
                let bit = (r >> (rest.len() - 1 - b)) & 1;
                acc | (bit << self.shift(q))
            });
            debug_assert_eq!(base & mask, 0);
            *slot = vector
                .iter()
                .zip(&offsets)
                .map(|(v, &o)| v.conj() * self.amplitudes[base | o])
                .sum();
        }
        residual
    }

    /// Projective measurement of `targets` in an orthonormal basis given as
    /// vectors over the target qubits. Returns the outcome index and the
    /// renormalized state of the remaining qubits.
    pub fn measure_in_basis<R: Rng + ?Sized>(
        &self,
        targets: &[usize],
        basis: &[Vec<Complex64>],
        rng: &mut R,
    ) -> Result<(usize, StateVector), QsimError> {
        self.check_targets(targets)?;
        let d = 1 << targets.len();
        if basis.len() != d || basis.iter().any(|v| v.len() != d) {
            return Err(QsimError::BadBasis);
        }
        let residuals: Vec<Vec<Complex64>> =
            basis.iter().map(|v| self.contract(targets, v)).collect();
        let probs: Vec<f64> = residuals
            .iter()
            .map(|r| r.iter().map(|a| a.norm_sqr()).sum())
            .collect();
        if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
            return Err(QsimError::BadBasis);
        }
        let outcome = sample_index(&probs, rng);
        let norm = probs[outcome].sqrt();
        let amplitudes = residuals[outcome].iter().map(|a| a / norm).collect();
        Ok((outcome, Self::from_parts_unchecked(amplitudes)))
    }

    /// Born probability of each basis vector on `targets`.
    pub fn outcome_probabilities(
        &self,
        targets: &[usize],
        basis: &[Vec<Complex64>],
    ) -> Result<Vec<f64>, QsimError> {
        self.check_targets(targets)?;
        Ok(basis
            .iter()
            .map(|v| {
                self.contract(targets, v)
                    .iter()
                    .map(|a| a.norm_sqr())
                    .sum()
            })
            .collect())
    }

    /// Post-selected state of the other qubits given that `targets` were
    /// found in `vector`. `None` when that outcome has zero probability.
    pub fn postselect(&self, targets: &[usize], vector: &[Complex64]) -> Option<StateVector> {
        self.check_targets(targets).ok()?;
        if vector.len() != 1 << targets.len() {
            return None;
        }
        let residual = self.contract(targets, vector);
        let p: f64 = residual.iter().map(|a| a.norm_sqr()).sum();
        if p <= TOLERANCE {
            return None;
        }
        let norm = p.sqrt();
        Some(Self::from_parts_unchecked(
            residual.into_iter().map(|a| a / norm).collect(),
        ))
    }

    pub fn measure_computational<R: Rng + ?Sized>(
        &self,
        target: usize,
        rng: &mut R,
    ) -> Result<(u8, StateVector), QsimError> {
        let basis = [vec![ONE, ZERO], vec![ZERO, ONE]];
        let (k, rest) = self.measure_in_basis(&[target], &basis, rng)?;
        Ok((k as u8, rest))
    }

    pub fn measure_x<R: Rng + ?Sized>(
        &self,
        target: usize,
        rng: &mut R,
    ) -> Result<(XOutcome, StateVector), QsimError> {
        let basis = [XOutcome::PlusX.vector(), XOutcome::MinusX.vector()];
        let (k, rest) = self.measure_in_basis(&[target], &basis, rng)?;
        Ok((XOutcome::from_bit(k as u8), rest))
    }

    /// Bell-basis measurement of the pair `(q1, q2)`, `q1` being the first
    /// qubit of each Bell vector.
    pub fn bell_measure<R: Rng + ?Sized>(
        &self,
        q1: usize,
        q2: usize,
        rng: &mut R,
    ) -> Result<(BellOutcome, StateVector), QsimError> {
        let basis: Vec<Vec<Complex64>> = BellOutcome::ALL.iter().map(|b| b.vector()).collect();
        let (k, rest) = self.measure_in_basis(&[q1, q2], &basis, rng)?;
        Ok((BellOutcome::ALL[k], rest))
    }

    /// Squared singular values of the split `qubit | rest`, largest first.
    /// The second entry vanishes exactly when the qubit is unentangled.
    pub fn qubit_schmidt_weights(&self, qubit: usize) -> Result<[f64; 2], QsimError> {
        self.check_qubit(qubit)?;
        let (row0, row1) = self.split_rows(qubit);
        let a: f64 = row0.iter().map(|z| z.norm_sqr()).sum();
        let d: f64 = row1.iter().map(|z| z.norm_sqr()).sum();
        let b: Complex64 = row0.iter().zip(&row1).map(|(x, y)| x * y.conj()).sum();
        let tr = a + d;
        let det = a * d - b.norm_sqr();
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        Ok([(tr + disc) / 2.0, ((tr - disc) / 2.0).max(0.0)])
    }

    fn split_rows(&self, qubit: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let bit = 1 << self.shift(qubit);
        let row0 = (0..self.dim())
            .filter(|i| i & bit == 0)
            .map(|i| self.amplitudes[i])
            .collect();
        let row1 = (0..self.dim())
            .filter(|i| i & bit == 0)
            .map(|i| self.amplitudes[i | bit])
            .collect();
        (row0, row1)
    }

    /// The pure state of `qubit` when it is unentangled from the rest.
    pub fn qubit_factor(&self, qubit: usize) -> Result<Option<StateVector>, QsimError> {
        if self.qubit_schmidt_weights(qubit)?[1] > TOLERANCE {
            return Ok(None);
        }
        let (row0, row1) = self.split_rows(qubit);
        let col = (0..row0.len())
            .max_by(|&i, &j| {
                let ni = row0[i].norm_sqr() + row1[i].norm_sqr();
                let nj = row0[j].norm_sqr() + row1[j].norm_sqr();
                ni.total_cmp(&nj)
            })
            .expect("register has at least one column");
        Ok(Some(StateVector::normalized(vec![row0[col], row1[col]])?))
    }

    /// Split a product state into its one-qubit factors (global phase is
    /// carried by the first factor). `None` if any qubit is entangled.
    pub fn factorize(&self) -> Option<Vec<StateVector>> {
        let mut factors = Vec::with_capacity(self.qubit_count);
        for q in 0..self.qubit_count {
            factors.push(self.qubit_factor(q).ok()??);
        }
        let rebuilt = tensor_all(&factors).ok()?;
        let overlap = inner_product(&rebuilt, self).ok()?;
        if (overlap.norm_sqr() - 1.0).abs() > TOLERANCE {
            return None;
        }
        let phase = overlap / overlap.norm();
        factors[0] = StateVector::from_parts_unchecked(
            factors[0].amplitudes.iter().map(|a| a * phase).collect(),
        );
        Some(factors)
    }
}

impl Serialize for StateVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            qubits: usize,
            amplitudes: Vec<[f64; 2]>,
        }
        Wire {
            qubits: self.qubit_count,
            amplitudes: self.amplitudes.iter().map(|a| [a.re, a.im]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            qubits: usize,
            amplitudes: Vec<[f64; 2]>,
        }
        let wire = Wire::deserialize(deserializer)?;
        let amps: Vec<Complex64> = wire
            .amplitudes
            .iter()
            .map(|[re, im]| Complex64::new(*re, *im))
            .collect();
        if amps.len() != 1 << wire.qubits {
            return Err(serde::de::Error::custom("amplitude count does not match qubits"));
        }
        if amps.len() == 1 {
            return Ok(StateVector::from_parts_unchecked(amps));
        }
        StateVector::from_amplitudes(amps).map_err(serde::de::Error::custom)
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc && p > 0.0 {
            return i;
        }
    }
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("at least one outcome has positive probability")
}

/// Dense square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "matrix must be square");
        Self {
            dim,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn from_columns(columns: &[Vec<Complex64>]) -> Self {
        let dim = columns.len();
        let mut data = vec![ZERO; dim * dim];
        for (c, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), dim, "matrix must be square");
            for (r, v) in col.iter().enumerate() {
                data[r * dim + c] = *v;
            }
        }
        Self { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = ONE;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut data = vec![ZERO; n * n];
        for r in 0..n {
            for c in 0..n {
                data[c * n + r] = self.data[r * n + c].conj();
            }
        }
        Self { dim: n, data }
    }

    pub fn mul(&self, other: &Matrix) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut data = vec![ZERO; n * n];
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == ZERO {
                    continue;
                }
                for c in 0..n {
                    data[r * n + c] += a * other.data[k * n + c];
                }
            }
        }
        Self { dim: n, data }
    }

    pub fn kron(&self, other: &Matrix) -> Self {
        let (a, b) = (self.dim, other.dim);
        let n = a * b;
        let mut data = vec![ZERO; n * n];
        for r1 in 0..a {
            for c1 in 0..a {
                let x = self.data[r1 * a + c1];
                for r2 in 0..b {
                    for c2 in 0..b {
                        data[(r1 * b + r2) * n + c1 * b + c2] = x * other.data[r2 * b + c2];
                    }
                }
            }
        }
        Self { dim: n, data }
    }

    /// Largest absolute entry of `self† self - I`.
    pub fn unitarity_error(&self) -> f64 {
        let prod = self.adjoint().mul(self);
        let id = Matrix::identity(self.dim);
        prod.data
            .iter()
            .zip(&id.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Hadamard gate.
pub fn hadamard() -> Matrix {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    Matrix::from_rows(vec![vec![h, h], vec![h, -h]])
}

/// Phase gate `diag(1, i)`.
pub fn phase_s() -> Matrix {
    Matrix::from_rows(vec![vec![ONE, ZERO], vec![ZERO, Complex64::i()]])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliOp {
    I,
    X,
    Y,
    Z,
}

impl PauliOp {
    pub const ALL: [PauliOp; 4] = [PauliOp::I, PauliOp::X, PauliOp::Y, PauliOp::Z];

    pub fn matrix(self) -> Matrix {
        let i = Complex64::i();
        match self {
            PauliOp::I => Matrix::identity(2),
            PauliOp::X => Matrix::from_rows(vec![vec![ZERO, ONE], vec![ONE, ZERO]]),
            PauliOp::Y => Matrix::from_rows(vec![vec![ZERO, -i], vec![i, ZERO]]),
            PauliOp::Z => Matrix::from_rows(vec![vec![ONE, ZERO], vec![ZERO, -ONE]]),
        }
    }
}

impl fmt::Display for PauliOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PauliOp::I => "I",
            PauliOp::X => "X",
            PauliOp::Y => "Y",
            PauliOp::Z => "Z",
        };
        f.write_str(s)
    }
}

/// Outcome of a Bell-basis measurement.
///
/// Labelling follows the convention in which the even-parity states carry the
/// Ψ name: `Ψ± = (|00> ± |11>)/√2` and `Φ± = (|01> ± |10>)/√2`. With the GHZ
/// state `(|000> + |111>)/√2`, outcome Ψ⁻ on (message, first GHZ qubit) leaves
/// `α|00> − β|11>` on the other two qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellOutcome {
    PsiPlus,
    PsiMinus,
    PhiPlus,
    PhiMinus,
}

impl BellOutcome {
    pub const ALL: [BellOutcome; 4] = [
        BellOutcome::PsiPlus,
        BellOutcome::PsiMinus,
        BellOutcome::PhiPlus,
        BellOutcome::PhiMinus,
    ];

    /// `(parity, phase)`: parity 1 means the odd-parity pair `|01>, |10>`.
    pub fn bits(self) -> (u8, u8) {
        match self {
            BellOutcome::PsiPlus => (0, 0),
            BellOutcome::PsiMinus => (0, 1),
            BellOutcome::PhiPlus => (1, 0),
            BellOutcome::PhiMinus => (1, 1),
        }
    }

    pub fn from_bits(parity: u8, phase: u8) -> Self {
        match (parity & 1, phase & 1) {
            (0, 0) => BellOutcome::PsiPlus,
            (0, _) => BellOutcome::PsiMinus,
            (_, 0) => BellOutcome::PhiPlus,
            _ => BellOutcome::PhiMinus,
        }
    }

    /// Amplitudes over the two measured qubits.
    pub fn vector(self) -> Vec<Complex64> {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let (parity, phase) = self.bits();
        let sign = if phase == 0 { h } else { -h };
        let mut v = vec![ZERO; 4];
        if parity == 0 {
            v[0b00] = h;
            v[0b11] = sign;
        } else {
            v[0b01] = h;
            v[0b10] = sign;
        }
        v
    }

    pub fn state(self) -> StateVector {
        StateVector::from_parts_unchecked(self.vector())
    }
}

impl fmt::Display for BellOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BellOutcome::PsiPlus => "Psi+",
            BellOutcome::PsiMinus => "Psi-",
            BellOutcome::PhiPlus => "Phi+",
            BellOutcome::PhiMinus => "Phi-",
        };
        f.write_str(s)
    }
}

/// Outcome of an x-basis measurement, `|±x> = (|0> ± |1>)/√2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum XOutcome {
    PlusX,
    MinusX,
}

impl XOutcome {
    pub const ALL: [XOutcome; 2] = [XOutcome::PlusX, XOutcome::MinusX];

    pub fn bit(self) -> u8 {
        match self {
            XOutcome::PlusX => 0,
            XOutcome::MinusX => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Self {
        if bit & 1 == 0 {
            XOutcome::PlusX
        } else {
            XOutcome::MinusX
        }
    }

    pub fn vector(self) -> Vec<Complex64> {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        match self {
            XOutcome::PlusX => vec![h, h],
            XOutcome::MinusX => vec![h, -h],
        }
    }

    pub fn state(self) -> StateVector {
        StateVector::from_parts_unchecked(self.vector())
    }
}

impl fmt::Display for XOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XOutcome::PlusX => "+x",
            XOutcome::MinusX => "-x",
        })
    }
}

pub fn new_basis_state(qubits: usize, index: usize) -> Result<StateVector, QsimError> {
    if qubits == 0 {
        return Err(QsimError::NoQubits);
    }
    if qubits > MAX_QUBITS {
        return Err(QsimError::TooManyQubits(qubits));
    }
    if index >= 1 << qubits {
        return Err(QsimError::IndexOutOfRange { index, qubits });
    }
    let mut amps = vec![ZERO; 1 << qubits];
    amps[index] = ONE;
    Ok(StateVector::from_parts_unchecked(amps))
}

/// `(|000> + |111>)/√2`.
pub fn ghz_state() -> StateVector {
    let mut amps = vec![ZERO; 8];
    amps[0] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    amps[7] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    StateVector::from_parts_unchecked(amps)
}

pub fn tensor(a: &StateVector, b: &StateVector) -> Result<StateVector, QsimError> {
    let qubits = a.qubit_count + b.qubit_count;
    if qubits > MAX_QUBITS {
        return Err(QsimError::TooManyQubits(qubits));
    }
    let amps = a
        .amplitudes
        .iter()
        .flat_map(|x| b.amplitudes.iter().map(move |y| x * y))
        .collect();
    Ok(StateVector::from_parts_unchecked(amps))
}

/// Tensor product of a non-empty list of registers, in order.
pub fn tensor_all(parts: &[StateVector]) -> Result<StateVector, QsimError> {
    let (first, rest) = parts.split_first().ok_or(QsimError::NoQubits)?;
    rest.iter().try_fold(first.clone(), |acc, p| tensor(&acc, p))
}

pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<Complex64, QsimError> {
    if a.qubit_count != b.qubit_count {
        return Err(QsimError::DimensionMismatch {
            left: a.qubit_count,
            right: b.qubit_count,
        });
    }
    Ok(a
        .amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// `|<a|b>|²`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64, QsimError> {
    Ok(inner_product(a, b)?.norm_sqr().min(1.0))
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

/// Haar-random pure state: normalized vector of complex Gaussians.
pub fn haar_random_state<R: Rng + ?Sized>(
    qubits: usize,
    rng: &mut R,
) -> Result<StateVector, QsimError> {
    if qubits == 0 {
        return Err(QsimError::NoQubits);
    }
    if qubits > MAX_QUBITS {
        return Err(QsimError::TooManyQubits(qubits));
    }
    loop {
        let amps: Vec<Complex64> = (0..1usize << qubits).map(|_| complex_normal(rng)).collect();
        if let Ok(s) = StateVector::normalized(amps) {
            return Ok(s);
        }
    }
}

/// Haar-random unitary of dimension `dim` via Gram-Schmidt on a complex
/// Ginibre matrix (equivalent to QR with a positive-diagonal R).
pub fn haar_random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix {
    let mut columns: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    while columns.len() < dim {
        let mut v: Vec<Complex64> = (0..dim).map(|_| complex_normal(rng)).collect();
        // two passes keep the columns orthogonal to machine precision
        for _ in 0..2 {
            for u in &columns {
                let proj: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= proj * y;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        columns.push(v.into_iter().map(|z| z / norm).collect());
    }
    Matrix::from_columns(&columns)
}

/// A state orthogonal to `state`: a Haar draw with the overlap removed.
pub fn orthogonal_state<R: Rng + ?Sized>(state: &StateVector, rng: &mut R) -> StateVector {
    if state.qubit_count == 1 {
        let a = state.amplitudes[0];
        let b = state.amplitudes[1];
        return StateVector::from_parts_unchecked(vec![-b.conj(), a.conj()]);
    }
    loop {
        let draw = haar_random_state(state.qubit_count, rng).expect("qubit count already valid");
        let overlap = inner_product(state, &draw).expect("same size");
        let amps: Vec<Complex64> = draw
            .amplitudes
            .iter()
            .zip(&state.amplitudes)
            .map(|(d, s)| d - overlap * s)
            .collect();
        if let Ok(s) = StateVector::normalized(amps) {
            return s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &StateVector, b: &StateVector) -> bool {
        a.qubit_count() == b.qubit_count()
            && a
                .amplitudes()
                .iter()
                .zip(b.amplitudes())
                .all(|(x, y)| (x - y).norm() < TOLERANCE)
    }

    #[test]
    fn basis_states() {
        assert_eq!(
            new_basis_state(1, 0).unwrap().amplitudes(),
            &[ONE, ZERO]
        );
        assert_eq!(
            new_basis_state(2, 3).unwrap().amplitudes(),
            &[ZERO, ZERO, ZERO, ONE]
        );
        let s = new_basis_state(3, 0).unwrap();
        assert_eq!(s.dim(), 8);
        assert_eq!(s.amplitudes()[0], ONE);
        assert!(matches!(
            new_basis_state(2, 4),
            Err(QsimError::IndexOutOfRange { .. })
        ));
        assert!(new_basis_state(0, 0).is_err());
    }

    #[test]
    fn ghz_amplitudes_and_marginal() {
        let g = ghz_state();
        for (i, a) in g.amplitudes().iter().enumerate() {
            let want = if i == 0 || i == 7 { FRAC_1_SQRT_2 } else { 0.0 };
            assert!((a - c(want, 0.0)).norm() < TOLERANCE);
        }
        assert!((fidelity(&g, &g).unwrap() - 1.0).abs() < TOLERANCE);
        let basis = [vec![ONE, ZERO], vec![ZERO, ONE]];
        let p = g.outcome_probabilities(&[0], &basis).unwrap();
        assert!((p[0] - 0.5).abs() < TOLERANCE && (p[1] - 0.5).abs() < TOLERANCE);
    }

    #[test]
    fn ghz_collapse_on_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        loop {
            let (bit, rest) = ghz_state().measure_computational(0, &mut rng).unwrap();
            if bit == 0 {
                assert!(close(&rest, &new_basis_state(2, 0).unwrap()));
                break;
            }
            assert!(close(&rest, &new_basis_state(2, 3).unwrap()));
        }
    }

    #[test]
    fn pauli_z_action() {
        let zero = new_basis_state(1, 0).unwrap();
        let one = new_basis_state(1, 1).unwrap();
        assert!(close(&zero.apply_pauli(PauliOp::Z, 0).unwrap(), &zero));
        let minus_one = StateVector::qubit(ZERO, -ONE).unwrap();
        assert!(close(&one.apply_pauli(PauliOp::Z, 0).unwrap(), &minus_one));
        let p = StateVector::qubit(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
        let twice = p
            .apply_pauli(PauliOp::Z, 0)
            .unwrap()
            .apply_pauli(PauliOp::Z, 0)
            .unwrap();
        assert!(close(&twice, &p));
    }

    #[test]
    fn paulis_square_to_identity() {
        for p in PauliOp::ALL {
            let m = p.matrix();
            assert!(m.mul(&m).max_abs_diff(&Matrix::identity(2)) < TOLERANCE);
        }
    }

    #[test]
    fn gate_errors() {
        let s = new_basis_state(2, 0).unwrap();
        assert!(matches!(
            s.apply_one_qubit(&hadamard(), 2),
            Err(QsimError::QubitOutOfRange { .. })
        ));
        let bad = Matrix::from_rows(vec![vec![ONE, ONE], vec![ZERO, ONE]]);
        assert_eq!(s.apply_one_qubit(&bad, 0), Err(QsimError::NotUnitary));
        assert!(matches!(
            s.apply_gate(&Matrix::identity(4), &[0]),
            Err(QsimError::GateSize { .. })
        ));
        assert_eq!(
            s.apply_gate(&Matrix::identity(4), &[1, 1]),
            Err(QsimError::RepeatedQubit(1))
        );
    }

    #[test]
    fn tensor_examples() {
        let zero = new_basis_state(1, 0).unwrap();
        let one = new_basis_state(1, 1).unwrap();
        assert!(close(&tensor(&zero, &one).unwrap(), &new_basis_state(2, 1).unwrap()));
        let plus = XOutcome::PlusX.state();
        let t = tensor(&plus, &zero).unwrap();
        let h = c(FRAC_1_SQRT_2, 0.0);
        assert!(close(
            &t,
            &StateVector::from_amplitudes(vec![h, ZERO, h, ZERO]).unwrap()
        ));
    }

    #[test]
    fn gate_ordering_matches_tensor_ordering() {
        // H on qubit 0 of |00> gives |+>|0>
        let s = new_basis_state(2, 0).unwrap();
        let out = s.apply_one_qubit(&hadamard(), 0).unwrap();
        let want = tensor(&XOutcome::PlusX.state(), &new_basis_state(1, 0).unwrap()).unwrap();
        assert!(close(&out, &want));
    }

    #[test]
    fn measure_eigenstate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = new_basis_state(2, 0b01).unwrap();
        for _ in 0..20 {
            let (bit, rest) = one.measure_computational(1, &mut rng).unwrap();
            assert_eq!(bit, 1);
            assert!(close(&rest, &new_basis_state(1, 0).unwrap()));
        }
        let single = new_basis_state(1, 1).unwrap();
        let (bit, rest) = single.measure_computational(0, &mut rng).unwrap();
        assert_eq!(bit, 1);
        assert_eq!(rest.qubit_count(), 0);
    }

    #[test]
    fn measure_x_on_correlated_pair() {
        let (alpha, beta) = (c(0.6, 0.0), c(0.0, 0.8));
        let phi = StateVector::from_amplitudes(vec![alpha, ZERO, ZERO, -beta]).unwrap();
        let basis = [XOutcome::PlusX.vector(), XOutcome::MinusX.vector()];
        let p = phi.outcome_probabilities(&[0], &basis).unwrap();
        assert!((p[0] - 0.5).abs() < TOLERANCE);
        let plus = phi.postselect(&[0], &XOutcome::PlusX.vector()).unwrap();
        assert!(close(&plus, &StateVector::qubit(alpha, -beta).unwrap()));
        let minus = phi.postselect(&[0], &XOutcome::MinusX.vector()).unwrap();
        assert!(close(&minus, &StateVector::qubit(alpha, beta).unwrap()));
    }

    #[test]
    fn bell_eigenstates_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for b in BellOutcome::ALL {
            let (got, rest) = b.state().bell_measure(0, 1, &mut rng).unwrap();
            assert_eq!(got, b);
            assert_eq!(rest.qubit_count(), 0);
        }
        assert!(matches!(
            BellOutcome::PhiPlus.state().bell_measure(0, 0, &mut rng),
            Err(QsimError::RepeatedQubit(0))
        ));
    }

    #[test]
    fn bell_outcome_on_message_and_ghz() {
        let (alpha, beta) = (c(0.6, 0.0), c(0.0, 0.8));
        let p = StateVector::qubit(alpha, beta).unwrap();
        let joint = tensor(&p, &ghz_state()).unwrap();
        let basis: Vec<_> = BellOutcome::ALL.iter().map(|b| b.vector()).collect();
        for prob in joint.outcome_probabilities(&[0, 1], &basis).unwrap() {
            assert!((prob - 0.25).abs() < TOLERANCE);
        }
        let rest = joint
            .postselect(&[0, 1], &BellOutcome::PsiMinus.vector())
            .unwrap();
        let want = StateVector::from_amplitudes(vec![alpha, ZERO, ZERO, -beta]).unwrap();
        assert!((fidelity(&rest, &want).unwrap() - 1.0).abs() < TOLERANCE);
    }

    #[test]
    fn bell_bits_roundtrip() {
        for b in BellOutcome::ALL {
            let (p, s) = b.bits();
            assert_eq!(BellOutcome::from_bits(p, s), b);
        }
        for x in XOutcome::ALL {
            assert_eq!(XOutcome::from_bit(x.bit()), x);
        }
    }

    #[test]
    fn inner_products() {
        let zero = new_basis_state(1, 0).unwrap();
        let one = new_basis_state(1, 1).unwrap();
        assert!((inner_product(&zero, &zero).unwrap() - ONE).norm() < TOLERANCE);
        assert!(inner_product(&zero, &one).unwrap().norm() < TOLERANCE);
        let plus = XOutcome::PlusX.state();
        assert!((inner_product(&zero, &plus).unwrap() - c(FRAC_1_SQRT_2, 0.0)).norm() < TOLERANCE);
        assert!(fidelity(&zero, &one).unwrap() < TOLERANCE);
        assert!(matches!(
            fidelity(&zero, &ghz_state()),
            Err(QsimError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for dim in [2, 4, 8, 16] {
            assert!(haar_random_unitary(dim, &mut rng).is_unitary(TOLERANCE));
        }
    }

    #[test]
    fn haar_state_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 100_000;
        let zero = new_basis_state(1, 0).unwrap();
        let (mut f_sum, mut f2_sum, mut q_sum) = (0.0, 0.0, 0.0);
        for _ in 0..trials {
            let s = haar_random_state(1, &mut rng).unwrap();
            assert!((s.norm_sqr() - 1.0).abs() < TOLERANCE);
            let f = fidelity(&zero, &s).unwrap();
            f_sum += f;
            f2_sum += f * f;
            q_sum += s.amplitudes()[0].norm_sqr().powi(2);
        }
        let n = trials as f64;
        let mean = f_sum / n;
        let sigma = ((f2_sum / n - mean * mean) / n).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sigma, "mean fidelity {mean}");
        // E|a0|^4 = 2/(d(d+1)) = 1/3 for d = 2; Var = 1/5 - 1/9
        let q_mean = q_sum / n;
        let q_sigma = ((1.0 / 5.0 - 1.0 / 9.0) / n).sqrt();
        assert!((q_mean - 1.0 / 3.0).abs() < 3.0 * q_sigma, "fourth moment {q_mean}");
    }

    #[test]
    fn haar_mean_fidelity_multi_qubit() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for k in [2usize, 3] {
            let d = (1usize << k) as f64;
            let zero = new_basis_state(k, 0).unwrap();
            let trials = 100_000;
            let mean: f64 = (0..trials)
                .map(|_| fidelity(&zero, &haar_random_state(k, &mut rng).unwrap()).unwrap())
                .sum::<f64>()
                / trials as f64;
            // fidelity ~ Beta(1, d-1): Var = (d-1)/(d^2 (d+1))
            let sigma = ((d - 1.0) / (d * d * (d + 1.0)) / trials as f64).sqrt();
            assert!((mean - 1.0 / d).abs() < 3.0 * sigma, "k={k} mean={mean}");
        }
    }

    #[test]
    fn schmidt_weights_detect_entanglement() {
        let prod = tensor(&XOutcome::PlusX.state(), &new_basis_state(1, 1).unwrap()).unwrap();
        assert!(prod.qubit_schmidt_weights(0).unwrap()[1] < TOLERANCE);
        let bell = BellOutcome::PsiPlus.state();
        let w = bell.qubit_schmidt_weights(1).unwrap();
        assert!((w[0] - 0.5).abs() < TOLERANCE && (w[1] - 0.5).abs() < TOLERANCE);
        assert!(bell.factorize().is_none());
    }

    #[test]
    fn factorize_recovers_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let parts: Vec<_> = (0..3).map(|_| haar_random_state(1, &mut rng).unwrap()).collect();
        let joint = tensor_all(&parts).unwrap();
        let factors = joint.factorize().unwrap();
        for (a, b) in parts.iter().zip(&factors) {
            assert!((fidelity(a, b).unwrap() - 1.0).abs() < TOLERANCE);
        }
        assert!(close(&tensor_all(&factors).unwrap(), &joint));
    }

    #[test]
    fn orthogonal_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 1..4 {
            let s = haar_random_state(k, &mut rng).unwrap();
            let o = orthogonal_state(&s, &mut rng);
            assert!(fidelity(&s, &o).unwrap() < TOLERANCE);
        }
    }

    #[test]
    fn serde_roundtrip() {
        let g = ghz_state();
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.starts_with("{\"qubits\":3,\"amplitudes\":[["));
        let back: StateVector = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<StateVector>(
            "{\"qubits\":1,\"amplitudes\":[[1.0,0.0],[1.0,0.0]]}"
        )
        .is_err());
    }
}
