use std::sync::OnceLock;

use num_complex::Complex64;
use serde::Serialize;

use super::ProtocolError;
use crate::qsim::{self, BellOutcome, PauliOp, StateVector, XOutcome, TOLERANCE};

/// Correction that maps the arbitrator's GHZ particle back to the message
/// qubit, indexed by Alice's Bell outcome and Bob's x outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliFrame {
    table: [[PauliOp; 2]; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FrameEntry {
    pub bell: BellOutcome,
    pub x: XOutcome,
    pub correction: PauliOp,
}

fn bell_index(b: BellOutcome) -> usize {
    BellOutcome::ALL.iter().position(|&o| o == b).expect("listed")
}

/// Arbitrator's particle after Alice measured `bell` on (message, her GHZ
/// qubit) and Bob found `x` on his.
pub fn arbitrator_residual(
    message: &StateVector,
    bell: BellOutcome,
    x: XOutcome,
) -> Result<Option<StateVector>, ProtocolError> {
    let joint = qsim::tensor(message, &qsim::ghz_state())?;
    let Some(bob_arb) = joint.postselect(&[0, 1], &bell.vector()) else {
        return Ok(None);
    };
    Ok(bob_arb.postselect(&[0], &x.vector()))
}

fn reference_messages() -> Vec<StateVector> {
    let a = |t: f64, p: f64| {
        StateVector::qubit(
            Complex64::new(t.cos(), 0.0),
            Complex64::from_polar(t.sin(), p),
        )
        .expect("unit norm")
    };
    vec![a(0.3, 0.7), a(1.1, -2.1), a(0.75, 2.9)]
}

impl PauliFrame {
    /// Build the table by simulating every outcome pair on fixed reference
    /// messages and picking the unique Pauli that undoes the residual.
    pub fn derive() -> Result<Self, ProtocolError> {
        let refs = reference_messages();
        let mut table = [[PauliOp::I; 2]; 4];
        for bell in BellOutcome::ALL {
            for x in XOutcome::ALL {
                let mut fits = Vec::new();
                'candidates: for sigma in PauliOp::ALL {
                    for p in &refs {
                        let Some(res) = arbitrator_residual(p, bell, x)? else {
                            continue 'candidates;
                        };
                        let corrected = res.apply_pauli(sigma, 0)?;
                        if qsim::fidelity(&corrected, p)? < 1.0 - TOLERANCE {
                            continue 'candidates;
                        }
                    }
                    fits.push(sigma);
                }
                match fits.as_slice() {
                    [sigma] => table[bell_index(bell)][x.bit() as usize] = *sigma,
                    _ => return Err(ProtocolError::FrameUnresolved { bell, x }),
                }
            }
        }
        Ok(Self { table })
    }

    /// Process-wide table, derived once.
    pub fn standard() -> &'static PauliFrame {
        static FRAME: OnceLock<PauliFrame> = OnceLock::new();
        FRAME.get_or_init(|| PauliFrame::derive().expect("Pauli frame derivation is deterministic"))
    }

    pub fn correction(&self, bell: BellOutcome, x: XOutcome) -> PauliOp {
        self.table[bell_index(bell)][x.bit() as usize]
    }

    pub fn entries(&self) -> Vec<FrameEntry> {
        BellOutcome::ALL
            .iter()
            .flat_map(|&bell| {
                XOutcome::ALL.iter().map(move |&x| FrameEntry {
                    bell,
                    x,
                    correction: self.correction(bell, x),
                })
            })
            .collect()
    }

    /// Smallest fidelity between `message` and the corrected residual, over
    /// all outcome pairs.
    pub fn worst_fidelity(&self, message: &StateVector) -> Result<f64, ProtocolError> {
        let mut worst: f64 = 1.0;
        for e in self.entries() {
            if let Some(res) = arbitrator_residual(message, e.bell, e.x)? {
                let fixed = res.apply_pauli(e.correction, 0)?;
                worst = worst.min(qsim::fidelity(&fixed, message)?);
            }
        }
        Ok(worst)
    }
}
