use serde::{Deserialize, Serialize};

use super::parties::{ArbitratorReply, BobRequest};
use super::{ProtocolError, ProtocolVariant};
use crate::qsim::{BellOutcome, XOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub seed: u64,
    pub qubits: usize,
    pub variant: ProtocolVariant,
    pub idealized_comparison: bool,
    /// Hex-encoded key bytes.
    pub k_a: String,
    pub k_b: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FinalVerdict {
    Accepted,
    Rejected,
}

/// Everything exchanged in one run. An accepting transcript always has
/// `gamma = 1`; [`Transcript::new`] and deserialization both enforce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTranscript")]
pub struct Transcript {
    header: TranscriptHeader,
    m_a: Vec<BellOutcome>,
    m_b: Vec<XOutcome>,
    m_t: Option<Vec<XOutcome>>,
    gamma: u8,
    y_b: BobRequest,
    y_tb: ArbitratorReply,
    verdict: FinalVerdict,
}

#[derive(Deserialize)]
struct RawTranscript {
    header: TranscriptHeader,
    m_a: Vec<BellOutcome>,
    m_b: Vec<XOutcome>,
    m_t: Option<Vec<XOutcome>>,
    gamma: u8,
    y_b: BobRequest,
    y_tb: ArbitratorReply,
    verdict: FinalVerdict,
}

impl TryFrom<RawTranscript> for Transcript {
    type Error = ProtocolError;

    fn try_from(r: RawTranscript) -> Result<Self, Self::Error> {
        Transcript::new(r.header, r.m_a, r.m_b, r.m_t, r.gamma, r.y_b, r.y_tb, r.verdict)
    }
}

impl Transcript {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        header: TranscriptHeader,
        m_a: Vec<BellOutcome>,
        m_b: Vec<XOutcome>,
        m_t: Option<Vec<XOutcome>>,
        gamma: u8,
        y_b: BobRequest,
        y_tb: ArbitratorReply,
        verdict: FinalVerdict,
    ) -> Result<Self, ProtocolError> {
        if gamma > 1 || (verdict == FinalVerdict::Accepted && gamma != 1) {
            return Err(ProtocolError::GammaGate);
        }
        let n = header.qubits;
        for len in [m_a.len(), m_b.len()]
            .into_iter()
            .chain(m_t.as_ref().map(Vec::len))
        {
            if len != n {
                return Err(ProtocolError::QubitCount { expected: n, got: len });
            }
        }
        Ok(Self {
            header,
            m_a,
            m_b,
            m_t,
            gamma,
            y_b,
            y_tb,
            verdict,
        })
    }

    pub fn header(&self) -> &TranscriptHeader {
        &self.header
    }

    pub fn m_a(&self) -> &[BellOutcome] {
        &self.m_a
    }

    pub fn m_b(&self) -> &[XOutcome] {
        &self.m_b
    }

    pub fn m_t(&self) -> Option<&[XOutcome]> {
        self.m_t.as_deref()
    }

    pub fn gamma(&self) -> u8 {
        self.gamma
    }

    pub fn y_b(&self) -> &BobRequest {
        &self.y_b
    }

    pub fn y_tb(&self) -> &ArbitratorReply {
        &self.y_tb
    }

    pub fn verdict(&self) -> FinalVerdict {
        self.verdict
    }

    pub fn accepted(&self) -> bool {
        self.verdict == FinalVerdict::Accepted
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}
