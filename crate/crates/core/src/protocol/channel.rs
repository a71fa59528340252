//! Ordered in-process message queue between the three parties.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::parties::{ArbitratorReply, BobRequest};
use super::ProtocolError;
use crate::crypto::SignaturePackage;
use crate::qsim::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
    Arbitrator,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Alice => "Alice",
            Party::Bob => "Bob",
            Party::Arbitrator => "arbitrator",
        })
    }
}

#[derive(Clone, Debug)]
pub enum Payload {
    /// Alice to Bob: the message and its signature.
    Signed {
        message: StateVector,
        signature: SignaturePackage,
    },
    /// Bob to the arbitrator: `y_b`.
    Request(BobRequest),
    /// Arbitrator to Bob: `y_tb`.
    Reply(ArbitratorReply),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Signed { .. } => "signed message",
            Payload::Request(_) => "y_b",
            Payload::Reply(_) => "y_tb",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Envelope {
    pub from: Party,
    pub to: Party,
    pub payload: Payload,
}

#[derive(Debug, Default)]
pub struct Channel {
    queue: VecDeque<Envelope>,
    delivered: usize,
}

impl Channel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, from: Party, to: Party, payload: Payload) {
        self.queue.push_back(Envelope { from, to, payload });
    }

    /// Pop the next envelope, which must be addressed to `to`.
    pub fn recv(&mut self, to: Party) -> Result<Envelope, ProtocolError> {
        match self.queue.front() {
            Some(e) if e.to == to => {
                self.delivered += 1;
                Ok(self.queue.pop_front().expect("front exists"))
            }
            Some(e) => Err(ProtocolError::OutOfOrder {
                expected: to,
                found: e.to,
            }),
            None => Err(ProtocolError::EmptyChannel(to)),
        }
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn delivered(&self) -> usize {
        self.delivered
    }
}
