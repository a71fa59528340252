//! Simulation and Monte Carlo analysis of a GHZ-based arbitrated quantum
//! signature protocol.
//!
//! * [`qsim`]: pure-state simulation engine.
//! * [`crypto`]: keys, keyed signing unitaries, quantum and classical one-time pads.
//! * [`comparison`]: SWAP-test state comparison.
//! * [`protocol`]: the three-party protocol with every ambiguous step as a variant.
//! * [`attacks`]: forgery strategies and acceptance / fidelity estimators.
//! * [`stats`]: binomial and mean confidence intervals used by the reports.

pub mod attacks;
pub mod comparison;
pub mod crypto;
pub mod protocol;
pub mod qsim;
pub mod stats;
