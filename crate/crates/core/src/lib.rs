//! Energy-aware clustering for wireless sensor networks.
//!
//! The crate simulates a field of battery-powered sensors reporting to a base
//! station through cluster heads, and compares three ways of picking those
//! heads each round:
//!
//! - [`leach`]: randomised, distributed self-election;
//! - [`leach_c`]: centralised selection by simulated annealing;
//! - [`rlc`]: a centralised exact optimiser ([`clustering`]) whose invocation
//!   is gated by a learned policy ([`dqn`]) that decides when re-clustering
//!   is worth its control overhead. A learned surrogate ([`surrogate`]) can
//!   stand in for the exact optimiser.
//!
//! All randomness flows from explicit seeds through [`rng`].

pub mod clustering;
pub mod config;
pub mod dqn;
pub mod error;
pub mod experiment;
pub mod leach;
pub mod leach_c;
pub mod network;
pub mod nn;
pub mod par;
pub mod plot;
pub mod radio;
pub mod rlc;
pub mod rng;
pub mod sim;
pub mod surrogate;

pub use error::{Error, Result};
