//! Deterministic simulation framework for locally differentially private
//! federated learning with Byzantine-robust aggregation.
//!
//! Clients train a logistic-regression model on private data shards, clip
//! and perturb their update deltas with calibrated Gaussian noise, and
//! submit them in digest-protected, MAC-authenticated envelopes over an
//! adversarial transport. The server verifies envelopes, screens updates
//! with robust statistics and trust scores, aggregates the survivors under
//! a configurable rule, and tracks per-client cumulative privacy spend.
//!
//! Every source of randomness is a ChaCha12 stream derived from the master
//! seed, a domain tag, and the ids of the entities involved, so experiment
//! output is byte-for-byte reproducible regardless of worker thread count.

pub mod aggregation;
pub mod attack;
pub mod budget;
pub mod config;
pub mod data;
pub mod defense;
pub mod envelope;
pub mod error;
pub mod ldp;
pub mod model;
pub mod params;
pub mod protocol;
pub mod rng;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
