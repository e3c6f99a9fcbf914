//! Error types shared across the framework.

use crate::params::ClientId;
use thiserror::Error;

/// All failure modes surfaced by the framework.
///
/// Adversarial outcomes (dropped deliveries, failed envelope verification,
/// anomaly flags) are ordinary values, not errors; this enum covers contract
/// violations and unrecoverable conditions only.
#[derive(Debug, Error)]
pub enum Error {
    /// A loss/gradient evaluation was asked for on an empty batch.
    #[error("batch is empty")]
    EmptyBatch,

    /// A training or evaluation call received an empty dataset shard.
    #[error("dataset shard is empty")]
    EmptyShard,

    /// Two vectors or matrices that must agree in dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The requested non-IID partition cannot be realized.
    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    /// A privacy charge would push a client past its budget; the ledger is
    /// left unchanged.
    #[error("privacy budget exhausted for client {0}")]
    BudgetExhausted(ClientId),

    /// Aggregation was invoked with no updates.
    #[error("update set is empty")]
    EmptyUpdateSet,

    /// The aggregation rule's feasibility invariant fails for the given
    /// number of updates.
    #[error("aggregation rule infeasible: {0}")]
    RuleInfeasible(String),

    /// Client selection was invoked with an empty eligible set.
    #[error("eligible client set is empty")]
    EmptyEligibleSet,

    /// A configuration field (from a file, an override, or a direct
    /// constructor) violates its documented constraint.
    #[error("invalid config: {field}: {reason}")]
    ConfigInvalid { field: String, reason: String },

    /// Envelope payload bytes do not decode to a parameter vector.
    #[error("malformed payload: {0}")]
    MalformedPayload(String),

    /// A vector operation produced or received a non-finite entry.
    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand for [`Error::ConfigInvalid`].
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
