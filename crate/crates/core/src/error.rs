use std::io;

use thiserror::Error;

use crate::engine::TraceRow;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SimError {
    /// The policy produced an action outside the feasible set at step `t`.
    #[error("contract violation: infeasible action at t={t}")]
    InfeasibleAction { t: usize },

    #[error("contract violation: policy evaluation failed at t={t}: {reason}")]
    Policy { t: usize, reason: String },

    /// The iteration cap was hit. Carries whatever trace was recorded so far.
    #[error("contract violation: no convergence within {cap} iterations")]
    IterationCap { cap: usize, trace: Vec<TraceRow> },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid instance data: {0}")]
    InvalidData(String),

    #[error("checksum mismatch for {file}")]
    Checksum { file: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SimError {
    /// Whether the error signals a broken simulation contract, as opposed to
    /// bad input or I/O trouble.
    pub fn is_contract_violation(&self) -> bool {
        matches!(
            self,
            SimError::InfeasibleAction { .. }
                | SimError::Policy { .. }
                | SimError::IterationCap { .. }
        )
    }
}

/// Failure inside a policy's own evaluation (for example a non-finite score).
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct PolicyError(pub String);
