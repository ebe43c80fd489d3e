use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A simulator produced a non-finite or exploding value.
    #[error("simulation diverged at step {step}{}", replication.map(|r| format!(" (replication {r})")).unwrap_or_default())]
    SimulationDiverged { step: usize, replication: Option<usize> },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    TrainingDiverged { epoch: usize, batch: usize, loss: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
