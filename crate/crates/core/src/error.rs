use thiserror::Error;

/// Errors raised by the signal chain and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("invalid waveform bank: {0}")]
    Bank(String),
    #[error("invalid delays: {0}")]
    Delay(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("estimator/detector mismatch: {0}")]
    KindMismatch(String),
    #[error("false alarm probability {0} outside (0, 1)")]
    PfaOutOfRange(f64),
    #[error("no feasible candidate in the search region")]
    NoFeasibleCandidate,
    #[error("rank-deficient geometry (rank {rank} of {cols})")]
    RankDeficient { rank: usize, cols: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("output collision: {0} exists with a different spec hash (use --force)")]
    OutputCollision(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
