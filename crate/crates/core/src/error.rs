use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown control token: {0}")]
    UnknownControlToken(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("target loss {target} is unreachable; asymptotic floor is {floor}")]
    InfeasibleTarget { target: f64, floor: f64 },
    #[error("invalid comparison: {0}")]
    InvalidComparison(String),
    #[error("data unit mismatch: fit is in {fit}, cost model is in {cost}")]
    UnitMismatch {
        fit: &'static str,
        cost: &'static str,
    },
    #[error(transparent)]
    Shard(#[from] ShardError),
}

/// Decoding failures for the binary shard format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ShardError {
    #[error("bad magic bytes")]
    MagicMismatch,
    #[error("unsupported shard version {found}")]
    VersionMismatch { found: u32 },
    #[error("shard truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: u64, found: u64 },
    #[error("{0} trailing bytes after the last sequence")]
    TrailingBytes(u64),
    #[error("unknown boundary policy tag {0}")]
    UnknownPolicy(u8),
    #[error("non-zero padding bits in the mask of sequence {0}")]
    MaskPadding(u64),
    #[error("token id {token} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: u32 },
}

impl ShardError {
    /// Stable numeric code for each failure kind.
    pub fn code(&self) -> u8 {
        match self {
            ShardError::MagicMismatch => 1,
            ShardError::VersionMismatch { .. } => 2,
            ShardError::Truncated { .. } => 3,
            ShardError::TrailingBytes(_) => 4,
            ShardError::UnknownPolicy(_) => 5,
            ShardError::MaskPadding(_) => 6,
            ShardError::TokenOutOfRange { .. } => 7,
        }
    }
}
