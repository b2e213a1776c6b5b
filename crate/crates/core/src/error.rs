//! Error type shared by all modules.

use thiserror::Error;

/// Everything that can go wrong inside the library.
///
/// Constructors validate shapes and value ranges up front; operations never
/// panic on bad input.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Matrix or vector shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A rank argument is outside `1..=min(d_out, d_in)` or otherwise invalid.
    #[error("rank out of range: {0}")]
    RankOutOfRange(String),

    /// Input contains NaN or infinity where finite values are required.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// A value is outside its documented domain (e.g. λ outside [0,1]).
    #[error("value out of range: {0}")]
    OutOfRange(String),

    /// Input is degenerate for the requested operation (all-zero matrix,
    /// zero vector, empty sequence, too few samples).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A bit budget is too small to afford even rank 1.
    #[error("budget too small: {0}")]
    BudgetTooSmall(String),

    /// A layer manifest line or other textual input failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    /// The SVD backend failed to converge (practically unreachable for
    /// finite input at the sizes this crate targets).
    #[error("singular value decomposition did not converge")]
    SvdFailed,
}
