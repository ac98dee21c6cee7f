//! Error type shared by every stage of the simulator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A size or index constraint does not hold.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// The numerical rank of a matrix differs from the rank the layout requires.
    #[error("rank error: expected numerical rank {expected}, found {found}")]
    Rank { expected: usize, found: usize },

    #[error("matrix is numerically singular (condition number {0:.3e})")]
    Singular(f64),

    /// The time-domain tail that should carry the unique word is not zero.
    #[error("time-domain tail is not zero (max magnitude {0:.3e})")]
    ZeroTail(f64),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("PTS search space of {0} candidates exceeds the limit of 1e6")]
    SearchSpace(u128),

    /// Channel memory is longer than the guard the unique word provides.
    #[error("channel has {taps} taps but the unique word only absorbs {n_uw} samples of memory")]
    GuardViolation { taps: usize, n_uw: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
