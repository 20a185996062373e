use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("core of graph is empty (input is a forest)")]
    TrivialCore,

    #[error("image of edge {edge} is trivial after tightening")]
    DegenerateEdge { edge: usize },

    #[error("graphs do not match: {0}")]
    MismatchedGraphs(String),

    #[error("homomorphism is not injective: fold {fold} identifies two edges with common endpoints")]
    NonInjective { fold: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("power iteration did not reach tolerance {tol} within {iterations} steps")]
    NoConvergence { tol: f64, iterations: usize },

    #[error("no repeat within {0} steps")]
    NoRepeat(usize),
}
