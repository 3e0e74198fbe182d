use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not unitary (defect {0:.3e})")]
    NotUnitary(f64),
    #[error("map is not hermiticity-preserving (Choi defect {0:.3e})")]
    NotHermiticityPreserving(f64),
    #[error("map is not completely positive (min Choi eigenvalue {0:.3e})")]
    NotCompletelyPositive(f64),
    #[error("I + t*phi is singular or ill-conditioned at t = {t} (condition {cond:.3e})")]
    Singular { t: f64, cond: f64 },
    #[error("limit hypothesis violated: {0}")]
    LimitHypothesisViolated(String),
    #[error("map is not an idempotent unital completely positive map: {0}")]
    NotIdempotentUcp(String),
    #[error("map is not unital (defect {0:.3e})")]
    NotUnital(f64),
    #[error("rank 3 detected: a unital q-positive map (or element of E_2) on M_2 has rank(phi) != 3")]
    RankThree,
    #[error("unexpected rank {rank} for {context}")]
    UnexpectedRank { rank: usize, context: String },
    #[error("map is not invertible (condition {cond:.3e})")]
    NotInvertible { cond: f64 },
    #[error("map is not q-positive: {0}")]
    NotQPositive(String),
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
    #[error("classification could not be verified (residual {residual:.3e}): {reason}")]
    Inconclusive { residual: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
