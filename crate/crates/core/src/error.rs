use thiserror::Error;

/// Errors raised across the estimation, distribution and experiment layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("column {0} has (near) zero variance and cannot be standardized")]
    ConstantColumn(usize),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("restriction matrix is rank deficient (rank {rank} < {rows} rows)")]
    RestrictionRank { rank: usize, rows: usize },

    #[error("H S_K^-1 H' is numerically singular")]
    SingularRestriction,

    #[error("residual sum of squares is zero; the pretest statistic is undefined")]
    DegenerateResidual,

    #[error("Stein-type estimators need q > 2 (got q = {0})")]
    SteinUndefined(usize),

    #[error("test statistic is zero; Stein-type weight is undefined")]
    ZeroTestStat,

    #[error("inverse moment of order {order} undefined for df1 = {df1}")]
    MomentUndefined { order: u32, df1: u32 },

    #[error("active block X_A is rank deficient")]
    RankDeficientActiveBlock,

    #[error("bound violated: {0}")]
    BoundViolation(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("csv error: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that describe malformed input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::ConstantColumn(_)
                | Error::RestrictionRank { .. }
                | Error::UnknownScenario(_)
                | Error::Csv(_)
                | Error::SteinUndefined(_)
        )
    }
}
