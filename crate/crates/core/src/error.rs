use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid scores: {0}")]
    InvalidScores(String),

    #[error("unknown likelihood family '{0}'")]
    UnknownFamily(String),

    #[error("empty truncation interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("latent matrix left the constraint set at iteration {iteration}: {detail}")]
    ConstraintViolation { iteration: usize, detail: String },

    #[error("invalid sampler configuration: {0}")]
    Config(String),

    #[error(
        "the RANK likelihood cannot identify nominator-level effects; \
         remove the intercept and row regressors ({0})"
    )]
    RankRowEffects(String),

    #[error("singular information matrix: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
