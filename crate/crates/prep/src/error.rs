use thiserror::Error;

pub type Result<T, E = PrepError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error(transparent)]
    Core(#[from] hkcd_core::Error),

    #[error("need at least 2 matches to estimate a rigid transform, got {0}")]
    InsufficientMatches(usize),

    #[error("matched points are coincident; the transform is undetermined")]
    DegenerateConfiguration,

    #[error("transform is not finite")]
    NonFiniteTransform,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
