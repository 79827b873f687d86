use thiserror::Error;

use crate::game_model::Policy;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate game: win value equals lose value ({0})")]
    DegenerateGame(f64),

    #[error("behavior path covers {path} periods but the panel has {panel}")]
    LengthMismatch { panel: usize, path: usize },

    #[error("simplex point {0:?} lies on the boundary; logit transform undefined")]
    BoundaryPoint([f64; 3]),

    #[error("Dirichlet concentration must be strictly positive, got {0:?}")]
    InvalidConcentration([f64; 3]),

    #[error("every importance weight for policy {0} is zero; the model cannot explain the data")]
    AllWeightsDegenerate(Policy),

    #[error("period {0} is missing from the panel")]
    MissingPeriod(usize),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
