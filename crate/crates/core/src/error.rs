use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("no path between start and goal")]
    NoPath,
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid pedestrian script: {0}")]
    InvalidScript(String),
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
    #[error("scenario file: {0}")]
    Scenario(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("track has {0} frames, at least 3 required")]
    TrackTooShort(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopoError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("no expert action: no candidate and goal not reached")]
    ExpertNotAvailable,
    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no training episodes")]
    NoEpisodes,
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no episode logs to evaluate")]
    EmptyInput,
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Train(#[from] TrainError),
}
