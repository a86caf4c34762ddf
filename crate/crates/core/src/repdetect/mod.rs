//! Early repetition detection inside an open set.

pub mod detector;
pub mod dnb;
pub mod dtw;
pub mod features;
pub mod metrics;
pub mod train;

use thiserror::Error;

pub use detector::{grow_window, DetectorConfig, Growth, RepDetector, RepEvent, RepOutput, RepProgress};
pub use dnb::{forward_step, initial_belief, Belief, DnbModel, Mode, Observation, EVENT, NON_EVENT};
pub use dtw::dtw_distance;
pub use features::{discretize_with, extract_features, Feature, RepTemplate, Symbol, WindowFeatures};
pub use metrics::{compute_metrics, RepMetrics};
pub use train::{train_model, TrainConfig, TrainReport, TrainingSequence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("window of {0} samples is too short")]
    WindowTooShort(usize),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("{0}")]
    Io(String),
    #[error("total likelihood underflowed to zero")]
    Underflow,
    #[error("belief is not a probability vector")]
    InvalidBelief,
    #[error("training corpus too small: {0}")]
    CorpusTooSmall(String),
    #[error("feature {0} is constant across the corpus")]
    ConstantFeature(String),
    #[error("degenerate rep segment: {0}")]
    Degenerate(String),
}
