//! Training, evaluation, tiled inference and the synthetic scene used for
//! desk-scale end-to-end runs.

pub mod adam;
pub mod eval;
pub mod predict;
pub mod synth;
pub mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use eval::{evaluate_masked, MetricsReport};
pub use predict::{predict_tiled, PredictOutput};
pub use synth::{generate_synthetic_scene, SyntheticScene};
pub use train::{train, EpochRecord, MaskMode, TrainConfig, TrainOutcome};
