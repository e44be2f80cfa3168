//! Training objective and loop.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod penalty;
pub mod run;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use loss::{
    anneal_weight, collision_loss, front_weight, nav_loss, proximity_loss, total_loss, LossBreakdown, LossComponents,
    RelativeHuman,
};
pub use penalty::{action_penalty, expected_social_penalty, ActionPenalty, SocialConfig, SocialPenalty};
pub use run::{
    curves_csv, decision_objective, train, warmup_forecaster, CurveRow, ForecasterWarmup, TrainConfig, TrainOutcome,
};
