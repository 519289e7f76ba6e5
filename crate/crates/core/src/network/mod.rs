//! Toy-scale two-branch alignment network and its training schedule.

pub mod augment;
mod config;
mod model;
mod train;

pub use config::{Augment, PanConfig};
pub use model::{loss, Embedding, ForwardOutput, ForwardVars, LossBreakdown, Mode, PanModel};
pub use train::{
    theta_stats, train_stage1, train_stage2, EpochHook, EpochLog, ThetaStats, TrainReport, TrainSet,
};
