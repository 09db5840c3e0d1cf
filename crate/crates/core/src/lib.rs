//! Planar humanoid balance laboratory.
//!
//! A merged-leg biped with a tiltable foot, capture-point analytics, a
//! physics-grounded reward, PD low-level control and a DDPG high-level
//! learner, plus the harness that runs push-recovery experiments.

pub mod analytics;
pub mod control;
pub mod ddpg;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod observation;
pub mod reward;

pub use ddpg::{Checkpoint, Ddpg, Hyperparams};
pub use dynamics::{BipedModel, BipedState};
pub use error::{CheckpointError, ConfigError, ExperimentError, SimError, TrainError};
pub use experiment::{Direction, ExperimentConfig, Policy, RolloutLog, Verdict};
