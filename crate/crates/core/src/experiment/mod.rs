//! Experiment harness: configuration, push trials, searches, rollout logs
//! and plots.

pub mod config;
pub mod log;
pub mod plot;
pub mod trial;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

pub use config::{CapacityConfig, Direction, EvalConfig, ExperimentConfig, PushSpec, TrainConfig};
pub use log::{CeilingCheck, RolloutLog, RolloutRow, N_COLUMNS, REWARD_COLUMNS, SCHEMA_LINE, STATE_COLUMNS};
pub use plot::{panels, render_svg, write_plots, Panel, Series};
pub use trial::{
    balance_env, evaluate_standing, impulse_capacity_search, run_episode, run_push_trial, sweep, sweep_csv,
    CapacityReport, EvalSummary, HoldPose, Policy, SweepPoint, TrialFailure, TrialOutcome, Verdict, BALANCED_SPEED,
    SWEEP_HEADER,
};

use crate::ddpg::{save_checkpoint, Checkpoint, EpisodeLog, Trainer, TRAINING_LOG_HEADER};
use crate::env::BalanceEnv;
use crate::error::ExperimentError;

pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const CONFIG_ECHO: &str = "config.used";

/// The environment used for training, with randomized pushes.
pub fn training_env(cfg: &ExperimentConfig) -> BalanceEnv {
    BalanceEnv::new(
        cfg.model.clone(),
        cfg.schedule,
        cfg.gains,
        cfg.reward.clone(),
        cfg.train.pushes.clone(),
        cfg.train.episode_seconds,
    )
}

pub fn checkpoint_path(out: &Path, episode: usize) -> PathBuf {
    out.join(format!("checkpoint_{episode:06}.ckpt"))
}

/// Trains on the balance task into `out`, appending to the training log when
/// resuming. Writes periodic checkpoints and `final.ckpt`.
pub fn run_training<F>(
    cfg: &ExperimentConfig,
    out: &Path,
    resume: Option<Checkpoint>,
    mut progress: F,
) -> Result<Trainer, ExperimentError>
where
    F: FnMut(&EpisodeLog),
{
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_ECHO), cfg.render())?;
    let mut env = training_env(cfg);
    let resuming = resume.is_some();
    let mut trainer = match resume {
        Some(ckpt) => Trainer::resume(ckpt),
        None => Trainer::new(&env, cfg.ddpg.clone(), cfg.seed),
    };
    let log_path = out.join(TRAINING_LOG_FILE);
    let fresh = !resuming || !log_path.exists();
    let mut log = OpenOptions::new()
        .create(true)
        .append(resuming)
        .write(true)
        .truncate(!resuming)
        .open(&log_path)?;
    if fresh {
        writeln!(log, "{TRAINING_LOG_HEADER}")?;
    }
    let every = cfg.train.checkpoint_every;
    while trainer.episode < trainer.agent.hp.episodes {
        let e = match trainer.run_episode(&mut env) {
            Ok(e) => e,
            Err(err) => {
                save_checkpoint(&trainer.checkpoint(), &out.join("last_good.ckpt"))?;
                return Err(err.into());
            }
        };
        writeln!(log, "{}", e.csv_row())?;
        progress(&e);
        if every > 0 && trainer.episode % every == 0 {
            log.flush()?;
            save_checkpoint(&trainer.checkpoint(), &checkpoint_path(out, trainer.episode))?;
        }
    }
    log.flush()?;
    save_checkpoint(&trainer.checkpoint(), &out.join(FINAL_CHECKPOINT))?;
    Ok(trainer)
}
