use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use balance_core::ddpg::{load_checkpoint, Ddpg};
use balance_core::error::{ConfigError, ExperimentError, SimError, TrainError};
use balance_core::experiment::{
    evaluate_standing, impulse_capacity_search, run_push_trial, run_training, sweep, sweep_csv, write_plots, Direction,
    ExperimentConfig, HoldPose, Policy, RolloutLog, TrialFailure,
};

#[derive(Parser)]
#[command(name = "balance-lab", version, about = "Planar biped push-recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config file; defaults apply to every unset key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` config key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Policy to load (train: resume from it).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the high-level policy on the balance task.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Quiet-standing evaluation rollouts.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// One push-recovery trial; writes the rollout CSV.
    Push {
        #[command(flatten)]
        common: Common,
        /// Force magnitude in N.
        #[arg(long)]
        magnitude: Option<f64>,
        /// forward or backward.
        #[arg(long)]
        direction: Option<Direction>,
    },
    /// Push trials over the configured magnitude grid.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Largest balanced impulse per direction, by bisection.
    Capacity {
        #[command(flatten)]
        common: Common,
        /// Search one direction only.
        #[arg(long)]
        direction: Option<Direction>,
    },
    /// SVG panels from a rollout CSV.
    Plot {
        #[command(flatten)]
        common: Common,
        /// Rollout CSV to plot.
        #[arg(long)]
        log: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

enum Loaded {
    Agent(Box<Ddpg>),
    Hold(HoldPose),
}

impl Loaded {
    fn policy(&self) -> &dyn Policy {
        match self {
            Loaded::Agent(a) => a.as_ref(),
            Loaded::Hold(h) => h,
        }
    }
}

fn load_policy(common: &Common) -> Result<Loaded> {
    match &common.checkpoint {
        Some(path) => {
            let ckpt = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            eprintln!("policy: {} (episode {})", path.display(), ckpt.episode);
            Ok(Loaded::Agent(Box::new(ckpt.agent)))
        }
        None => {
            eprintln!("policy: nominal-pose PD hold (no --checkpoint given)");
            Ok(Loaded::Hold(HoldPose::nominal()))
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn train(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let resume = match &common.checkpoint {
        Some(p) => {
            let mut ckpt = load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?;
            ckpt.agent.hp.episodes = cfg.ddpg.episodes;
            Some(ckpt)
        }
        None => None,
    };
    let total = cfg.ddpg.episodes;
    let trainer = run_training(&cfg, &cfg.out, resume, |e| {
        if (e.episode + 1) % 50 == 0 || e.episode + 1 == total {
            eprintln!(
                "episode {:>5}/{total}  steps {:>4}  return {:>9.2}  critic loss {:.3e}",
                e.episode + 1,
                e.steps,
                e.ret,
                e.critic_loss_mean
            );
        }
    })?;
    println!(
        "trained {} episodes, {} updates; output in {}",
        trainer.episode,
        trainer.updates,
        cfg.out.display()
    );
    Ok(())
}

fn eval(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let policy = load_policy(common)?;
    let summary = evaluate_standing(policy.policy(), &cfg, cfg.seed)?;
    write_file(&cfg.out.join("eval.json"), &serde_json::to_string_pretty(&summary)?)?;
    println!(
        "survived {}/{} rollouts of {} s, mean return {:.2}",
        summary.survived, summary.rollouts, cfg.eval.seconds, summary.mean_return
    );
    Ok(())
}

fn push(common: &Common, magnitude: Option<f64>, direction: Option<Direction>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(m) = magnitude {
        cfg.push.magnitude = m;
    }
    if let Some(d) = direction {
        cfg.push.direction = d;
    }
    cfg.validate()?;
    let policy = load_policy(common)?;
    let csv = cfg.out.join("rollout.csv");
    match run_push_trial(policy.policy(), &cfg, cfg.push.force()) {
        Ok(o) => {
            o.log.write_csv_to(&csv)?;
            let check = o.log.ceiling_check(&cfg.model, None);
            println!(
                "{} {} N: {}  final |xd_com| {:.4} m/s  underactuation {:.3} s  peak ankle torque {:.2} N·m (ceiling ratio {:.3})",
                cfg.push.direction.name(),
                cfg.push.magnitude,
                o.verdict.name(),
                o.final_com_speed,
                o.log.underactuation_time(cfg.push.onset),
                check.peak_torque,
                check.worst_ratio
            );
            Ok(())
        }
        Err(f) => {
            f.log.write_csv_to(&csv)?;
            Err(f.into())
        }
    }
}

fn run_sweep(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let policy = load_policy(common)?;
    let points = sweep(policy.policy(), &cfg, &cfg.sweep)?;
    let text = sweep_csv(&points);
    write_file(&cfg.out.join("sweep.csv"), &text)?;
    print!("{text}");
    Ok(())
}

fn capacity(common: &Common, direction: Option<Direction>) -> Result<()> {
    let cfg = load_config(common)?;
    let policy = load_policy(common)?;
    let dirs = match direction {
        Some(d) => vec![d],
        None => vec![Direction::Forward, Direction::Backward],
    };
    let mut reports = Vec::new();
    for d in dirs {
        let r = impulse_capacity_search(policy.policy(), &cfg, d)?;
        println!(
            "{}: capacity {:.2} N·s, capture-point budget {:.2} N·s (ratio {:.3}), {} trials, monotone probes: {}",
            d.name(),
            r.capacity,
            r.budget,
            r.ratio,
            r.trials,
            r.monotone
        );
        reports.push(r);
    }
    write_file(&cfg.out.join("capacity.json"), &serde_json::to_string_pretty(&reports)?)?;
    Ok(())
}

fn plot(common: &Common, log: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let rollout = RolloutLog::read_csv(log).with_context(|| format!("reading {}", log.display()))?;
    if rollout.is_empty() {
        bail!("{} has no rows", log.display());
    }
    for p in write_plots(&rollout, &cfg.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

trait WriteCsv {
    fn write_csv_to(&self, path: &Path) -> Result<()>;
}

impl WriteCsv for RolloutLog {
    fn write_csv_to(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_csv())
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<SimError>() || cause.is::<TrialFailure>() {
            return 3;
        }
        match cause.downcast_ref::<ExperimentError>() {
            Some(ExperimentError::Config(_)) => return 2,
            Some(ExperimentError::Sim(_) | ExperimentError::Train(TrainError::Sim(_))) => return 3,
            _ => {}
        }
        if let Some(TrainError::Sim(_)) = cause.downcast_ref::<TrainError>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { common } => train(common),
        Command::Eval { common } => eval(common),
        Command::Push {
            common,
            magnitude,
            direction,
        } => push(common, *magnitude, *direction),
        Command::Sweep { common } => run_sweep(common),
        Command::Capacity { common, direction } => capacity(common, *direction),
        Command::Plot { common, log } => plot(common, log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
