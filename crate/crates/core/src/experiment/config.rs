//! Experiment configuration.
//!
//! Plain text, one `section.key = value` per line. `#` starts a comment.
//! Every key has a default; unknown or repeated keys are errors.
//!
//! ```text
//! seed = 7
//! reward.epsilon = 1e-5
//! control.kp.ankle = 3160
//! push.magnitude = 728
//! sweep.magnitudes = 300, 400, 500
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::control::{ControlSchedule, PdGains};
use crate::ddpg::{Hyperparams, OptimizerKind};
use crate::dynamics::{build_default_model, BipedModel, JOINT_NAMES, NOMINAL_COM_HEIGHT};
use crate::env::PushDistribution;
use crate::error::ConfigError;
use crate::reward::{RewardConfig, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            _ => Err("expected `forward` or `backward`".into()),
        }
    }
}

/// A single push trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushSpec {
    pub direction: Direction,
    /// Force magnitude in N.
    pub magnitude: f64,
    pub duration: f64,
    /// PD hold at the nominal pose before the policy takes over, s.
    pub settle: f64,
    /// Push start, s from trial start.
    pub onset: f64,
    /// Trial end, s from trial start.
    pub end: f64,
}

impl Default for PushSpec {
    fn default() -> Self {
        PushSpec {
            direction: Direction::Forward,
            magnitude: 728.0,
            duration: 0.1,
            settle: 2.0,
            onset: 2.5,
            end: 8.0,
        }
    }
}

impl PushSpec {
    /// Signed force for this direction.
    pub fn force(&self) -> f64 {
        self.direction.sign() * self.magnitude
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episode_seconds: f64,
    pub pushes: PushDistribution,
    /// Write a checkpoint every this many episodes (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episode_seconds: 30.0,
            pushes: PushDistribution::default(),
            checkpoint_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub rollouts: usize,
    pub seconds: f64,
    /// Initial joint-angle perturbation bound, rad.
    pub perturbation: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rollouts: 10,
            seconds: 30.0,
            perturbation: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityConfig {
    /// Bisection resolution, N·s.
    pub tolerance: f64,
    /// Upper end of the search bracket, N·s.
    pub max_impulse: f64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        CapacityConfig {
            tolerance: 1.0,
            max_impulse: 150.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub model: BipedModel,
    pub schedule: ControlSchedule,
    pub gains: PdGains,
    pub reward: RewardConfig,
    pub ddpg: Hyperparams,
    pub train: TrainConfig,
    pub push: PushSpec,
    /// Force magnitudes in N; negative values push backward.
    pub sweep: Vec<f64>,
    pub eval: EvalConfig,
    pub capacity: CapacityConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut cfg = ExperimentConfig {
            seed: 0,
            out: PathBuf::from("out"),
            model: build_default_model(),
            schedule: ControlSchedule::default(),
            gains: PdGains::default(),
            reward: RewardConfig::default(),
            ddpg: Hyperparams::default(),
            train: TrainConfig::default(),
            push: PushSpec::default(),
            sweep: vec![-500.0, -426.0, -300.0, 300.0, 500.0, 728.0],
            eval: EvalConfig::default(),
            capacity: CapacityConfig::default(),
        };
        cfg.sync();
        cfg
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        msg: format!("cannot parse `{value}`"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(ConfigError::InvalidValue {
            key: key.to_string(),
            msg: "expected true or false".into(),
        }),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn joint_index(name: &str) -> Option<usize> {
    JOINT_NAMES.iter().position(|n| *n == name)
}

fn channel_index(name: &str) -> Option<usize> {
    CHANNELS.iter().position(|n| *n == name)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text, &path.display().to_string())
    }

    /// Parses `text`, starting from the defaults. `origin` names the source
    /// in error messages.
    pub fn parse_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: &str| ConfigError::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg: msg.to_string(),
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(parse_err("empty key"));
            }
            if !seen.insert(key.to_string()) {
                return Err(parse_err(&format!("`{key}` is set twice")));
            }
            cfg.set(key, value)?;
        }
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Derived quantities that follow other settings.
    pub fn sync(&mut self) {
        self.model.calibrate_com_height(NOMINAL_COM_HEIGHT);
        self.reward.derive_alphas();
        self.ddpg.episode_steps = (self.train.episode_seconds * self.schedule.hlc_hz as f64)
            .round()
            .max(1.0) as usize;
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let unknown = || ConfigError::UnknownKey(key.to_string());
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["seed"] => self.seed = parse(key, value)?,
            ["out"] => self.out = PathBuf::from(value),

            ["model", "foot_thickness"] => self.model.foot.thickness = parse(key, value)?,
            ["model", "gravity"] => self.model.gravity = parse(key, value)?,
            ["model", "friction"] => self.model.friction = parse(key, value)?,
            ["model", "contact_stiffness"] => {
                let k = parse(key, value)?;
                self.model.contact.stiffness = k;
                self.model.contact.tangential_stiffness = k;
            }
            ["model", "contact_damping"] => {
                let c = parse(key, value)?;
                self.model.contact.damping = c;
                self.model.contact.tangential_damping = c;
            }
            ["model", "contacts"] => self.model.contact.enabled = parse_bool(key, value)?,
            ["model", "torque_limit"] => {
                let t: f64 = parse(key, value)?;
                self.model.joints.iter_mut().for_each(|j| j.torque_limit = t);
            }
            ["model", "armature"] => {
                let a: f64 = parse(key, value)?;
                self.model.joints.iter_mut().for_each(|j| j.armature = a);
            }

            ["control", "physics_hz"] => self.schedule.physics_hz = parse(key, value)?,
            ["control", "llc_hz"] => self.schedule.llc_hz = parse(key, value)?,
            ["control", "hlc_hz"] => self.schedule.hlc_hz = parse(key, value)?,
            ["control", "feedback_cutoff_hz"] => self.schedule.feedback_cutoff_hz = parse(key, value)?,
            ["control", "observation_cutoff_hz"] => self.schedule.observation_cutoff_hz = parse(key, value)?,
            ["control", "kp", joint] => {
                let j = joint_index(joint).ok_or_else(unknown)?;
                self.gains.kp[j] = parse(key, value)?;
            }
            ["control", "kd", joint] => {
                let j = joint_index(joint).ok_or_else(unknown)?;
                self.gains.kd[j] = parse(key, value)?;
            }

            ["reward", "epsilon"] => self.reward.epsilon = parse(key, value)?,
            ["reward", "theta_max"] => self.reward.theta_max = parse(key, value)?,
            ["reward", "pendulum_length"] => self.reward.pendulum_length = parse(key, value)?,
            ["reward", "z_com_target"] => self.reward.z_com_target = parse(key, value)?,
            ["reward", "xd_com_target"] => self.reward.xd_com_target = parse(key, value)?,
            ["reward", "zd_com_target"] => self.reward.zd_com_target = parse(key, value)?,
            ["reward", "weight", channel] => {
                let c = channel_index(channel).ok_or_else(unknown)?;
                self.reward.weights[c] = parse(key, value)?;
            }

            ["ddpg", "gamma"] => self.ddpg.gamma = parse(key, value)?,
            ["ddpg", "tau"] => self.ddpg.tau = parse(key, value)?,
            ["ddpg", "batch_size"] => self.ddpg.batch_size = parse(key, value)?,
            ["ddpg", "buffer_capacity"] => self.ddpg.buffer_capacity = parse(key, value)?,
            ["ddpg", "actor_lr"] => self.ddpg.actor_lr = parse(key, value)?,
            ["ddpg", "critic_lr"] => self.ddpg.critic_lr = parse(key, value)?,
            ["ddpg", "optimizer"] => {
                self.ddpg.optimizer = match value {
                    "sgd" => OptimizerKind::Sgd,
                    "adam" => OptimizerKind::Adam,
                    _ => {
                        return Err(ConfigError::InvalidValue {
                            key: key.to_string(),
                            msg: "expected `sgd` or `adam`".into(),
                        })
                    }
                }
            }
            ["ddpg", "hidden"] => self.ddpg.hidden = parse(key, value)?,
            ["ddpg", "noise_theta"] => self.ddpg.noise_theta = parse(key, value)?,
            ["ddpg", "noise_sigma"] => self.ddpg.noise_sigma = parse(key, value)?,
            ["ddpg", "noise_final_scale"] => self.ddpg.noise_final_scale = parse(key, value)?,
            ["ddpg", "episodes"] => self.ddpg.episodes = parse(key, value)?,
            ["ddpg", "warmup"] => self.ddpg.warmup = parse(key, value)?,

            ["train", "episode_seconds"] => self.train.episode_seconds = parse(key, value)?,
            ["train", "checkpoint_every"] => self.train.checkpoint_every = parse(key, value)?,
            ["train", "push_probability"] => self.train.pushes.probability = parse(key, value)?,
            ["train", "push_force_min"] => self.train.pushes.force_min = parse(key, value)?,
            ["train", "push_force_max"] => self.train.pushes.force_max = parse(key, value)?,
            ["train", "push_duration"] => self.train.pushes.duration = parse(key, value)?,
            ["train", "push_onset_min"] => self.train.pushes.onset_min = parse(key, value)?,
            ["train", "push_onset_max"] => self.train.pushes.onset_max = parse(key, value)?,

            ["push", "direction"] => {
                self.push.direction = value.parse().map_err(|msg| ConfigError::InvalidValue {
                    key: key.to_string(),
                    msg,
                })?
            }
            ["push", "magnitude"] => self.push.magnitude = parse(key, value)?,
            ["push", "duration"] => self.push.duration = parse(key, value)?,
            ["push", "settle"] => self.push.settle = parse(key, value)?,
            ["push", "onset"] => self.push.onset = parse(key, value)?,
            ["push", "end"] => self.push.end = parse(key, value)?,

            ["sweep", "magnitudes"] => self.sweep = parse_list(key, value)?,

            ["eval", "rollouts"] => self.eval.rollouts = parse(key, value)?,
            ["eval", "seconds"] => self.eval.seconds = parse(key, value)?,
            ["eval", "perturbation"] => self.eval.perturbation = parse(key, value)?,

            ["capacity", "tolerance"] => self.capacity.tolerance = parse(key, value)?,
            ["capacity", "max_impulse"] => self.capacity.max_impulse = parse(key, value)?,

            _ => return Err(unknown()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, msg: String| ConfigError::InvalidValue {
            key: key.to_string(),
            msg,
        };
        self.model.validate().map_err(|m| invalid("model", m))?;
        self.schedule.validate().map_err(|m| invalid("control", m))?;
        self.gains.validate().map_err(|m| invalid("control", m))?;
        self.reward.validate().map_err(|m| invalid("reward", m))?;
        self.ddpg.validate().map_err(|m| invalid("ddpg", m))?;
        self.train.pushes.validate().map_err(|m| invalid("train", m))?;
        if self.train.episode_seconds <= 0.0 {
            return Err(invalid("train.episode_seconds", "must be positive".into()));
        }
        let p = &self.push;
        if !(p.magnitude >= 0.0 && p.duration > 0.0) {
            return Err(invalid("push", "magnitude must be >= 0 and duration > 0".into()));
        }
        if p.settle < 2.0 || p.onset < p.settle || p.end <= p.onset + p.duration {
            return Err(invalid(
                "push",
                "need settle >= 2 s, onset >= settle and end after the push".into(),
            ));
        }
        if self.sweep.iter().any(|m| !m.is_finite()) {
            return Err(invalid("sweep.magnitudes", "must be finite".into()));
        }
        if self.eval.rollouts == 0 || self.eval.seconds <= 0.0 || self.eval.perturbation < 0.0 {
            return Err(invalid(
                "eval",
                "need rollouts >= 1, seconds > 0, perturbation >= 0".into(),
            ));
        }
        if !(self.capacity.tolerance > 0.0 && self.capacity.max_impulse > self.capacity.tolerance) {
            return Err(invalid("capacity", "need 0 < tolerance < max_impulse".into()));
        }
        Ok(())
    }

    /// Every key with its current value, in a form `parse_str` accepts.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        let m = &self.model;
        kv("model.foot_thickness", format!("{:?}", m.foot.thickness));
        kv("model.gravity", format!("{:?}", m.gravity));
        kv("model.friction", format!("{:?}", m.friction));
        kv("model.contact_stiffness", format!("{:?}", m.contact.stiffness));
        kv("model.contact_damping", format!("{:?}", m.contact.damping));
        kv("model.contacts", m.contact.enabled.to_string());
        kv("model.torque_limit", format!("{:?}", m.joints[0].torque_limit));
        kv("model.armature", format!("{:?}", m.joints[0].armature));
        let c = &self.schedule;
        kv("control.physics_hz", c.physics_hz.to_string());
        kv("control.llc_hz", c.llc_hz.to_string());
        kv("control.hlc_hz", c.hlc_hz.to_string());
        kv("control.feedback_cutoff_hz", format!("{:?}", c.feedback_cutoff_hz));
        kv(
            "control.observation_cutoff_hz",
            format!("{:?}", c.observation_cutoff_hz),
        );
        for (j, name) in JOINT_NAMES.iter().enumerate() {
            kv(&format!("control.kp.{name}"), format!("{:?}", self.gains.kp[j]));
            kv(&format!("control.kd.{name}"), format!("{:?}", self.gains.kd[j]));
        }
        let r = &self.reward;
        kv("reward.epsilon", format!("{:?}", r.epsilon));
        kv("reward.theta_max", format!("{:?}", r.theta_max));
        kv("reward.pendulum_length", format!("{:?}", r.pendulum_length));
        kv("reward.z_com_target", format!("{:?}", r.z_com_target));
        kv("reward.xd_com_target", format!("{:?}", r.xd_com_target));
        kv("reward.zd_com_target", format!("{:?}", r.zd_com_target));
        for (i, name) in CHANNELS.iter().enumerate() {
            kv(&format!("reward.weight.{name}"), format!("{:?}", r.weights[i]));
        }
        let d = &self.ddpg;
        kv("ddpg.gamma", format!("{:?}", d.gamma));
        kv("ddpg.tau", format!("{:?}", d.tau));
        kv("ddpg.batch_size", d.batch_size.to_string());
        kv("ddpg.buffer_capacity", d.buffer_capacity.to_string());
        kv("ddpg.actor_lr", format!("{:?}", d.actor_lr));
        kv("ddpg.critic_lr", format!("{:?}", d.critic_lr));
        kv(
            "ddpg.optimizer",
            match d.optimizer {
                OptimizerKind::Sgd => "sgd",
                OptimizerKind::Adam => "adam",
            }
            .into(),
        );
        kv("ddpg.hidden", d.hidden.to_string());
        kv("ddpg.noise_theta", format!("{:?}", d.noise_theta));
        kv("ddpg.noise_sigma", format!("{:?}", d.noise_sigma));
        kv("ddpg.noise_final_scale", format!("{:?}", d.noise_final_scale));
        kv("ddpg.episodes", d.episodes.to_string());
        kv("ddpg.warmup", d.warmup.to_string());
        let t = &self.train;
        kv("train.episode_seconds", format!("{:?}", t.episode_seconds));
        kv("train.checkpoint_every", t.checkpoint_every.to_string());
        kv("train.push_probability", format!("{:?}", t.pushes.probability));
        kv("train.push_force_min", format!("{:?}", t.pushes.force_min));
        kv("train.push_force_max", format!("{:?}", t.pushes.force_max));
        kv("train.push_duration", format!("{:?}", t.pushes.duration));
        kv("train.push_onset_min", format!("{:?}", t.pushes.onset_min));
        kv("train.push_onset_max", format!("{:?}", t.pushes.onset_max));
        let p = &self.push;
        kv("push.direction", p.direction.name().into());
        kv("push.magnitude", format!("{:?}", p.magnitude));
        kv("push.duration", format!("{:?}", p.duration));
        kv("push.settle", format!("{:?}", p.settle));
        kv("push.onset", format!("{:?}", p.onset));
        kv("push.end", format!("{:?}", p.end));
        let sweep: Vec<String> = self.sweep.iter().map(|m| format!("{m:?}")).collect();
        kv("sweep.magnitudes", sweep.join(", "));
        kv("eval.rollouts", self.eval.rollouts.to_string());
        kv("eval.seconds", format!("{:?}", self.eval.seconds));
        kv("eval.perturbation", format!("{:?}", self.eval.perturbation));
        kv("capacity.tolerance", format!("{:?}", self.capacity.tolerance));
        kv("capacity.max_impulse", format!("{:?}", self.capacity.max_impulse));
        s
    }
}
