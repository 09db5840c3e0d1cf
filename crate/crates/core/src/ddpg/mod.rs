//! Deep deterministic policy gradient learner.

pub mod agent;
pub mod checkpoint;
pub mod invert;
pub mod networks;
pub mod nn;
pub mod noise;
pub mod replay;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use agent::{clamp_action, Ddpg, Hyperparams, OptimizerKind};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use invert::{invert_gradients, inverting_factor};
pub use networks::{Actor, Critic, HIDDEN};
pub use noise::OrnsteinUhlenbeck;
pub use replay::{ReplayBuffer, Transition};

use crate::error::{SimError, TrainError};

/// Result of one policy step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Episode ended in failure; no bootstrapping past this transition.
    pub terminal: bool,
    /// Episode ended for any reason (failure or time cap).
    pub done: bool,
}

/// Episodic task stepped at the policy rate.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    /// Per-dimension (lower, upper) action bounds.
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, SimError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    /// NaN when no update ran during the episode.
    pub critic_loss_mean: f64,
    pub exploration_scale: f64,
}

pub const TRAINING_LOG_HEADER: &str = "episode,steps,return,critic_loss_mean,exploration_scale";

impl EpisodeLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.8e},{:.8e},{:.8e}",
            self.episode, self.steps, self.ret, self.critic_loss_mean, self.exploration_scale
        )
    }
}

pub fn training_log_csv(log: &[EpisodeLog]) -> String {
    let mut s = String::from(TRAINING_LOG_HEADER);
    s.push('\n');
    for e in log {
        s.push_str(&e.csv_row());
        s.push('\n');
    }
    s
}

/// Learner plus everything the training loop mutates.
pub struct Trainer {
    pub agent: Ddpg,
    pub buffer: ReplayBuffer,
    pub noise: OrnsteinUhlenbeck,
    pub seed: u64,
    /// Episodes completed so far.
    pub episode: usize,
    pub updates: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new<E: Environment>(env: &E, hp: Hyperparams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (low, high) = env.action_bounds();
        let agent = Ddpg::new(env.obs_dim(), low, high, hp, &mut rng);
        Self::from_agent(agent, seed, 0, rng)
    }

    /// Continues from a saved agent. The replay buffer starts empty.
    pub fn resume(ckpt: Checkpoint) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(ckpt.seed);
        rng.set_stream(ckpt.episode as u64);
        Self::from_agent(ckpt.agent, ckpt.seed, ckpt.episode, rng)
    }

    fn from_agent(agent: Ddpg, seed: u64, episode: usize, rng: ChaCha8Rng) -> Self {
        let sigma = agent
            .action_low
            .iter()
            .zip(&agent.action_high)
            .map(|(lo, hi)| agent.hp.noise_sigma * 0.5 * (hi - lo))
            .collect();
        let noise = OrnsteinUhlenbeck::new(agent.hp.noise_theta, sigma);
        Trainer {
            buffer: ReplayBuffer::new(agent.hp.buffer_capacity),
            agent,
            noise,
            seed,
            episode,
            updates: 0,
            rng,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            agent: self.agent.clone(),
            seed: self.seed,
            episode: self.episode,
        }
    }

    /// One episode: act with exploration noise, store, and update after
    /// every step once the buffer holds a minibatch.
    pub fn run_episode<E: Environment>(&mut self, env: &mut E) -> Result<EpisodeLog, TrainError> {
        let hp = self.agent.hp.clone();
        let scale = hp.exploration_scale(self.episode);
        self.noise.scale = scale;
        self.noise.reset();
        let mut s = env.reset(&mut self.rng);
        let (mut ret, mut loss_sum, mut n_loss, mut steps) = (0.0, 0.0, 0usize, 0usize);
        while steps < hp.episode_steps {
            let mut a = self.agent.actor.forward(&s);
            for (x, n) in a.iter_mut().zip(self.noise.sample(1.0, &mut self.rng)) {
                *x += n;
            }
            let a = clamp_action(a, &self.agent.action_low, &self.agent.action_high);
            let out = env.step(&a)?;
            ret += out.reward;
            steps += 1;
            self.buffer.push(Transition {
                state: s,
                action: a,
                reward: out.reward,
                next_state: out.observation.clone(),
                terminal: out.terminal,
            });
            if self.buffer.len() >= hp.batch_size.max(hp.warmup) {
                let batch = self.buffer.sample(hp.batch_size, &mut self.rng);
                let nonfinite = |which| TrainError::NonFiniteLoss {
                    which,
                    episode: self.episode,
                    update: self.updates,
                };
                let loss = self.agent.critic_update(&batch).map_err(|e| nonfinite(e.0))?;
                self.agent.actor_update(&batch).map_err(|e| nonfinite(e.0))?;
                self.agent.soft_update_targets();
                self.updates += 1;
                loss_sum += loss;
                n_loss += 1;
            }
            s = out.observation;
            if out.done {
                break;
            }
        }
        let log = EpisodeLog {
            episode: self.episode,
            steps,
            ret,
            critic_loss_mean: if n_loss > 0 { loss_sum / n_loss as f64 } else { f64::NAN },
            exploration_scale: scale,
        };
        self.episode += 1;
        Ok(log)
    }
}

/// Runs `hp.episodes` episodes from scratch. `progress` sees every
/// finished episode.
pub fn train<E, F>(
    env: &mut E,
    hp: Hyperparams,
    seed: u64,
    mut progress: F,
) -> Result<(Trainer, Vec<EpisodeLog>), TrainError>
where
    E: Environment,
    F: FnMut(&EpisodeLog),
{
    let mut trainer = Trainer::new(env, hp, seed);
    let mut logs = Vec::with_capacity(trainer.agent.hp.episodes);
    while trainer.episode < trainer.agent.hp.episodes {
        let e = trainer.run_episode(env)?;
        progress(&e);
        logs.push(e);
    }
    Ok((trainer, logs))
}

/// `(late - early) / |early|` over the mean returns of the first and last
/// `fraction` of episodes.
pub fn return_improvement(logs: &[EpisodeLog], fraction: f64) -> f64 {
    let n = ((logs.len() as f64 * fraction).round() as usize).max(1);
    assert!(logs.len() >= 2 * n, "need at least two windows of episodes");
    let mean = |w: &[EpisodeLog]| w.iter().map(|e| e.ret).sum::<f64>() / w.len() as f64;
    let (early, late) = (mean(&logs[..n]), mean(&logs[logs.len() - n..]));
    (late - early) / early.abs()
}

/// Deterministic rollout of the clamped actor; returns (return, steps).
pub fn evaluate<E: Environment>(
    agent: &Ddpg,
    env: &mut E,
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize), SimError> {
    let mut s = env.reset(rng);
    let mut ret = 0.0;
    for k in 0..max_steps {
        let out = env.step(&agent.act(&s))?;
        ret += out.reward;
        if out.done {
            return Ok((ret, k + 1));
        }
        s = out.observation;
    }
    Ok((ret, max_steps))
}
