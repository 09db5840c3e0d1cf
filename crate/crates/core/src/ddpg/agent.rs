use rand::Rng;
use serde::{Deserialize, Serialize};

use super::invert::invert_gradients;
use super::networks::{Actor, Critic, HIDDEN};
use super::nn::{soft_update, Parameters};
use super::replay::Transition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub optimizer: OptimizerKind,
    pub hidden: usize,
    /// Mean-reversion rate of the exploration process per policy step.
    pub noise_theta: f64,
    /// Stationary noise spread as a fraction of each action's half range.
    pub noise_sigma: f64,
    /// Exploration scale reached at the final episode (linear anneal from 1).
    pub noise_final_scale: f64,
    pub episode_steps: usize,
    pub episodes: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.99,
            tau: 0.001,
            batch_size: 64,
            buffer_capacity: 1_000_000,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            optimizer: OptimizerKind::Sgd,
            hidden: HIDDEN,
            noise_theta: 0.15,
            noise_sigma: 0.2,
            noise_final_scale: 0.2,
            episode_steps: 750,
            episodes: 2000,
            warmup: 64,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err("gamma must lie in (0, 1)".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err("tau must lie in (0, 1]".into());
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err("batch size must be >= 1 and fit in the buffer".into());
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err("learning rates must be positive".into());
        }
        if self.hidden == 0 || self.episode_steps == 0 {
            return Err("hidden width and episode length must be positive".into());
        }
        if self.noise_theta <= 0.0 || self.noise_sigma < 0.0 || self.noise_final_scale < 0.0 {
            return Err("noise parameters out of range".into());
        }
        Ok(())
    }

    /// Exploration multiplier for `episode` out of `self.episodes`.
    pub fn exploration_scale(&self, episode: usize) -> f64 {
        if self.episodes <= 1 {
            return 1.0;
        }
        let frac = (episode as f64 / (self.episodes - 1) as f64).min(1.0);
        1.0 + (self.noise_final_scale - 1.0) * frac
    }
}

/// First-order optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        let buf = if kind == OptimizerKind::Adam { n_params } else { 0 };
        Optimizer {
            kind,
            lr,
            m: vec![0.0; buf],
            v: vec![0.0; buf],
            t: 0,
        }
    }

    /// Descends along `grad` (pass a negated gradient to ascend).
    pub fn step<P: Parameters>(&mut self, params: &mut P, grad: &P) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (pl, gl) in params.layers_mut().into_iter().zip(grad.layers()) {
                    for (p, g) in pl.params_mut().zip(gl.params()) {
                        *p -= self.lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - Self::BETA1.powi(self.t);
                let c2 = 1.0 - Self::BETA2.powi(self.t);
                let mut k = 0;
                for (pl, gl) in params.layers_mut().into_iter().zip(grad.layers()) {
                    for (p, g) in pl.params_mut().zip(gl.params()) {
                        self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * g;
                        self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * g * g;
                        *p -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
                        k += 1;
                    }
                }
            }
        }
    }
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    rows.flat_map(|r| r.iter().copied()).collect()
}

/// TD targets y_i = r_i, or r_i + γ Q'(s'_i, μ'(s'_i)) for non-terminal rows.
pub fn td_targets(target_actor: &Actor, target_critic: &Critic, batch: &[&Transition], gamma: f64) -> Vec<f64> {
    let n = batch.len();
    let next = stack(batch.iter().map(|t| t.next_state.as_slice()));
    let next_actions = target_actor.forward_batch(&next, n).out;
    let q_next = target_critic.forward_batch(&next, &next_actions, n).q;
    batch
        .iter()
        .zip(q_next)
        .map(|(t, q)| if t.terminal { t.reward } else { t.reward + gamma * q })
        .collect()
}

/// Mean squared TD error and its gradient with respect to the critic.
pub fn critic_loss_and_grad(critic: &Critic, batch: &[&Transition], targets: &[f64]) -> (f64, Critic) {
    let n = batch.len();
    let states = stack(batch.iter().map(|t| t.state.as_slice()));
    let actions = stack(batch.iter().map(|t| t.action.as_slice()));
    let pass = critic.forward_batch(&states, &actions, n);
    let mut loss = 0.0;
    let mut dq = Vec::with_capacity(n);
    for (q, y) in pass.q.iter().zip(targets) {
        let e = q - y;
        loss += e * e;
        dq.push(2.0 * e / n as f64);
    }
    let mut grad = critic.zeros_like();
    critic.backward(&pass, &dq, Some(&mut grad));
    (loss / n as f64, grad)
}

pub fn critic_loss(critic: &Critic, batch: &[&Transition], targets: &[f64]) -> f64 {
    let n = batch.len();
    let states = stack(batch.iter().map(|t| t.state.as_slice()));
    let actions = stack(batch.iter().map(|t| t.action.as_slice()));
    let q = critic.forward_batch(&states, &actions, n).q;
    q.iter().zip(targets).map(|(q, y)| (q - y) * (q - y)).sum::<f64>() / n as f64
}

/// Sampled deterministic policy gradient (ascent direction):
/// (1/N) Σ ∇_a Q(s_i, a)|_{a=μ(s_i)} ∇_θ μ(s_i). When `bounds` is given the
/// action gradient is passed through the inverting-gradients transform on
/// the raw actor output first.
pub fn actor_gradient(
    actor: &Actor,
    critic: &Critic,
    states: &[f64],
    batch: usize,
    bounds: Option<(&[f64], &[f64])>,
) -> Actor {
    let pass = actor.forward_batch(states, batch);
    let cpass = critic.forward_batch(states, &pass.out, batch);
    let mut da = critic.backward(&cpass, &vec![1.0; batch], None);
    if let Some((lo, hi)) = bounds {
        invert_gradients(&mut da, &pass.out, lo, hi);
    }
    for g in &mut da {
        *g /= batch as f64;
    }
    let mut grad = actor.zeros_like();
    actor.backward(&pass, &da, &mut grad);
    grad
}

/// Mean Q of the actor's own actions, the objective `actor_gradient` climbs.
pub fn actor_objective(actor: &Actor, critic: &Critic, states: &[f64], batch: usize) -> f64 {
    let a = actor.forward_batch(states, batch).out;
    critic.forward_batch(states, &a, batch).q.iter().sum::<f64>() / batch as f64
}

/// Actor, critic, their target copies and optimizer state.
#[derive(Debug, Clone)]
pub struct Ddpg {
    pub actor: Actor,
    pub critic: Critic,
    pub target_actor: Actor,
    pub target_critic: Critic,
    pub hp: Hyperparams,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
}

/// Update diverged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFiniteLoss(pub &'static str);

impl Ddpg {
    pub fn new<R: Rng>(
        obs_dim: usize,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        hp: Hyperparams,
        rng: &mut R,
    ) -> Self {
        let act_dim = action_low.len();
        assert_eq!(act_dim, action_high.len());
        let actor = Actor::new(obs_dim, act_dim, hp.hidden, rng);
        let critic = Critic::new(obs_dim, act_dim, hp.hidden, rng);
        Self::from_networks(
            actor.clone(),
            critic.clone(),
            actor,
            critic,
            action_low,
            action_high,
            hp,
        )
    }

    pub fn from_networks(
        actor: Actor,
        critic: Critic,
        target_actor: Actor,
        target_critic: Critic,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        hp: Hyperparams,
    ) -> Self {
        let actor_opt = Optimizer::new(hp.optimizer, hp.actor_lr, actor.n_params());
        let critic_opt = Optimizer::new(hp.optimizer, hp.critic_lr, critic.n_params());
        Ddpg {
            actor,
            critic,
            target_actor,
            target_critic,
            hp,
            action_low,
            action_high,
            actor_opt,
            critic_opt,
        }
    }

    /// Deterministic action clamped into the action bounds.
    pub fn act(&self, state: &[f64]) -> Vec<f64> {
        clamp_action(self.actor.forward(state), &self.action_low, &self.action_high)
    }

    /// One gradient step on the critic; returns the loss before the step.
    pub fn critic_update(&mut self, batch: &[&Transition]) -> Result<f64, NonFiniteLoss> {
        let y = td_targets(&self.target_actor, &self.target_critic, batch, self.hp.gamma);
        let (loss, grad) = critic_loss_and_grad(&self.critic, batch, &y);
        if !loss.is_finite() {
            return Err(NonFiniteLoss("critic"));
        }
        self.critic_opt.step(&mut self.critic, &grad);
        Ok(loss)
    }

    pub fn actor_update(&mut self, batch: &[&Transition]) -> Result<(), NonFiniteLoss> {
        let states = stack(batch.iter().map(|t| t.state.as_slice()));
        let mut grad = actor_gradient(
            &self.actor,
            &self.critic,
            &states,
            batch.len(),
            Some((&self.action_low, &self.action_high)),
        );
        if !grad.all_finite() {
            return Err(NonFiniteLoss("actor"));
        }
        // ascend
        for l in grad.layers_mut() {
            l.params_mut().for_each(|g| *g = -*g);
        }
        self.actor_opt.step(&mut self.actor, &grad);
        Ok(())
    }

    pub fn soft_update_targets(&mut self) {
        soft_update(&mut self.target_actor, &self.actor, self.hp.tau);
        soft_update(&mut self.target_critic, &self.critic, self.hp.tau);
    }
}

pub fn clamp_action(mut a: Vec<f64>, low: &[f64], high: &[f64]) -> Vec<f64> {
    for ((x, lo), hi) in a.iter_mut().zip(low).zip(high) {
        *x = x.clamp(*lo, *hi);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::nn::Dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, obs: usize, act: usize) -> Vec<Transition> {
        (0..n)
            .map(|i| Transition {
                state: (0..obs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                action: (0..act).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                reward: rng.gen_range(-1.0..1.0),
                next_state: (0..obs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                terminal: i % 3 == 0,
            })
            .collect()
    }

    #[test]
    fn terminal_target_is_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ta = Actor::new(5, 2, 8, &mut rng);
        let mut tc = Critic::new(5, 2, 8, &mut rng);
        tc.l3.bias[0] = 10.0;
        let batch = random_batch(&mut rng, 6, 5, 2);
        let refs: Vec<&Transition> = batch.iter().collect();
        let y = td_targets(&ta, &tc, &refs, 0.9);
        for (t, y) in batch.iter().zip(y) {
            if t.terminal {
                assert_eq!(y, t.reward);
            } else {
                let a = ta.forward(&t.next_state);
                assert!((y - (t.reward + 0.9 * tc.forward(&t.next_state, &a))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_loss_leaves_critic_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hp = Hyperparams {
            gamma: 0.5,
            ..Default::default()
        };
        let mut agent = Ddpg::new(5, vec![-1.0; 2], vec![1.0; 2], hp, &mut rng);
        // critic output identically zero, all rewards zero, all terminal
        agent.critic.l3 = Dense::zeros(agent.hp.hidden, 1);
        agent.target_critic = agent.critic.clone();
        let mut batch = random_batch(&mut rng, 8, 5, 2);
        for t in &mut batch {
            t.reward = 0.0;
        }
        let refs: Vec<&Transition> = batch.iter().collect();
        let before = agent.critic.clone();
        let loss = agent.critic_update(&refs).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(agent.critic, before);
    }

    #[test]
    fn action_independent_critic_freezes_actor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = Ddpg::new(5, vec![-1.0; 2], vec![1.0; 2], Hyperparams::default(), &mut rng);
        let h = agent.critic.hidden();
        for o in 0..h {
            for i in h..h + 2 {
                agent.critic.l2.weight[o * (h + 2) + i] = 0.0;
            }
        }
        let batch = random_batch(&mut rng, 8, 5, 2);
        let refs: Vec<&Transition> = batch.iter().collect();
        let before = agent.actor.clone();
        agent.actor_update(&refs).unwrap();
        assert_eq!(agent.actor, before);
    }

    #[test]
    fn batch_gradient_is_mean_of_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let actor = Actor::new(5, 2, 16, &mut rng);
        let critic = Critic::new(5, 2, 16, &mut rng);
        let states: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lo = [-0.5, -0.5];
        let hi = [0.5, 0.5];
        let full = actor_gradient(&actor, &critic, &states, 4, Some((&lo, &hi))).flat();
        let mut mean = vec![0.0; full.len()];
        for b in 0..4 {
            let g = actor_gradient(&actor, &critic, &states[b * 5..(b + 1) * 5], 1, Some((&lo, &hi))).flat();
            for (m, x) in mean.iter_mut().zip(g) {
                *m += x / 4.0;
            }
        }
        for (a, b) in full.iter().zip(mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_derived_single_unit_update() {
        // actor: s -> relu(w1 s + b1) -> relu(w2 h + b2) -> w3 h + b3
        // critic: Q = c3 relu(c2a h1 + c2b a + cb2) + cb3, h1 = relu(c1 s + cb1)
        let mut actor = Actor::zeros(1, 1, 1);
        actor.l1.weight[0] = 0.5;
        actor.l1.bias[0] = 0.1;
        actor.l2.weight[0] = 2.0;
        actor.l3.weight[0] = 0.7;
        actor.l3.bias[0] = -0.2;
        let mut critic = Critic::zeros(1, 1, 1);
        critic.l1.weight[0] = 1.0;
        critic.l2.weight[0] = 0.3; // h1 input
        critic.l2.weight[1] = 1.5; // action input
        critic.l2.bias[0] = 0.4;
        critic.l3.weight[0] = -0.8;
        let s = 2.0f64;
        let h1 = 0.5 * s + 0.1; // 1.1
        let h2 = 2.0 * h1; // 2.2
        let a = 0.7 * h2 - 0.2; // 1.34
        let pre = 0.3 * s.max(0.0) + 1.5 * a + 0.4;
        assert!(pre > 0.0);
        let dq_da = -0.8 * 1.5;
        // chain rule through the actor
        let g_w3 = dq_da * h2;
        let g_b3 = dq_da;
        let g_w2 = dq_da * 0.7 * h1;
        let g_w1 = dq_da * 0.7 * 2.0 * s;
        let g_b1 = dq_da * 0.7 * 2.0;
        let g = actor_gradient(&actor, &critic, &[s], 1, None);
        assert!((g.l3.weight[0] - g_w3).abs() < 1e-12);
        assert!((g.l3.bias[0] - g_b3).abs() < 1e-12);
        assert!((g.l2.weight[0] - g_w2).abs() < 1e-12);
        assert!((g.l1.weight[0] - g_w1).abs() < 1e-12);
        assert!((g.l1.bias[0] - g_b1).abs() < 1e-12);

        // one SGD ascent step moves each weight by lr * gradient
        let hp = Hyperparams {
            actor_lr: 0.01,
            ..Default::default()
        };
        let mut agent = Ddpg::from_networks(
            actor.clone(),
            critic.clone(),
            actor.clone(),
            critic,
            vec![-10.0],
            vec![10.0],
            hp,
        );
        let t = Transition {
            state: vec![s],
            action: vec![0.0],
            reward: 0.0,
            next_state: vec![s],
            terminal: true,
        };
        agent.actor_update(&[&t]).unwrap();
        // inverting factor at a = 1.34 with negative gradient: (a + 10) / 20
        let factor = (a + 10.0) / 20.0;
        assert!((agent.actor.l3.weight[0] - (0.7 + 0.01 * factor * g_w3)).abs() < 1e-12);
        assert!((agent.actor.l1.weight[0] - (0.5 + 0.01 * factor * g_w1)).abs() < 1e-12);
    }

    fn probe_indices(rng: &mut ChaCha8Rng, n_params: usize, count: usize) -> Vec<usize> {
        rand::seq::index::sample(rng, n_params, count).into_vec()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let critic = Critic::new(6, 2, 12, &mut rng);
        let batch = random_batch(&mut rng, 5, 6, 2);
        let refs: Vec<&Transition> = batch.iter().collect();
        let y: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, grad) = critic_loss_and_grad(&critic, &refs, &y);
        let g = grad.flat();
        let base = critic.flat();
        let h = 1e-5;
        for k in probe_indices(&mut rng, base.len(), 20) {
            let mut c = critic.clone();
            let mut p = base.clone();
            p[k] += h;
            c.set_flat(&p);
            let up = critic_loss(&c, &refs, &y);
            p[k] -= 2.0 * h;
            c.set_flat(&p);
            let down = critic_loss(&c, &refs, &y);
            let fd = (up - down) / (2.0 * h);
            assert!(
                rel_err(g[k], fd) < 1e-4 || (g[k] - fd).abs() < 1e-9,
                "param {k}: {} vs {fd}",
                g[k]
            );
        }
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let actor = Actor::new(6, 2, 12, &mut rng);
        let mut critic = Critic::new(6, 2, 12, &mut rng);
        // larger head so the objective is not flat in the actor output
        critic.l3 = Dense::fan_in(12, 1, &mut rng);
        let states: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = actor_gradient(&actor, &critic, &states, 4, None).flat();
        let base = actor.flat();
        let h = 1e-5;
        for k in probe_indices(&mut rng, base.len(), 20) {
            let mut a = actor.clone();
            let mut p = base.clone();
            p[k] += h;
            a.set_flat(&p);
            let up = actor_objective(&a, &critic, &states, 4);
            p[k] -= 2.0 * h;
            a.set_flat(&p);
            let down = actor_objective(&a, &critic, &states, 4);
            let fd = (up - down) / (2.0 * h);
            assert!(
                rel_err(g[k], fd) < 1e-4 || (g[k] - fd).abs() < 1e-9,
                "param {k}: {} vs {fd}",
                g[k]
            );
        }
    }

    #[test]
    fn anneal_schedule() {
        let hp = Hyperparams {
            episodes: 11,
            noise_final_scale: 0.2,
            ..Default::default()
        };
        assert_eq!(hp.exploration_scale(0), 1.0);
        assert!((hp.exploration_scale(10) - 0.2).abs() < 1e-12);
        assert!((hp.exploration_scale(5) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut c = Critic::new(3, 1, 4, &mut rng);
        let mut g = c.zeros_like();
        g.l3.bias[0] = 1.0;
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, c.n_params());
        let b0 = c.l3.bias[0];
        opt.step(&mut c, &g);
        assert!((c.l3.bias[0] - (b0 - 0.1)).abs() < 1e-6);
    }
}
