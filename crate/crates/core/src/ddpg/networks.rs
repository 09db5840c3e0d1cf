//! Actor and critic networks.
//!
//! Actor: obs → 100 ReLU → 100 ReLU → action (linear).
//! Critic: obs → 100 ReLU, concatenated with the action → 100 ReLU → Q.
//! The action bypasses the critic's first hidden layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{relu_backward, relu_inplace, Dense, Parameters};

pub const HIDDEN: usize = 100;
/// Final-layer initialization bound.
pub const FINAL_INIT: f64 = 3e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub l1: Dense,
    pub l2: Dense,
    pub l3: Dense,
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ActorPass {
    pub batch: usize,
    pub input: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub out: Vec<f64>,
}

impl Actor {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Actor {
            l1: Dense::fan_in(obs_dim, hidden, rng),
            l2: Dense::fan_in(hidden, hidden, rng),
            l3: Dense::uniform(hidden, act_dim, FINAL_INIT, rng),
        }
    }

    pub fn zeros(obs_dim: usize, act_dim: usize, hidden: usize) -> Self {
        Actor {
            l1: Dense::zeros(obs_dim, hidden),
            l2: Dense::zeros(hidden, hidden),
            l3: Dense::zeros(hidden, act_dim),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.l1.n_in
    }

    pub fn act_dim(&self) -> usize {
        self.l3.n_out
    }

    pub fn forward_batch(&self, states: &[f64], batch: usize) -> ActorPass {
        let mut h1 = self.l1.forward(states, batch);
        relu_inplace(&mut h1);
        let mut h2 = self.l2.forward(&h1, batch);
        relu_inplace(&mut h2);
        let out = self.l3.forward(&h2, batch);
        ActorPass {
            batch,
            input: states.to_vec(),
            h1,
            h2,
            out,
        }
    }

    /// Raw (unclamped) action for one state.
    pub fn forward(&self, state: &[f64]) -> Vec<f64> {
        self.forward_batch(state, 1).out
    }

    /// Accumulates `dout`-weighted parameter gradients into `grad`.
    pub fn backward(&self, pass: &ActorPass, dout: &[f64], grad: &mut Actor) {
        let b = pass.batch;
        let mut dh2 = self
            .l3
            .backward(&pass.h2, dout, b, Some(&mut grad.l3), true)
            .expect("input gradient requested");
        relu_backward(&pass.h2, &mut dh2);
        let mut dh1 = self
            .l2
            .backward(&pass.h1, &dh2, b, Some(&mut grad.l2), true)
            .expect("input gradient requested");
        relu_backward(&pass.h1, &mut dh1);
        self.l1.backward(&pass.input, &dh1, b, Some(&mut grad.l1), false);
    }

    pub fn zeros_like(&self) -> Self {
        Actor {
            l1: self.l1.zeros_like(),
            l2: self.l2.zeros_like(),
            l3: self.l3.zeros_like(),
        }
    }
}

impl Parameters for Actor {
    fn layers(&self) -> Vec<&Dense> {
        vec![&self.l1, &self.l2, &self.l3]
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        vec![&mut self.l1, &mut self.l2, &mut self.l3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub l1: Dense,
    /// Input is `[h1, action]`.
    pub l2: Dense,
    pub l3: Dense,
}

#[derive(Debug, Clone)]
pub struct CriticPass {
    pub batch: usize,
    pub states: Vec<f64>,
    pub h1: Vec<f64>,
    /// `[h1, action]` per row.
    pub joined: Vec<f64>,
    pub h2: Vec<f64>,
    pub q: Vec<f64>,
}

impl Critic {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Critic {
            l1: Dense::fan_in(obs_dim, hidden, rng),
            l2: Dense::fan_in(hidden + act_dim, hidden, rng),
            l3: Dense::uniform(hidden, 1, FINAL_INIT, rng),
        }
    }

    pub fn zeros(obs_dim: usize, act_dim: usize, hidden: usize) -> Self {
        Critic {
            l1: Dense::zeros(obs_dim, hidden),
            l2: Dense::zeros(hidden + act_dim, hidden),
            l3: Dense::zeros(hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.l1.n_out
    }

    pub fn act_dim(&self) -> usize {
        self.l2.n_in - self.l1.n_out
    }

    pub fn forward_batch(&self, states: &[f64], actions: &[f64], batch: usize) -> CriticPass {
        let (hidden, act) = (self.hidden(), self.act_dim());
        debug_assert_eq!(actions.len(), batch * act);
        let mut h1 = self.l1.forward(states, batch);
        relu_inplace(&mut h1);
        let mut joined = Vec::with_capacity(batch * (hidden + act));
        for b in 0..batch {
            joined.extend_from_slice(&h1[b * hidden..(b + 1) * hidden]);
            joined.extend_from_slice(&actions[b * act..(b + 1) * act]);
        }
        let mut h2 = self.l2.forward(&joined, batch);
        relu_inplace(&mut h2);
        let q = self.l3.forward(&h2, batch);
        CriticPass {
            batch,
            states: states.to_vec(),
            h1,
            joined,
            h2,
            q,
        }
    }

    pub fn forward(&self, state: &[f64], action: &[f64]) -> f64 {
        self.forward_batch(state, action, 1).q[0]
    }

    /// Backpropagates `dq` (one value per row). Parameter gradients are
    /// accumulated into `grad` when given; the gradient with respect to the
    /// action inputs is returned.
    pub fn backward(&self, pass: &CriticPass, dq: &[f64], grad: Option<&mut Critic>) -> Vec<f64> {
        let b = pass.batch;
        let (hidden, act) = (self.hidden(), self.act_dim());
        let (g3, g2, g1) = match grad {
            Some(g) => (Some(&mut g.l3), Some(&mut g.l2), Some(&mut g.l1)),
            None => (None, None, None),
        };
        let mut dh2 = self.l3.backward(&pass.h2, dq, b, g3, true).expect("input gradient");
        relu_backward(&pass.h2, &mut dh2);
        let djoined = self
            .l2
            .backward(&pass.joined, &dh2, b, g2, true)
            .expect("input gradient");
        let width = hidden + act;
        let mut dh1 = Vec::with_capacity(b * hidden);
        let mut da = Vec::with_capacity(b * act);
        for row in djoined.chunks_exact(width) {
            dh1.extend_from_slice(&row[..hidden]);
            da.extend_from_slice(&row[hidden..]);
        }
        if let Some(g1) = g1 {
            relu_backward(&pass.h1, &mut dh1);
            self.l1.backward(&pass.states, &dh1, b, Some(g1), false);
        }
        da
    }

    pub fn zeros_like(&self) -> Self {
        Critic {
            l1: self.l1.zeros_like(),
            l2: self.l2.zeros_like(),
            l3: self.l3.zeros_like(),
        }
    }
}

impl Parameters for Critic {
    fn layers(&self) -> Vec<&Dense> {
        vec![&self.l1, &self.l2, &self.l3]
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        vec![&mut self.l1, &mut self.l2, &mut self.l3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Second, loop-based evaluation used as an independent oracle.
    fn dense_ref(l: &Dense, x: &[f64], relu: bool) -> Vec<f64> {
        let mut y = vec![0.0; l.n_out];
        for o in 0..l.n_out {
            let mut acc = l.bias[o];
            for i in 0..l.n_in {
                acc += l.weight[o * l.n_in + i] * x[i];
            }
            y[o] = if relu { acc.max(0.0) } else { acc };
        }
        y
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Actor::new(35, 4, HIDDEN, &mut rng);
        assert_eq!((a.l1.n_in, a.l1.n_out, a.l2.n_out, a.l3.n_out), (35, 100, 100, 4));
        let c = Critic::new(35, 4, HIDDEN, &mut rng);
        assert_eq!((c.l1.n_in, c.l1.n_out), (35, 100));
        assert_eq!((c.l2.n_in, c.l2.n_out, c.l3.n_out), (104, 100, 1));
        assert!(a.l3.params().all(|p| p.abs() <= FINAL_INIT));
    }

    #[test]
    fn zero_weights() {
        let a = Actor::zeros(35, 4, HIDDEN);
        assert_eq!(a.forward(&[1.0; 35]), vec![0.0; 4]);
        let c = Critic::zeros(35, 4, HIDDEN);
        assert_eq!(c.forward(&[1.0; 35], &[0.3; 4]), 0.0);
    }

    #[test]
    fn actor_is_deterministic_and_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Actor::new(35, 4, HIDDEN, &mut rng);
        let s = random_vec(&mut rng, 35);
        assert_eq!(a.forward(&s), a.forward(&s));
        let h1 = dense_ref(&a.l1, &s, true);
        let h2 = dense_ref(&a.l2, &h1, true);
        let want = dense_ref(&a.l3, &h2, false);
        for (g, w) in a.forward(&s).iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = Critic::new(35, 4, HIDDEN, &mut rng);
        let s = random_vec(&mut rng, 35);
        let a = random_vec(&mut rng, 4);
        let mut joined = dense_ref(&c.l1, &s, true);
        joined.extend_from_slice(&a);
        let h2 = dense_ref(&c.l2, &joined, true);
        let want = dense_ref(&c.l3, &h2, false)[0];
        assert!((c.forward(&s, &a) - want).abs() < 1e-12);
    }

    #[test]
    fn critic_ignores_action_with_zeroed_action_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut c = Critic::new(35, 4, HIDDEN, &mut rng);
        for o in 0..HIDDEN {
            for i in HIDDEN..HIDDEN + 4 {
                c.l2.weight[o * (HIDDEN + 4) + i] = 0.0;
            }
        }
        let s = random_vec(&mut rng, 35);
        let q0 = c.forward(&s, &[0.0; 4]);
        let q1 = c.forward(&s, &[0.5, -0.3, 0.9, -1.0]);
        assert_eq!(q0, q1);
    }

    #[test]
    fn batch_rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Actor::new(35, 4, HIDDEN, &mut rng);
        let s = random_vec(&mut rng, 70);
        let both = a.forward_batch(&s, 2).out;
        assert_eq!(&both[..4], &a.forward(&s[..35])[..]);
        assert_eq!(&both[4..], &a.forward(&s[35..])[..]);
    }
}
