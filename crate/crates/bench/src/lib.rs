//! Fixtures shared by the benchmarks.

use balance_core::control::{ControlSchedule, LowLevelController, DEFAULT_GAINS};
use balance_core::ddpg::{Ddpg, Hyperparams, ReplayBuffer, Transition};
use balance_core::dynamics::{build_default_model, nominal_state, settled_state, BipedModel, BipedState};
use balance_core::observation::OBS_DIM;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Standing {
    pub model: BipedModel,
    pub state: BipedState,
    pub llc: LowLevelController,
    pub target: [f64; 4],
}

pub fn standing() -> Standing {
    let model = build_default_model();
    let state = settled_state(&model);
    let mut llc = LowLevelController::new(DEFAULT_GAINS, &ControlSchedule::default());
    llc.reset(&state);
    let target = nominal_state(&model).joint_angles();
    Standing {
        model,
        state,
        llc,
        target,
    }
}

/// Agent with default network sizes and a buffer of random transitions.
pub fn agent_and_buffer(seed: u64, transitions: usize) -> (Ddpg, ReplayBuffer, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = build_default_model();
    let low: Vec<f64> = model.joints.iter().map(|j| j.lower).collect();
    let high: Vec<f64> = model.joints.iter().map(|j| j.upper).collect();
    let agent = Ddpg::new(OBS_DIM, low.clone(), high.clone(), Hyperparams::default(), &mut rng);
    let mut buffer = ReplayBuffer::new(transitions);
    for _ in 0..transitions {
        let mut obs = || (0..OBS_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (state, next_state) = (obs(), obs());
        let action = low.iter().zip(&high).map(|(l, h)| rng.gen_range(*l..*h)).collect();
        buffer.push(Transition {
            state,
            action,
            reward: rng.gen_range(0.0..10.0),
            next_state,
            terminal: rng.gen_bool(0.05),
        });
    }
    (agent, buffer, rng)
}
