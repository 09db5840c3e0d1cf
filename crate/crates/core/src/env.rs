//! Environments the learner is trained on: the balance task and a 1-D
//! point-mass task used to smoke-test the learner itself.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{run_llc_window_with, standing_equilibrium, ControlSchedule, LowLevelController, PdGains};
use crate::ddpg::{Environment, Hyperparams, OptimizerKind, StepOutcome};
use crate::dynamics::{
    com_from_kinematics, nominal_state, settled_state, BipedModel, BipedState, ExternalPush, Kinematics, Pivot,
    N_JOINTS, PELVIS, TORSO,
};
use crate::error::SimError;
use crate::observation::{observe, FilterBank, OBS_DIM};
use crate::reward::{compute_reward, RewardBreakdown, RewardConfig, RewardInputs};

/// Random pushes applied during training episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushDistribution {
    /// Chance that an episode contains a push.
    pub probability: f64,
    /// Force range in N; positive pushes forward.
    pub force_min: f64,
    pub force_max: f64,
    pub duration: f64,
    /// Onset range in s after episode start.
    pub onset_min: f64,
    pub onset_max: f64,
}

impl Default for PushDistribution {
    fn default() -> Self {
        PushDistribution {
            probability: 0.7,
            force_min: -450.0,
            force_max: 750.0,
            duration: 0.1,
            onset_min: 1.0,
            onset_max: 5.0,
        }
    }
}

impl PushDistribution {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err("push probability must lie in [0, 1]".into());
        }
        if self.force_min > self.force_max || self.onset_min > self.onset_max || self.onset_min < 0.0 {
            return Err("push ranges must be ordered and onsets non-negative".into());
        }
        if self.duration <= 0.0 {
            return Err("push duration must be positive".into());
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Option<ExternalPush> {
        if rng.gen::<f64>() >= self.probability {
            return None;
        }
        let force = rng.gen_range(self.force_min..=self.force_max);
        let onset = rng.gen_range(self.onset_min..=self.onset_max);
        Some(ExternalPush::new(force, onset, self.duration))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallCriteria {
    pub min_pelvis_height: f64,
    pub max_torso_pitch: f64,
}

impl Default for FallCriteria {
    fn default() -> Self {
        FallCriteria {
            min_pelvis_height: 0.7,
            max_torso_pitch: 1.0,
        }
    }
}

impl FallCriteria {
    pub fn fallen(&self, model: &BipedModel, state: &BipedState) -> bool {
        let kin = Kinematics::new(model, &state.q, &state.qd);
        kin.com[PELVIS][1] < self.min_pelvis_height || kin.pitch[TORSO].abs() > self.max_torso_pitch
    }
}

/// Horizontal midpoint of the heel and toe sole points.
pub fn foot_center(model: &BipedModel, kin: &Kinematics) -> f64 {
    0.5 * (kin.sole_point(model, Pivot::Heel)[0] + kin.sole_point(model, Pivot::Toe)[0])
}

pub fn reward_inputs(model: &BipedModel, state: &BipedState) -> RewardInputs {
    let kin = Kinematics::new(model, &state.q, &state.qd);
    let (x, z, xd, zd) = com_from_kinematics(model, &kin);
    RewardInputs {
        phi_torso: kin.pitch[TORSO],
        phi_pelvis: kin.pitch[PELVIS],
        x_com: x,
        z_com: z,
        xd_com: xd,
        zd_com: zd,
        x_com_target: foot_center(model, &kin),
    }
}

/// Balance task: one step holds a joint-target action for one high-level
/// period of PD control.
#[derive(Debug, Clone)]
pub struct BalanceEnv {
    pub model: BipedModel,
    pub schedule: ControlSchedule,
    pub reward: RewardConfig,
    pub pushes: PushDistribution,
    pub fall: FallCriteria,
    /// Time cap in s.
    pub episode_seconds: f64,
    llc: LowLevelController,
    filters: FilterBank,
    state: BipedState,
    standing: BipedState,
    push: Option<ExternalPush>,
    last_reward: RewardBreakdown,
    last_observation: Vec<f64>,
}

impl BalanceEnv {
    pub fn new(
        model: BipedModel,
        schedule: ControlSchedule,
        gains: PdGains,
        reward: RewardConfig,
        pushes: PushDistribution,
        episode_seconds: f64,
    ) -> Self {
        let target = nominal_state(&model).joint_angles();
        let standing = standing_equilibrium(&model, &gains, &target).unwrap_or_else(|_| settled_state(&model));
        BalanceEnv {
            state: standing.clone(),
            standing,
            llc: LowLevelController::new(gains, &schedule),
            filters: FilterBank::new(schedule.observation_cutoff_hz, schedule.hlc_hz as f64),
            model,
            schedule,
            reward,
            pushes,
            fall: FallCriteria::default(),
            episode_seconds,
            push: None,
            last_reward: RewardBreakdown::default(),
            last_observation: vec![0.0; OBS_DIM],
        }
    }

    pub fn state(&self) -> &BipedState {
        &self.state
    }

    /// PD equilibrium at the nominal targets; episodes start here.
    pub fn standing_state(&self) -> &BipedState {
        &self.standing
    }

    pub fn push(&self) -> Option<&ExternalPush> {
        self.push.as_ref()
    }

    pub fn last_reward(&self) -> RewardBreakdown {
        self.last_reward
    }

    /// Starts an episode from `state` with an optional push (times are
    /// absolute simulator times) and returns the first observation.
    pub fn reset_to(&mut self, state: BipedState, push: Option<ExternalPush>) -> Vec<f64> {
        self.state = state;
        self.push = push;
        self.llc.reset(&self.state);
        self.filters.clear();
        self.last_reward = compute_reward(&self.reward, &reward_inputs(&self.model, &self.state));
        self.last_observation = observe(&self.model, &self.state, &mut self.filters).to_vec();
        self.last_observation.clone()
    }

    /// Action clamped to the joint limits.
    pub fn bounded_target(&self, action: &[f64]) -> [f64; N_JOINTS] {
        let raw: [f64; N_JOINTS] = std::array::from_fn(|j| action[j]);
        self.model.clamp_angles(&raw)
    }

    /// As [`Environment::step`], calling `observer` after every physics
    /// step with the post-step state and applied torque.
    pub fn step_observed<F>(&mut self, action: &[f64], observer: F) -> Result<StepOutcome, SimError>
    where
        F: FnMut(&BipedState, &[f64; N_JOINTS]),
    {
        let target = self.bounded_target(action);
        self.state = run_llc_window_with(
            &self.model,
            &self.state,
            &mut self.llc,
            &target,
            self.schedule.physics_per_hlc(),
            self.push.as_ref(),
            self.schedule.dt(),
            observer,
        )?;
        let fell = self.fall.fallen(&self.model, &self.state);
        self.last_reward = compute_reward(&self.reward, &reward_inputs(&self.model, &self.state));
        let observation = observe(&self.model, &self.state, &mut self.filters).to_vec();
        self.last_observation.clone_from(&observation);
        let timed_out = self.state.time >= self.episode_seconds - 0.5 * self.schedule.dt();
        Ok(StepOutcome {
            observation,
            reward: self.last_reward.total,
            terminal: fell,
            done: fell || timed_out,
        })
    }

    /// Steps per episode at the time cap.
    pub fn max_steps(&self) -> usize {
        (self.episode_seconds * self.schedule.hlc_hz as f64).round() as usize
    }
}

impl Environment for BalanceEnv {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.model.joints.iter().map(|j| j.lower).collect(),
            self.model.joints.iter().map(|j| j.upper).collect(),
        )
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let push = self.pushes.sample(rng);
        self.reset_to(self.standing.clone(), push)
    }

    /// A blow-up ends the episode as a failure with zero reward.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, SimError> {
        match self.step_observed(action, |_, _| {}) {
            Err(SimError::Diverged { .. }) => Ok(StepOutcome {
                observation: self.last_observation.clone(),
                reward: 0.0,
                terminal: true,
                done: true,
            }),
            other => other,
        }
    }
}

/// Double-integrator point mass on a line. The action is an acceleration
/// in [-1, 1]; the reward is `-x²` per step.
#[derive(Debug, Clone)]
pub struct PointMassEnv {
    pub dt: f64,
    pub max_steps: usize,
    x: f64,
    v: f64,
    steps: usize,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        PointMassEnv {
            dt: 0.1,
            max_steps: 40,
            x: 0.0,
            v: 0.0,
            steps: 0,
        }
    }
}

impl PointMassEnv {
    pub fn position(&self) -> f64 {
        self.x
    }

    /// Learner settings sized for this task.
    pub fn hyperparams() -> Hyperparams {
        Hyperparams {
            episodes: 400,
            episode_steps: 40,
            hidden: 32,
            batch_size: 32,
            buffer_capacity: 100_000,
            warmup: 200,
            tau: 0.005,
            optimizer: OptimizerKind::Adam,
            ..Default::default()
        }
    }
}

impl Environment for PointMassEnv {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0], vec![1.0])
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.x = if rng.gen::<bool>() { 1.0 } else { -1.0 } * rng.gen_range(0.5..1.0);
        self.v = 0.0;
        self.steps = 0;
        vec![self.x, self.v]
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, SimError> {
        let a = action[0].clamp(-1.0, 1.0);
        self.v += a * self.dt;
        self.x += self.v * self.dt;
        self.steps += 1;
        Ok(StepOutcome {
            observation: vec![self.x, self.v],
            reward: -self.x * self.x,
            terminal: false,
            done: self.steps >= self.max_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::DEFAULT_GAINS;
    use crate::dynamics::build_default_model;
    use rand::SeedableRng;

    fn env(pushes: PushDistribution) -> BalanceEnv {
        BalanceEnv::new(
            build_default_model(),
            ControlSchedule::default(),
            DEFAULT_GAINS,
            RewardConfig::default(),
            pushes,
            2.0,
        )
    }

    fn no_pushes() -> PushDistribution {
        PushDistribution {
            probability: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn holding_pose_earns_near_maximum_reward() {
        let mut e = env(no_pushes());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = e.reset(&mut rng);
        assert_eq!(obs.len(), OBS_DIM);
        let hold = nominal_state(&e.model).joint_angles();
        let mut steps = 0;
        loop {
            let out = e.step(&hold).unwrap();
            steps += 1;
            assert!(!out.terminal);
            assert!(out.reward > 9.45, "{}", out.reward);
            if out.done {
                break;
            }
        }
        assert_eq!(steps, e.max_steps());
        assert_eq!(steps, 50);
    }

    #[test]
    fn one_step_spans_one_high_level_period() {
        let mut e = env(no_pushes());
        e.reset(&mut ChaCha8Rng::seed_from_u64(0));
        let mut count = 0;
        let hold = nominal_state(&e.model).joint_angles();
        e.step_observed(&hold, |_, _| count += 1).unwrap();
        assert_eq!(count, 40);
        assert!((e.state().time - 0.04).abs() < 1e-9);
    }

    #[test]
    fn collapsing_is_terminal() {
        let mut e = env(no_pushes());
        e.episode_seconds = 10.0;
        e.reset(&mut ChaCha8Rng::seed_from_u64(0));
        // fold at the hip
        let mut out = e.step(&[0.0, 0.0, 1.8, 0.5]).unwrap();
        for _ in 0..200 {
            if out.done {
                break;
            }
            out = e.step(&[0.0, -2.0, 1.8, 0.5]).unwrap();
        }
        assert!(out.terminal && out.done);
        assert!(e.state().time < 10.0);
    }

    #[test]
    fn push_sampling_respects_ranges() {
        let d = PushDistribution::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = 0;
        for _ in 0..500 {
            if let Some(p) = d.sample(&mut rng) {
                seen += 1;
                assert!(p.force >= d.force_min && p.force <= d.force_max);
                assert!(p.start >= d.onset_min && p.start <= d.onset_max);
            }
        }
        assert!((300..400).contains(&seen), "{seen}");
    }

    #[test]
    fn point_mass_kinematics() {
        let mut e = PointMassEnv::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = e.reset(&mut rng);
        let x0 = s[0];
        let out = e.step(&[1.0]).unwrap();
        assert!((out.observation[1] - 0.1).abs() < 1e-12);
        assert!((out.observation[0] - (x0 + 0.01)).abs() < 1e-12);
        assert_eq!(out.reward, -out.observation[0].powi(2));
    }
}
