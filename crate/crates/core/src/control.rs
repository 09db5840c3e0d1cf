//! Low-level joint control: PD loops on filtered feedback and the rate
//! split between the learned high-level policy and the torque loop.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, BipedModel, BipedState, ExternalPush, N_JOINTS};
use crate::error::SimError;
use crate::filter::LowPassFilter;

/// PD gains per joint in model order (ankle, knee, hip, waist).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: [f64; N_JOINTS],
    pub kd: [f64; N_JOINTS],
}

pub const DEFAULT_GAINS: PdGains = PdGains {
    kp: [3160.0, 2580.0, 1080.0, 720.0],
    kd: [300.0, 150.0, 70.0, 60.0],
};

impl Default for PdGains {
    fn default() -> Self {
        DEFAULT_GAINS
    }
}

impl PdGains {
    pub fn validate(&self) -> Result<(), String> {
        if self.kp.iter().chain(&self.kd).all(|g| *g > 0.0 && g.is_finite()) {
            Ok(())
        } else {
            Err("PD gains must be positive".into())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub physics_hz: u32,
    pub llc_hz: u32,
    pub hlc_hz: u32,
    pub feedback_cutoff_hz: f64,
    pub observation_cutoff_hz: f64,
}

impl Default for ControlSchedule {
    fn default() -> Self {
        ControlSchedule {
            physics_hz: 1000,
            llc_hz: 1000,
            hlc_hz: 25,
            feedback_cutoff_hz: 50.0,
            observation_cutoff_hz: 10.0,
        }
    }
}

impl ControlSchedule {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.hlc_hz > 0
            && self.physics_hz >= self.llc_hz
            && self.llc_hz >= self.hlc_hz
            && self.physics_hz.is_multiple_of(self.llc_hz)
            && self.llc_hz.is_multiple_of(self.hlc_hz);
        if !ok {
            return Err(format!(
                "rates must satisfy physics >= llc >= hlc as integer multiples, got {}/{}/{}",
                self.physics_hz, self.llc_hz, self.hlc_hz
            ));
        }
        if self.feedback_cutoff_hz >= self.llc_hz as f64 / 2.0 || self.observation_cutoff_hz >= self.hlc_hz as f64 / 2.0
        {
            return Err("filter cutoffs must lie below the Nyquist rate of their loop".into());
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.physics_hz as f64
    }

    pub fn physics_per_llc(&self) -> usize {
        (self.physics_hz / self.llc_hz) as usize
    }

    pub fn llc_per_hlc(&self) -> usize {
        (self.llc_hz / self.hlc_hz) as usize
    }

    /// Physics steps per high-level action.
    pub fn physics_per_hlc(&self) -> usize {
        (self.physics_hz / self.hlc_hz) as usize
    }
}

/// u = Kp (target - measured) - Kd measured_rate, clamped to `limits`.
pub fn pd_torque(
    gains: &PdGains,
    limits: &[f64; N_JOINTS],
    target: &[f64; N_JOINTS],
    measured: &[f64; N_JOINTS],
    measured_rate: &[f64; N_JOINTS],
) -> [f64; N_JOINTS] {
    std::array::from_fn(|j| {
        let u = gains.kp[j] * (target[j] - measured[j]) - gains.kd[j] * measured_rate[j];
        u.clamp(-limits[j], limits[j])
    })
}

/// PD torque loop with its own feedback filters.
#[derive(Debug, Clone)]
pub struct LowLevelController {
    pub gains: PdGains,
    angle_filters: Vec<LowPassFilter>,
    rate_filters: Vec<LowPassFilter>,
    /// Physics steps left before the next torque update.
    hold: usize,
    torque: [f64; N_JOINTS],
    physics_per_llc: usize,
}

impl LowLevelController {
    pub fn new(gains: PdGains, schedule: &ControlSchedule) -> Self {
        let make = || {
            (0..N_JOINTS)
                .map(|_| LowPassFilter::butterworth2(schedule.feedback_cutoff_hz, schedule.llc_hz as f64))
                .collect::<Vec<_>>()
        };
        LowLevelController {
            gains,
            angle_filters: make(),
            rate_filters: make(),
            hold: 0,
            torque: [0.0; N_JOINTS],
            physics_per_llc: schedule.physics_per_llc(),
        }
    }

    /// Primes the feedback filters on `state`.
    pub fn reset(&mut self, state: &BipedState) {
        let (q, qd) = (state.joint_angles(), state.joint_velocities());
        for j in 0..N_JOINTS {
            self.angle_filters[j].reset_to(q[j]);
            self.rate_filters[j].reset_to(qd[j]);
        }
        self.hold = 0;
        self.torque = [0.0; N_JOINTS];
    }

    /// Torque for the coming physics step. Feedback is filtered; the raw
    /// state never reaches the PD law.
    pub fn torque(&mut self, model: &BipedModel, target: &[f64; N_JOINTS], state: &BipedState) -> [f64; N_JOINTS] {
        if self.hold == 0 {
            let (q, qd) = (state.joint_angles(), state.joint_velocities());
            let angle: [f64; N_JOINTS] = std::array::from_fn(|j| self.angle_filters[j].filter_step(q[j]));
            let rate: [f64; N_JOINTS] = std::array::from_fn(|j| self.rate_filters[j].filter_step(qd[j]));
            self.torque = pd_torque(&self.gains, &model.torque_limits(), target, &angle, &rate);
            self.hold = self.physics_per_llc;
        }
        self.hold -= 1;
        self.torque
    }

    pub fn last_torque(&self) -> [f64; N_JOINTS] {
        self.torque
    }
}

/// Holds `target` fixed for `n_steps` physics steps of PD control and
/// returns the final state.
pub fn run_llc_window(
    model: &BipedModel,
    state: &BipedState,
    llc: &mut LowLevelController,
    target: &[f64; N_JOINTS],
    n_steps: usize,
    push: Option<&ExternalPush>,
    dt: f64,
) -> Result<BipedState, SimError> {
    run_llc_window_with(model, state, llc, target, n_steps, push, dt, |_, _| {})
}

/// As [`run_llc_window`], calling `observer(state, torque)` after every
/// physics step with the post-step state and the torque that produced it.
#[allow(clippy::too_many_arguments)]
pub fn run_llc_window_with<F>(
    model: &BipedModel,
    state: &BipedState,
    llc: &mut LowLevelController,
    target: &[f64; N_JOINTS],
    n_steps: usize,
    push: Option<&ExternalPush>,
    dt: f64,
    mut observer: F,
) -> Result<BipedState, SimError>
where
    F: FnMut(&BipedState, &[f64; N_JOINTS]),
{
    let target = model.clamp_angles(target);
    let mut s = state.clone();
    for _ in 0..n_steps {
        let tau = llc.torque(model, &target, &s);
        s = dynamics::step(model, &s, &tau, push, dt)?;
        observer(&s, &tau);
    }
    Ok(s)
}

/// Static equilibrium of the standing biped under raw-feedback PD at
/// `target`, found by damped relaxation from the settled contact pose.
/// Velocities of the returned state are zero and its clock reads 0.
pub fn standing_equilibrium(
    model: &BipedModel,
    gains: &PdGains,
    target: &[f64; N_JOINTS],
) -> Result<BipedState, SimError> {
    let dt = dynamics::PHYSICS_DT;
    let target = model.clamp_angles(target);
    let limits = model.torque_limits();
    let mut s = dynamics::settled_state(model);
    for _ in 0..8000 {
        let tau = pd_torque(gains, &limits, &target, &s.joint_angles(), &s.joint_velocities());
        s = dynamics::step(model, &s, &tau, None, dt)?;
        for v in s.qd.iter_mut() {
            *v *= 0.998;
        }
    }
    s.qd = [0.0; dynamics::N_DOF];
    s.time = 0.0;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_default_model, com_state, nominal_state, settled_state, KNEE, PHYSICS_DT};

    const LIMITS: [f64; 4] = [500.0; 4];

    #[test]
    fn defaults_match_table() {
        assert_eq!(DEFAULT_GAINS.kp, [3160.0, 2580.0, 1080.0, 720.0]);
        assert_eq!(DEFAULT_GAINS.kd, [300.0, 150.0, 70.0, 60.0]);
        let s = ControlSchedule::default();
        assert!(s.validate().is_ok());
        assert_eq!(s.physics_per_hlc(), 40);
    }

    #[test]
    fn pd_hand_arithmetic() {
        let z = [0.0; 4];
        assert_eq!(pd_torque(&DEFAULT_GAINS, &LIMITS, &z, &z, &z), [0.0; 4]);
        let u = pd_torque(&DEFAULT_GAINS, &LIMITS, &[0.1, 0.0, 0.0, 0.0], &z, &z);
        assert!((u[0] - 316.0).abs() < 1e-9);
        let u = pd_torque(&DEFAULT_GAINS, &LIMITS, &z, &z, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(u[1], -150.0);
    }

    #[test]
    fn pd_output_is_clamped() {
        let z = [0.0; 4];
        let u = pd_torque(&DEFAULT_GAINS, &LIMITS, &[1.0, -1.0, 1.0, 1.0], &z, &z);
        assert_eq!(u, [500.0, -500.0, 500.0, 500.0]);
    }

    #[test]
    fn invalid_schedule_rejected() {
        let mut s = ControlSchedule::default();
        s.hlc_hz = 30;
        assert!(s.validate().is_err());
        s.hlc_hz = 2000;
        assert!(s.validate().is_err());
    }

    #[test]
    fn empty_window_is_identity() {
        let model = build_default_model();
        let s = settled_state(&model);
        let mut llc = LowLevelController::new(DEFAULT_GAINS, &ControlSchedule::default());
        llc.reset(&s);
        let out = run_llc_window(&model, &s, &mut llc, &s.joint_angles(), 0, None, PHYSICS_DT).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn holds_stable_pose() {
        let model = build_default_model();
        let s = settled_state(&model);
        let mut llc = LowLevelController::new(DEFAULT_GAINS, &ControlSchedule::default());
        llc.reset(&s);
        let target = s.joint_angles();
        let out = run_llc_window(&model, &s, &mut llc, &target, 1000, None, PHYSICS_DT).unwrap();
        for (a, t) in out.joint_angles().iter().zip(target) {
            assert!((a - t).abs() < 0.02);
        }
    }

    #[test]
    fn upright_pose_is_statically_stable_under_pd() {
        // gravity stiffness from finite differences of potential energy,
        // foot held fixed
        let model = build_default_model();
        let energy = |th: [f64; 4]| {
            let mut s = nominal_state(&model);
            s.q[3..].copy_from_slice(&th);
            crate::dynamics::mechanical_energy(&model, &s)
        };
        let h = 1e-4;
        let k = nalgebra::Matrix4::from_fn(|i, j| {
            let at = |di: f64, dj: f64| {
                let mut t = [0.0; 4];
                t[i] += di;
                t[j] += dj;
                energy(t)
            };
            let hess = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
            hess + if i == j { DEFAULT_GAINS.kp[i] } else { 0.0 }
        });
        let min = k.symmetric_eigenvalues().min();
        assert!(min > 100.0, "{min}");
    }

    #[test]
    fn quiet_standing_keeps_pelvis_height() {
        let model = build_default_model();
        let s = settled_state(&model);
        let h0 = crate::dynamics::Kinematics::new(&model, &s.q, &s.qd).com[crate::dynamics::PELVIS][1];
        let mut llc = LowLevelController::new(DEFAULT_GAINS, &ControlSchedule::default());
        llc.reset(&s);
        let target = nominal_state(&model).joint_angles();
        let mut max_dev: f64 = 0.0;
        let out = run_llc_window_with(&model, &s, &mut llc, &target, 5000, None, PHYSICS_DT, |st, _| {
            let h = crate::dynamics::Kinematics::new(&model, &st.q, &st.qd).com[crate::dynamics::PELVIS][1];
            max_dev = max_dev.max((h - h0).abs());
        })
        .unwrap();
        assert!(max_dev < 0.02, "{max_dev}");
        let xd = com_state(&model, &out).2;
        assert!(xd.abs() < 5e-3, "{xd}");
    }

    #[test]
    fn knee_step_response() {
        // gravity off, floating: knee target steps 0.1 rad into flexion
        let mut model = build_default_model();
        model.gravity = 0.0;
        model.contact.enabled = false;
        let mut s = nominal_state(&model);
        s.q[1] += 0.3;
        s.q[3 + KNEE] = -0.3;
        let mut llc = LowLevelController::new(DEFAULT_GAINS, &ControlSchedule::default());
        llc.reset(&s);
        let mut target = s.joint_angles();
        target[KNEE] -= 0.1;
        let goal = target[KNEE];
        let mut overshoot: f64 = 0.0;
        let mut settled_at = None;
        let mut cur = s.clone();
        for k in 0..1000 {
            cur = run_llc_window(&model, &cur, &mut llc, &target, 1, None, PHYSICS_DT).unwrap();
            let err = cur.joint_angles()[KNEE] - goal;
            overshoot = overshoot.max(-err);
            if err.abs() < 0.01 && settled_at.is_none() {
                settled_at = Some(k);
            } else if err.abs() >= 0.01 {
                settled_at = None;
            }
        }
        assert!(settled_at.is_some(), "knee did not settle within 1 s");
        assert!(overshoot < 0.05, "overshoot {overshoot}");
    }

    #[test]
    fn window_rate_contract() {
        // 60 s of 25 Hz actions = 1500 windows of exactly 40 physics steps
        let model = build_default_model();
        let sched = ControlSchedule::default();
        let mut s = settled_state(&model);
        let mut llc = LowLevelController::new(DEFAULT_GAINS, &sched);
        llc.reset(&s);
        let target = s.joint_angles();
        let mut steps = 0usize;
        for _ in 0..(60 * sched.hlc_hz) {
            s = run_llc_window_with(
                &model,
                &s,
                &mut llc,
                &target,
                sched.physics_per_hlc(),
                None,
                sched.dt(),
                |_, _| steps += 1,
            )
            .unwrap();
        }
        assert_eq!(steps, 60_000);
        assert!((s.time - 60.0).abs() < 1e-6);
    }

    #[test]
    fn standing_equilibrium_is_stationary() {
        let model = build_default_model();
        let target = nominal_state(&model).joint_angles();
        let s = standing_equilibrium(&model, &DEFAULT_GAINS, &target).unwrap();
        assert_eq!(s.time, 0.0);
        let mut llc = LowLevelController::new(DEFAULT_GAINS, &ControlSchedule::default());
        llc.reset(&s);
        let out = run_llc_window(&model, &s, &mut llc, &target, 2000, None, PHYSICS_DT).unwrap();
        let drift = (0..3 + 4).map(|i| (out.q[i] - s.q[i]).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-5, "{drift}");
        assert!(out.contact.heel.active && out.contact.toe.active);
    }
}
