//! Push-recovery trials and the searches built on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Direction, ExperimentConfig};
use super::log::{RolloutLog, RolloutRow};
use crate::analytics::{capture_point, impulse_budget, LipState};
use crate::ddpg::Ddpg;
use crate::dynamics::{
    com_from_kinematics, com_state, nominal_state, BipedModel, BipedState, ExternalPush, Kinematics, FOOT,
    NOMINAL_COM_HEIGHT, N_JOINTS, PELVIS, TORSO,
};
use crate::env::{BalanceEnv, PushDistribution};
use crate::error::SimError;
use crate::reward::RewardBreakdown;

/// Final |ẋ_COM| below which a trial counts as balanced, m/s.
pub const BALANCED_SPEED: f64 = 0.05;

/// Maps an observation to joint targets.
pub trait Policy: Sync {
    fn action(&self, observation: &[f64]) -> Vec<f64>;
}

impl Policy for Ddpg {
    fn action(&self, observation: &[f64]) -> Vec<f64> {
        self.act(observation)
    }
}

/// Ignores the observation and holds fixed joint targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldPose(pub [f64; N_JOINTS]);

impl HoldPose {
    pub fn nominal() -> Self {
        HoldPose([0.0; N_JOINTS])
    }
}

impl Policy for HoldPose {
    fn action(&self, _: &[f64]) -> Vec<f64> {
        self.0.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Balanced,
    Fell,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Balanced => "balanced",
            Verdict::Fell => "fell",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub log: RolloutLog,
    pub verdict: Verdict,
    /// A fall was detected before the end of the trial.
    pub fell: bool,
    pub final_com_speed: f64,
    /// Largest |x_COM - x_COM(0)| over the trial, m.
    pub max_com_excursion: f64,
}

/// A trial aborted by a simulator blow-up; `log` holds every row up to it.
#[derive(Debug)]
pub struct TrialFailure {
    pub log: RolloutLog,
    pub error: SimError,
}

impl std::fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} logged rows)", self.error, self.log.len())
    }
}

impl std::error::Error for TrialFailure {}

pub fn balance_env(cfg: &ExperimentConfig, seconds: f64) -> BalanceEnv {
    BalanceEnv::new(
        cfg.model.clone(),
        cfg.schedule,
        cfg.gains,
        cfg.reward.clone(),
        PushDistribution {
            probability: 0.0,
            ..cfg.train.pushes.clone()
        },
        seconds,
    )
}

fn log_row(
    model: &BipedModel,
    reward: &RewardBreakdown,
    s: &BipedState,
    tau: &[f64; N_JOINTS],
    ankle_ref: f64,
) -> RolloutRow {
    let kin = Kinematics::new(model, &s.q, &s.qd);
    let (x, z, xd, _) = com_from_kinematics(model, &kin);
    let lip = LipState::new(x, xd, z.max(1e-6), model.gravity);
    RolloutRow {
        time: s.time,
        ankle_ref,
        ankle_measured: s.q[3],
        torso_pitch: kin.pitch[TORSO],
        pelvis_pitch: kin.pitch[PELVIS],
        foot_pitch: kin.pitch[FOOT],
        torso_rate: kin.pitch_rate[TORSO],
        pelvis_rate: kin.pitch_rate[PELVIS],
        foot_rate: kin.pitch_rate[FOOT],
        capture_x: capture_point(&lip),
        com_x: x,
        com_z: z,
        torque: *tau,
        heel: s.contact.heel.active,
        toe: s.contact.toe.active,
        reward_terms: reward.terms,
        reward_total: reward.total,
    }
}

/// Runs one episode from `start` (the PD standing equilibrium when `None`):
/// nominal-pose PD hold until `settle`, then `policy`, until `end` or a
/// fall. Every low-level tick is logged.
pub fn run_episode(
    policy: &dyn Policy,
    cfg: &ExperimentConfig,
    start: Option<BipedState>,
    push: Option<ExternalPush>,
    settle: f64,
    end: f64,
) -> Result<TrialOutcome, TrialFailure> {
    let mut env = balance_env(cfg, end);
    let model = env.model.clone();
    let hold = HoldPose::nominal();
    let start = start.unwrap_or_else(|| env.standing_state().clone());
    let x0 = com_state(&env.model, &start).0;
    let mut obs = env.reset_to(start, push);
    let mut log = RolloutLog::default();
    let per_llc = cfg.schedule.physics_per_llc();
    let mut fell = false;
    loop {
        let settling = env.state().time < settle - 0.5 * cfg.schedule.dt();
        let action = if settling {
            hold.action(&obs)
        } else {
            policy.action(&obs)
        };
        let ankle_ref = env.bounded_target(&action)[0];
        let mut tick = 0usize;
        let mut rows = Vec::with_capacity(cfg.schedule.physics_per_hlc() / per_llc + 1);
        let reward = env.last_reward();
        let result = env.step_observed(&action, |s, tau| {
            tick += 1;
            if tick.is_multiple_of(per_llc) {
                rows.push(log_row(&model, &reward, s, tau, ankle_ref));
            }
        });
        log.rows.extend(rows);
        let out = match result {
            Ok(out) => out,
            Err(error) => return Err(TrialFailure { log, error }),
        };
        obs = out.observation;
        if out.terminal {
            fell = true;
        }
        if out.done {
            break;
        }
    }
    let (_, _, xd, _) = com_state(&env.model, env.state());
    let max_com_excursion = log.rows.iter().map(|r| (r.com_x - x0).abs()).fold(0.0, f64::max);
    let verdict = if !fell && xd.abs() < BALANCED_SPEED {
        Verdict::Balanced
    } else {
        Verdict::Fell
    };
    Ok(TrialOutcome {
        log,
        verdict,
        fell,
        final_com_speed: xd.abs(),
        max_com_excursion,
    })
}

/// Settles, applies `force` (N, positive forward) for `cfg.push.duration`
/// at `cfg.push.onset`, and runs to `cfg.push.end`.
pub fn run_push_trial(policy: &dyn Policy, cfg: &ExperimentConfig, force: f64) -> Result<TrialOutcome, TrialFailure> {
    let p = &cfg.push;
    let push = (force != 0.0).then(|| ExternalPush::new(force, p.onset, p.duration));
    run_episode(policy, cfg, None, push, p.settle, p.end)
}

/// Summary of quiet-standing evaluation rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub rollouts: usize,
    pub survived: usize,
    /// Time of the fall for each rollout that fell, s.
    pub fall_times: Vec<f64>,
    pub mean_return: f64,
}

/// Quiet standing from the PD standing equilibrium with seeded joint-angle
/// perturbations of up to `cfg.eval.perturbation` rad. The policy acts from
/// the first step. Rollouts run in parallel; results are in seed order.
pub fn evaluate_standing(policy: &dyn Policy, cfg: &ExperimentConfig, seed: u64) -> Result<EvalSummary, SimError> {
    let standing = balance_env(cfg, cfg.eval.seconds).standing_state().clone();
    let results: Vec<Result<(bool, f64, f64), SimError>> = (0..cfg.eval.rollouts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let mut start = standing.clone();
            for j in 0..N_JOINTS {
                start.q[3 + j] += rng.gen_range(-cfg.eval.perturbation..=cfg.eval.perturbation);
            }
            let clamped = cfg.model.clamp_angles(&std::array::from_fn(|j| start.q[3 + j]));
            start.q[3..].copy_from_slice(&clamped);
            let mut env = balance_env(cfg, cfg.eval.seconds);
            let mut obs = env.reset_to(start, None);
            let mut ret = 0.0;
            loop {
                let out = env.step_observed(&policy.action(&obs), |_, _| {})?;
                ret += out.reward;
                obs = out.observation;
                if out.terminal {
                    return Ok((false, env.state().time, ret));
                }
                if out.done {
                    return Ok((true, env.state().time, ret));
                }
            }
        })
        .collect();
    let mut summary = EvalSummary {
        rollouts: cfg.eval.rollouts,
        survived: 0,
        fall_times: Vec::new(),
        mean_return: 0.0,
    };
    for r in results {
        let (ok, t, ret) = r?;
        if ok {
            summary.survived += 1;
        } else {
            summary.fall_times.push(t);
        }
        summary.mean_return += ret / cfg.eval.rollouts as f64;
    }
    Ok(summary)
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// N, positive forward.
    pub force: f64,
    /// N·s.
    pub impulse: f64,
    pub verdict: Verdict,
    pub max_ankle_angle: f64,
    pub underactuation_time: f64,
    pub peak_ankle_torque: f64,
    /// Largest ankle torque / ceiling ratio over single-contact ticks.
    pub ceiling_ratio: f64,
    pub final_com_speed: f64,
}

pub const SWEEP_HEADER: &str =
    "force,impulse,verdict,max_ankle_angle,underactuation_time,peak_ankle_torque,ceiling_ratio,final_com_speed";

impl SweepPoint {
    pub fn from_outcome(cfg: &ExperimentConfig, force: f64, o: &TrialOutcome) -> Self {
        let check = o.log.ceiling_check(&cfg.model, None);
        SweepPoint {
            force,
            impulse: force * cfg.push.duration,
            verdict: o.verdict,
            max_ankle_angle: o.log.max_abs_ankle(),
            underactuation_time: o.log.underactuation_time(cfg.push.onset),
            peak_ankle_torque: check.peak_torque,
            ceiling_ratio: check.worst_ratio,
            final_com_speed: o.final_com_speed,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.8e},{:.8e},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            self.force,
            self.impulse,
            self.verdict.name(),
            self.max_ankle_angle,
            self.underactuation_time,
            self.peak_ankle_torque,
            self.ceiling_ratio,
            self.final_com_speed
        )
    }
}

/// Runs every force in parallel; the result is sorted by force.
pub fn sweep(policy: &dyn Policy, cfg: &ExperimentConfig, forces: &[f64]) -> Result<Vec<SweepPoint>, TrialFailure> {
    let mut points = forces
        .par_iter()
        .map(|&f| run_push_trial(policy, cfg, f).map(|o| SweepPoint::from_outcome(cfg, f, &o)))
        .collect::<Result<Vec<_>, _>>()?;
    points.sort_by(|a, b| a.force.total_cmp(&b.force));
    Ok(points)
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for p in points {
        s.push_str(&p.csv_row());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub direction: Direction,
    /// Largest balanced impulse found, N·s (0 if even the smallest fails).
    pub capacity: f64,
    /// Capture-point budget for this direction, N·s.
    pub budget: f64,
    pub ratio: f64,
    /// (impulse, balanced) for the three probes above the capacity.
    pub probes: Vec<(f64, bool)>,
    /// Every probe above the capacity failed.
    pub monotone: bool,
    pub trials: usize,
}

/// Bisection over the impulse magnitude with fixed push duration.
pub fn impulse_capacity_search(
    policy: &dyn Policy,
    cfg: &ExperimentConfig,
    direction: Direction,
) -> Result<CapacityReport, TrialFailure> {
    let duration = cfg.push.duration;
    let tol = cfg.capacity.tolerance;
    let mut trials = 0usize;
    let mut balanced = |impulse: f64| -> Result<bool, TrialFailure> {
        trials += 1;
        let o = run_push_trial(policy, cfg, direction.sign() * impulse / duration)?;
        Ok(o.verdict == Verdict::Balanced)
    };
    let max = cfg.capacity.max_impulse;
    // (largest balanced, smallest failing)
    let (capacity, failing) = if !balanced(tol)? {
        (0.0, Some(tol))
    } else if balanced(max)? {
        (max, None)
    } else {
        let (mut lo, mut hi) = (tol, max);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if balanced(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, Some(hi))
    };
    let mut probes = Vec::new();
    if let Some(f) = failing {
        for k in [1.0, 5.0, 10.0] {
            let j = f + k * tol;
            probes.push((j, balanced(j)?));
        }
    }
    let budget_delta = match direction {
        Direction::Forward => cfg.model.foot.toe,
        Direction::Backward => cfg.model.foot.heel,
    };
    let budget = impulse_budget(cfg.model.total_mass(), NOMINAL_COM_HEIGHT, budget_delta, duration).j_reject;
    Ok(CapacityReport {
        direction,
        capacity,
        budget,
        ratio: capacity / budget,
        monotone: probes.iter().all(|(_, ok)| !ok),
        probes,
        trials,
    })
}

/// Joint angles of the nominal pose.
pub fn nominal_targets(cfg: &ExperimentConfig) -> [f64; N_JOINTS] {
    nominal_state(&cfg.model).joint_angles()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::Hyperparams;
    use crate::observation::OBS_DIM;

    fn short_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.push.end = 4.0;
        cfg
    }

    #[test]
    fn unpushed_hold_is_balanced() {
        let cfg = short_cfg();
        let o = run_push_trial(&HoldPose::nominal(), &cfg, 0.0).unwrap();
        assert_eq!(o.verdict, Verdict::Balanced);
        assert!(o.max_com_excursion < 0.02, "{}", o.max_com_excursion);
        // uniform low-level ticks from the first step to the end
        assert_eq!(o.log.len(), 4000);
        let dt = o.log.dt().unwrap();
        assert!((dt - 1e-3).abs() < 1e-9);
        assert!(o
            .log
            .rows
            .windows(2)
            .all(|w| ((w[1].time - w[0].time) - dt).abs() < 1e-9));
    }

    #[test]
    fn trial_is_reproducible() {
        let cfg = short_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (lo, hi) = (
            cfg.model.joints.iter().map(|j| j.lower).collect(),
            cfg.model.joints.iter().map(|j| j.upper).collect(),
        );
        let agent = Ddpg::new(OBS_DIM, lo, hi, Hyperparams::default(), &mut rng);
        let a = run_push_trial(&agent, &cfg, 300.0).unwrap();
        let b = run_push_trial(&agent, &cfg, 300.0).unwrap();
        assert_eq!(a.log.to_csv(), b.log.to_csv());
    }

    #[test]
    fn collapsing_policy_falls_and_stops_early() {
        let cfg = short_cfg();
        let o = run_push_trial(&HoldPose([0.0, -2.0, 1.8, 0.5]), &cfg, 0.0).unwrap();
        assert_eq!(o.verdict, Verdict::Fell);
        assert!(o.fell);
        assert!(o.log.rows.last().unwrap().time < cfg.push.end);
    }

    #[test]
    fn sweep_is_sorted_and_matches_single_trials() {
        let cfg = short_cfg();
        let pts = sweep(&HoldPose::nominal(), &cfg, &[200.0, -100.0, 0.0]).unwrap();
        let forces: Vec<f64> = pts.iter().map(|p| p.force).collect();
        assert_eq!(forces, vec![-100.0, 0.0, 200.0]);
        let single = run_push_trial(&HoldPose::nominal(), &cfg, 200.0).unwrap();
        assert_eq!(pts[2], SweepPoint::from_outcome(&cfg, 200.0, &single));
        assert!((pts[2].impulse - 20.0).abs() < 1e-12);
    }

    #[test]
    fn collapsing_policy_has_no_capacity() {
        let mut cfg = short_cfg();
        cfg.capacity.max_impulse = 20.0;
        let r = impulse_capacity_search(&HoldPose([0.0, -2.0, 1.8, 0.5]), &cfg, Direction::Forward).unwrap();
        assert_eq!(r.capacity, 0.0);
        assert!(r.monotone);
        assert!((r.budget - 72.8).abs() < 0.3, "{}", r.budget);
    }
}
