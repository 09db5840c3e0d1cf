//! Physics-grounded balance reward: six exponential objectives whose
//! normalization factors are derived from friction-cone error ranges.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::analytics::GRAVITY;

/// Channel order used by every six-element array in this module.
pub const CHANNELS: [&str; 6] = ["phi_torso", "phi_pelvis", "x_com", "z_com", "xd_com", "zd_com"];

/// Pendulum length back-solved from e_x = sin(pi/4)·l = 0.768 m.
pub const DEFAULT_PENDULUM_LENGTH: f64 = 1.086;
pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_THETA_MAX: f64 = FRAC_PI_4;

/// Largest meaningful deviation of each channel from its target. All
/// values are magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRanges {
    pub phi_torso: f64,
    pub phi_pelvis: f64,
    pub x_com: f64,
    pub z_com: f64,
    pub xd_com: f64,
    pub zd_com: f64,
}

impl ErrorRanges {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.phi_torso,
            self.phi_pelvis,
            self.x_com,
            self.z_com,
            self.xd_com,
            self.zd_com,
        ]
    }
}

/// Error ranges of a pendulum of length `l` lying on the friction-cone
/// boundary at `theta_max`.
///
/// The horizontal-velocity range adds the capture-point velocity limit of
/// the tilted pendulum to the horizontal share of the speed gained by
/// falling from upright to `theta_max`; the vertical range is the vertical
/// share of that speed.
pub fn error_ranges(l: f64, theta_max: f64, g: f64) -> ErrorRanges {
    assert!(l > 0.0, "pendulum length must be positive");
    assert!(
        theta_max > 0.0 && theta_max < FRAC_PI_2,
        "theta_max must lie in (0, pi/2)"
    );
    let (s, c) = theta_max.sin_cos();
    let fall_speed = (2.0 * g * (1.0 - c) * l).sqrt();
    ErrorRanges {
        phi_torso: FRAC_PI_2,
        phi_pelvis: FRAC_PI_2,
        x_com: s * l,
        z_com: (1.0 - c) * l,
        xd_com: s * l * (g / (c * l)).sqrt() + c * fall_speed,
        zd_com: s * fall_speed,
    }
}

/// alpha_i = -ln(epsilon) / e_i^2, so each term drops to `epsilon` at its
/// error range.
pub fn normalization_factors(e: &ErrorRanges, epsilon: f64) -> [f64; 6] {
    assert!(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
    let ranges = e.as_array();
    assert!(ranges.iter().all(|r| *r > 0.0), "error ranges must be positive");
    ranges.map(|r| -epsilon.ln() / (r * r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub weights: [f64; 6],
    pub alphas: [f64; 6],
    pub epsilon: f64,
    pub theta_max: f64,
    pub pendulum_length: f64,
    pub z_com_target: f64,
    pub xd_com_target: f64,
    pub zd_com_target: f64,
}

impl RewardConfig {
    /// Recomputes the normalization factors from `epsilon`, `theta_max`
    /// and `pendulum_length`.
    pub fn derive_alphas(&mut self) {
        let e = error_ranges(self.pendulum_length, self.theta_max, GRAVITY);
        self.alphas = normalization_factors(&e, self.epsilon);
    }

    pub fn max_total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err("reward weights must be non-negative".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err("epsilon must lie in (0, 1)".into());
        }
        if !(self.theta_max > 0.0 && self.theta_max < FRAC_PI_2) || self.pendulum_length <= 0.0 {
            return Err("theta_max must lie in (0, pi/2) and pendulum length be positive".into());
        }
        Ok(())
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        let mut cfg = RewardConfig {
            weights: [1.0, 1.0, 1.0, 5.0, 1.0, 1.0],
            alphas: [0.0; 6],
            epsilon: DEFAULT_EPSILON,
            theta_max: DEFAULT_THETA_MAX,
            pendulum_length: DEFAULT_PENDULUM_LENGTH,
            z_com_target: crate::dynamics::NOMINAL_COM_HEIGHT,
            xd_com_target: 0.0,
            zd_com_target: 0.0,
        };
        cfg.derive_alphas();
        cfg
    }
}

/// Quantities the reward is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardInputs {
    pub phi_torso: f64,
    pub phi_pelvis: f64,
    pub x_com: f64,
    pub z_com: f64,
    pub xd_com: f64,
    pub zd_com: f64,
    /// Horizontal target, the foot centre.
    pub x_com_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub terms: [f64; 6],
    pub total: f64,
}

pub fn compute_reward(cfg: &RewardConfig, inp: &RewardInputs) -> RewardBreakdown {
    let errors = [
        inp.phi_torso,
        inp.phi_pelvis,
        inp.x_com_target - inp.x_com,
        cfg.z_com_target - inp.z_com,
        cfg.xd_com_target - inp.xd_com,
        cfg.zd_com_target - inp.zd_com,
    ];
    let terms: [f64; 6] = std::array::from_fn(|i| (-cfg.alphas[i] * errors[i] * errors[i]).exp());
    let total = terms.iter().zip(&cfg.weights).map(|(r, w)| r * w).sum();
    RewardBreakdown { terms, total }
}
