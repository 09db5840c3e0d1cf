//! Capture-point analytics on the linear inverted pendulum (LIP).

use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.81;
/// Duration of the experimental pelvis pushes (s).
pub const DEFAULT_IMPULSE_TIME: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipState {
    pub x: f64,
    pub xd: f64,
    /// Constant COM height (m).
    pub z0: f64,
    pub g: f64,
}

impl LipState {
    pub fn new(x: f64, xd: f64, z0: f64, g: f64) -> Self {
        assert!(z0 > 0.0 && g > 0.0, "LIP needs positive height and gravity");
        LipState { x, xd, z0, g }
    }

    /// Natural frequency sqrt(g / z0).
    pub fn omega(&self) -> f64 {
        (self.g / self.z0).sqrt()
    }
}

/// Point on the ground where a constant COP brings the pendulum to rest.
pub fn capture_point(s: &LipState) -> f64 {
    s.x + s.xd * (s.z0 / s.g).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulseBudget {
    /// Largest rejectable impulse (N·s), signed like `delta_cop`.
    pub j_reject: f64,
    pub v_max: f64,
    pub f_max: f64,
    pub t_impulse: f64,
    pub delta_cop: f64,
    pub mass: f64,
    pub z_c: f64,
}

/// Rejectable impulse for a COP held `delta_cop` ahead of the COM, with the
/// velocity and force limits that follow for a pulse of `t_impulse`.
pub fn impulse_budget(mass: f64, z_c: f64, delta_cop: f64, t_impulse: f64) -> ImpulseBudget {
    impulse_budget_with_gravity(mass, z_c, delta_cop, t_impulse, GRAVITY)
}

pub fn impulse_budget_with_gravity(mass: f64, z_c: f64, delta_cop: f64, t_impulse: f64, g: f64) -> ImpulseBudget {
    assert!(mass > 0.0 && z_c > 0.0 && t_impulse > 0.0 && g > 0.0);
    let j_reject = mass * (g / z_c).sqrt() * delta_cop;
    ImpulseBudget {
        j_reject,
        v_max: j_reject / mass,
        f_max: j_reject / t_impulse,
        t_impulse,
        delta_cop,
        mass,
        z_c,
    }
}

/// Integrates `xdd = (g / z0) (x - cop_x)` with classical RK4 and returns
/// the state after every step, starting with `s` itself.
pub fn lip_simulate(s: &LipState, cop_x: f64, horizon: f64, dt: f64) -> Vec<LipState> {
    assert!(dt > 0.0 && dt <= 1e-3 + 1e-15, "LIP oracle needs dt <= 1 ms");
    let w2 = s.g / s.z0;
    let accel = |x: f64| w2 * (x - cop_x);
    let steps = (horizon / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let (mut x, mut v) = (s.x, s.xd);
    out.push(*s);
    for _ in 0..steps {
        let (k1x, k1v) = (v, accel(x));
        let (k2x, k2v) = (v + 0.5 * dt * k1v, accel(x + 0.5 * dt * k1x));
        let (k3x, k3v) = (v + 0.5 * dt * k2v, accel(x + 0.5 * dt * k2x));
        let (k4x, k4v) = (v + dt * k3v, accel(x + dt * k3x));
        x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        out.push(LipState { x, xd: v, ..*s });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_velocity_capture_point_is_com() {
        let s = LipState::new(0.3, 0.0, 1.084, GRAVITY);
        assert_eq!(capture_point(&s), 0.3);
    }

    #[test]
    fn capture_point_unit_velocity() {
        let s = LipState::new(0.0, 1.0, 1.084, 9.81);
        let cp = capture_point(&s);
        assert!((cp - 0.3324).abs() < 1e-4, "{cp}");
        // LIP oracle: holding the COP there brings the pendulum to rest over it
        let traj = lip_simulate(&s, cp, 5.0, 1e-3);
        let last = traj.last().unwrap();
        assert!(last.xd.abs() < 1e-3);
        assert!((last.x - cp).abs() < 1e-3);
    }

    #[test]
    fn capture_point_affine_in_velocity() {
        let base = capture_point(&LipState::new(0.1, 0.0, 1.0, 9.81));
        let one = capture_point(&LipState::new(0.1, 1.0, 1.0, 9.81)) - base;
        for v in [-2.0, -0.5, 0.7, 3.0] {
            let d = capture_point(&LipState::new(0.1, v, 1.0, 9.81)) - base;
            assert!((d - v * one).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_budgets() {
        let fwd = impulse_budget(127.6, 1.084, 0.189, 0.1);
        assert!((fwd.j_reject - 72.8).abs() < 0.3, "{}", fwd.j_reject);
        assert!((fwd.f_max - 728.0).abs() < 3.0, "{}", fwd.f_max);
        let bwd = impulse_budget(127.6, 1.084, -0.111, 0.1);
        assert!((bwd.j_reject.abs() - 42.6).abs() < 0.3);
        assert!((bwd.f_max.abs() - 426.0).abs() < 3.0);
        let zero = impulse_budget(127.6, 1.084, 0.0, 0.1);
        assert_eq!((zero.j_reject, zero.f_max, zero.v_max), (0.0, 0.0, 0.0));
    }

    #[test]
    fn equilibrium_stays_put() {
        let s = LipState::new(0.2, 0.0, 1.0, 9.81);
        for p in lip_simulate(&s, 0.2, 2.0, 1e-3) {
            assert_eq!((p.x, p.xd), (0.2, 0.0));
        }
    }

    #[test]
    fn cop_short_of_capture_point_diverges() {
        let s = LipState::new(0.0, 0.8, 1.084, 9.81);
        let cop = capture_point(&s) - 1e-3;
        let traj = lip_simulate(&s, cop, 5.0, 1e-3);
        assert!(traj.iter().all(|p| p.xd > 0.0), "velocity never reverses");
        let last = traj.last().unwrap();
        assert!(last.x > cop + 0.1, "{}", last.x);
    }

    #[test]
    fn converging_speed_is_monotone() {
        let s = LipState::new(-0.05, 1.5, 1.084, 9.81);
        let traj = lip_simulate(&s, capture_point(&s), 5.0, 1e-3);
        for w in traj.windows(2) {
            assert!(w[1].xd.abs() <= w[0].xd.abs() + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn capture_point_brings_lip_to_rest(
            x in -0.5f64..0.5,
            xd in -3.0f64..3.0,
            z0 in 0.5f64..1.5,
        ) {
            let s = LipState::new(x, xd, z0, GRAVITY);
            let traj = lip_simulate(&s, capture_point(&s), 5.0, 1e-3);
            prop_assert!(traj.last().unwrap().xd.abs() < 1e-3);
        }

        #[test]
        fn budget_chain_is_exact(
            m in 1.0f64..300.0,
            z in 0.3f64..2.0,
            d in -0.3f64..0.3,
            t in 0.01f64..1.0,
        ) {
            let b = impulse_budget(m, z, d, t);
            prop_assert_eq!(b.v_max, b.j_reject / m);
            prop_assert_eq!(b.f_max, b.j_reject / t);
            prop_assert!((b.v_max * m - b.j_reject).abs() <= 1e-12 * b.j_reject.abs().max(1.0));
            prop_assert!((b.f_max * t - b.j_reject).abs() <= 1e-12 * b.j_reject.abs().max(1.0));
        }
    }
}
