use serde::{Deserialize, Serialize};

use super::model::{N_DOF, N_JOINTS};

/// One penalty contact point on the sole.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub active: bool,
    /// Ground reaction along +z (N).
    pub normal: f64,
    /// Ground reaction along +x (N).
    pub tangential: f64,
    pub penetration: f64,
    /// Stick anchor of the tangential spring; `None` while airborne.
    pub anchor: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactState {
    pub heel: ContactPoint,
    pub toe: ContactPoint,
}

impl ContactState {
    pub fn flags(&self) -> [bool; 2] {
        [self.heel.active, self.toe.active]
    }

    /// Exactly one of heel and toe touches the ground.
    pub fn single_contact(&self) -> Option<Pivot> {
        match (self.heel.active, self.toe.active) {
            (true, false) => Some(Pivot::Heel),
            (false, true) => Some(Pivot::Toe),
            _ => None,
        }
    }

    pub fn point(&self, pivot: Pivot) -> &ContactPoint {
        match pivot {
            Pivot::Heel => &self.heel,
            Pivot::Toe => &self.toe,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pivot {
    Heel,
    Toe,
}

impl Pivot {
    pub fn name(self) -> &'static str {
        match self {
            Pivot::Heel => "heel",
            Pivot::Toe => "toe",
        }
    }
}

/// Generalized coordinates `q = [x, z, pitch, ankle, knee, hip, waist]`
/// where `(x, z, pitch)` is the pose of the foot frame, anchored at the
/// ankle joint. Positive pitch tips a link's top forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipedState {
    pub q: [f64; N_DOF],
    pub qd: [f64; N_DOF],
    pub time: f64,
    pub contact: ContactState,
}

impl BipedState {
    pub fn joint_angles(&self) -> [f64; N_JOINTS] {
        std::array::from_fn(|j| self.q[3 + j])
    }

    pub fn joint_velocities(&self) -> [f64; N_JOINTS] {
        std::array::from_fn(|j| self.qd[3 + j])
    }

    pub fn foot_pitch(&self) -> f64 {
        self.q[2]
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qd).all(|v| v.is_finite()) && self.time.is_finite()
    }
}

/// Horizontal force applied at the pelvis COM over `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalPush {
    /// Signed magnitude; positive pushes forward (+x).
    pub force: f64,
    pub start: f64,
    pub duration: f64,
}

impl ExternalPush {
    pub fn new(force: f64, start: f64, duration: f64) -> Self {
        assert!(duration > 0.0, "push duration must be positive");
        Self { force, start, duration }
    }

    pub fn force_at(&self, t: f64) -> f64 {
        // accumulated step times carry rounding; compare with a small slack
        const SLACK: f64 = 1e-9;
        if t >= self.start - SLACK && t < self.start + self.duration - SLACK {
            self.force
        } else {
            0.0
        }
    }

    pub fn impulse(&self) -> f64 {
        self.force * self.duration
    }
}
