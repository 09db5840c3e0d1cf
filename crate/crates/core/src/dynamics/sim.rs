use nalgebra::{SMatrix, SVector};

use super::model::*;
use super::state::*;
use crate::error::SimError;

pub type Vec2 = [f64; 2];
type MassMatrix = SMatrix<f64, N_DOF, N_DOF>;
type GenVec = SVector<f64, N_DOF>;

/// Physics timestep (s).
pub const PHYSICS_DT: f64 = 1.0e-3;
/// Largest generalized speed (m/s or rad/s) a step may produce before the
/// integration counts as diverged.
pub const MAX_SPEED: f64 = 1.0e4;

/// Rotates a link-frame vector into the world frame.
pub fn rotate(pitch: f64, b: Vec2) -> Vec2 {
    let (s, c) = pitch.sin_cos();
    [b[0] * c + b[1] * s, -b[0] * s + b[1] * c]
}

/// Derivative of a world vector `r` with respect to the pitch of the frame
/// it is attached to.
#[inline]
fn perp(r: Vec2) -> Vec2 {
    [r[1], -r[0]]
}

#[inline]
fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Forward kinematics of every link for one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    /// Absolute link pitches.
    pub pitch: [f64; N_LINKS],
    pub pitch_rate: [f64; N_LINKS],
    /// Rotation pivot of each angular coordinate: the ankle for foot pitch
    /// and the ankle joint, then knee, hip, waist.
    pub pivot: [Vec2; N_LINKS],
    pub com: [Vec2; N_LINKS],
    pub com_vel: [Vec2; N_LINKS],
    /// Velocity-product (centripetal) part of each link COM acceleration.
    pub com_bias: [Vec2; N_LINKS],
}

impl Kinematics {
    pub fn new(model: &BipedModel, q: &[f64; N_DOF], qd: &[f64; N_DOF]) -> Self {
        let mut pitch = [0.0; N_LINKS];
        let mut pitch_rate = [0.0; N_LINKS];
        let (mut a, mut ad) = (0.0, 0.0);
        for i in 0..N_LINKS {
            a += q[2 + i];
            ad += qd[2 + i];
            pitch[i] = a;
            pitch_rate[i] = ad;
        }

        let ankle = [q[0], q[1]];
        let mut pivot = [ankle; N_LINKS];
        let mut com = [[0.0; 2]; N_LINKS];
        let mut com_bias = [[0.0; 2]; N_LINKS];

        // bias accumulated along the chain up to each proximal joint
        let mut joint_bias = [0.0, 0.0];
        let mut joint = ankle;
        for i in 0..N_LINKS {
            let link = &model.links[i];
            if i >= 2 {
                let prev = &model.links[i - 1];
                let seg = rotate(pitch[i - 1], [0.0, prev.length]);
                joint = [joint[0] + seg[0], joint[1] + seg[1]];
                let w2 = pitch_rate[i - 1] * pitch_rate[i - 1];
                joint_bias = [joint_bias[0] - w2 * seg[0], joint_bias[1] - w2 * seg[1]];
                pivot[i] = joint;
            }
            let r = rotate(pitch[i], link.com);
            let w2 = pitch_rate[i] * pitch_rate[i];
            com[i] = [joint[0] + r[0], joint[1] + r[1]];
            com_bias[i] = [joint_bias[0] - w2 * r[0], joint_bias[1] - w2 * r[1]];
        }

        let mut kin = Kinematics {
            pitch,
            pitch_rate,
            pivot,
            com,
            com_vel: [[0.0; 2]; N_LINKS],
            com_bias,
        };
        for i in 0..N_LINKS {
            kin.com_vel[i] = kin.point_velocity(i, kin.com[i], qd);
        }
        kin
    }

    /// Columns of the planar Jacobian of a point rigidly attached to `link`.
    pub fn point_jacobian(&self, link: usize, p: Vec2) -> [Vec2; N_DOF] {
        let mut jac = [[0.0; 2]; N_DOF];
        jac[0] = [1.0, 0.0];
        jac[1] = [0.0, 1.0];
        for a in 0..=link {
            jac[2 + a] = perp(sub(p, self.pivot[a]));
        }
        jac
    }

    pub fn point_velocity(&self, link: usize, p: Vec2, qd: &[f64; N_DOF]) -> Vec2 {
        let jac = self.point_jacobian(link, p);
        let mut v = [0.0, 0.0];
        for (col, rate) in jac.iter().zip(qd) {
            v[0] += col[0] * rate;
            v[1] += col[1] * rate;
        }
        v
    }

    pub fn ankle(&self) -> Vec2 {
        self.pivot[0]
    }

    pub fn sole_point(&self, model: &BipedModel, pivot: Pivot) -> Vec2 {
        let body = match pivot {
            Pivot::Heel => [-model.foot.heel, -model.foot.thickness],
            Pivot::Toe => [model.foot.toe, -model.foot.thickness],
        };
        let r = rotate(self.pitch[FOOT], body);
        let ankle = self.ankle();
        [ankle[0] + r[0], ankle[1] + r[1]]
    }
}

/// Adds the generalized force of a world-frame point force.
fn accumulate_point_force(kin: &Kinematics, link: usize, p: Vec2, force: Vec2, out: &mut GenVec) {
    for (k, col) in kin.point_jacobian(link, p).iter().enumerate() {
        out[k] += dot(*col, force);
    }
}

pub fn mass_matrix(model: &BipedModel, kin: &Kinematics) -> MassMatrix {
    let mut m = MassMatrix::zeros();
    for i in 0..N_LINKS {
        let link = &model.links[i];
        let jac = kin.point_jacobian(i, kin.com[i]);
        // translational part over the active columns 0..=2+i
        let n = 3 + i;
        for r in 0..n {
            for c in r..n {
                let v = link.mass * dot(jac[r], jac[c]) + if r >= 2 { link.inertia } else { 0.0 };
                m[(r, c)] += v;
            }
        }
    }
    for (j, joint) in model.joints.iter().enumerate() {
        m[(3 + j, 3 + j)] += joint.armature;
    }
    m.fill_lower_triangle_with_upper_triangle();
    m
}

/// Mass-weighted aggregate COM position and velocity `(x, z, xd, zd)`.
pub fn com_state(model: &BipedModel, state: &BipedState) -> (f64, f64, f64, f64) {
    com_from_kinematics(model, &Kinematics::new(model, &state.q, &state.qd))
}

pub fn com_from_kinematics(model: &BipedModel, kin: &Kinematics) -> (f64, f64, f64, f64) {
    let mut acc = [0.0; 4];
    let mut total = 0.0;
    for (link, (p, v)) in model.links.iter().zip(kin.com.iter().zip(&kin.com_vel)) {
        acc[0] += link.mass * p[0];
        acc[1] += link.mass * p[1];
        acc[2] += link.mass * v[0];
        acc[3] += link.mass * v[1];
        total += link.mass;
    }
    (acc[0] / total, acc[1] / total, acc[2] / total, acc[3] / total)
}

/// Kinetic plus gravitational potential energy, ground plane as datum.
pub fn mechanical_energy(model: &BipedModel, state: &BipedState) -> f64 {
    let kin = Kinematics::new(model, &state.q, &state.qd);
    let m = mass_matrix(model, &kin);
    let qd = GenVec::from_column_slice(&state.qd);
    let kinetic = 0.5 * qd.dot(&(m * qd));
    let potential: f64 = model
        .links
        .iter()
        .zip(&kin.com)
        .map(|(l, p)| l.mass * model.gravity * p[1])
        .sum();
    kinetic + potential
}

/// Largest ankle torque magnitude the foot can sustain while balanced on
/// `pivot`: the body weight acting through the ankle times the current
/// horizontal ankle-to-pivot distance. It therefore depends on foot length,
/// thickness and tilt.
pub fn foot_torque_ceiling(model: &BipedModel, state: &BipedState, pivot: Pivot) -> Result<f64, SimError> {
    if !state.contact.point(pivot).active {
        return Err(SimError::PivotInactive { pivot: pivot.name() });
    }
    let kin = Kinematics::new(model, &state.q, &state.qd);
    Ok(ceiling_from_kinematics(model, &kin, pivot))
}

pub fn ceiling_from_kinematics(model: &BipedModel, kin: &Kinematics, pivot: Pivot) -> f64 {
    ceiling_for_pitch(model, pivot, kin.pitch[FOOT])
}

/// The ceiling as a function of foot pitch alone.
pub fn ceiling_for_pitch(model: &BipedModel, pivot: Pivot, foot_pitch: f64) -> f64 {
    let body = match pivot {
        Pivot::Heel => [-model.foot.heel, -model.foot.thickness],
        Pivot::Toe => [model.foot.toe, -model.foot.thickness],
    };
    model.total_mass() * model.gravity * rotate(foot_pitch, body)[0].abs()
}

/// Upright pose with the sole resting on the ground plane.
pub fn nominal_state(model: &BipedModel) -> BipedState {
    let mut q = [0.0; N_DOF];
    q[1] = model.foot.thickness;
    BipedState {
        q,
        qd: [0.0; N_DOF],
        time: 0.0,
        contact: ContactState::default(),
    }
}

/// Pose in which the penalty contacts carry the body weight, found by
/// letting the upright pose settle for a short time with joints held.
pub fn settled_state(model: &BipedModel) -> BipedState {
    let mut state = nominal_state(model);
    let total_load = model.total_mass() * model.gravity;
    // static split between heel and toe so the COM above the ankle is supported
    let span = model.foot.heel + model.foot.toe;
    let heel_load = total_load * model.foot.toe / span;
    let toe_load = total_load * model.foot.heel / span;
    let heel_pen = heel_load / model.contact.stiffness;
    let toe_pen = toe_load / model.contact.stiffness;
    if model.contact.enabled {
        // heel sinks deeper than the toe: negative pitch
        let pitch = -((heel_pen - toe_pen) / span).asin();
        state.q[2] = pitch;
        state.q[3] = -pitch;
        let kin = Kinematics::new(model, &state.q, &state.qd);
        let heel_z = kin.sole_point(model, Pivot::Heel)[1];
        state.q[1] -= heel_z + heel_pen;
    }
    state
}

fn contact_point(
    model: &BipedModel,
    kin: &Kinematics,
    qd: &[f64; N_DOF],
    pivot: Pivot,
    prev: &ContactPoint,
) -> ContactPoint {
    let p = kin.sole_point(model, pivot);
    if !model.contact.enabled || p[1] >= 0.0 {
        return ContactPoint::default();
    }
    let params = &model.contact;
    let v = kin.point_velocity(FOOT, p, qd);
    let penetration = -p[1];
    let normal = (params.stiffness * penetration - params.damping * v[1]).max(0.0);
    let anchor = prev.anchor.unwrap_or(p[0]);
    let stick = -params.tangential_stiffness * (p[0] - anchor) - params.tangential_damping * v[0];
    let limit = model.friction * normal;
    let (tangential, anchor) = if stick.abs() <= limit {
        (stick, anchor)
    } else {
        // sliding: drag the anchor so the spring alone sits on the cone
        let t = limit.copysign(stick);
        (t, p[0] + t / params.tangential_stiffness)
    };
    ContactPoint {
        active: true,
        normal,
        tangential,
        penetration,
        anchor: Some(anchor),
    }
}

/// Advances the biped by one semi-implicit Euler step.
///
/// Torques are clamped to the actuator limits before use. Joint limits act
/// as perfectly inelastic stops resolved with generalized impulses.
pub fn step(
    model: &BipedModel,
    state: &BipedState,
    joint_torques: &[f64; N_JOINTS],
    push: Option<&ExternalPush>,
    dt: f64,
) -> Result<BipedState, SimError> {
    let tau = model.clamp_torques(joint_torques);
    let kin = Kinematics::new(model, &state.q, &state.qd);
    let mass = mass_matrix(model, &kin);

    let mut rhs = GenVec::zeros();
    for i in 0..N_LINKS {
        let link = &model.links[i];
        let b = kin.com_bias[i];
        let f = [-link.mass * b[0], -link.mass * (model.gravity + b[1])];
        accumulate_point_force(&kin, i, kin.com[i], f, &mut rhs);
    }
    for j in 0..N_JOINTS {
        rhs[3 + j] += tau[j];
    }

    let heel = contact_point(model, &kin, &state.qd, Pivot::Heel, &state.contact.heel);
    let toe = contact_point(model, &kin, &state.qd, Pivot::Toe, &state.contact.toe);
    for (pivot, cp) in [(Pivot::Heel, &heel), (Pivot::Toe, &toe)] {
        if cp.active {
            let p = kin.sole_point(model, pivot);
            accumulate_point_force(&kin, FOOT, p, [cp.tangential, cp.normal], &mut rhs);
        }
    }
    if let Some(push) = push {
        let f = push.force_at(state.time);
        if f != 0.0 {
            accumulate_point_force(&kin, PELVIS, kin.com[PELVIS], [f, 0.0], &mut rhs);
        }
    }

    let chol = mass.cholesky().ok_or(SimError::Diverged { time: state.time })?;
    let qdd = chol.solve(&rhs);

    let mut qd: [f64; N_DOF] = std::array::from_fn(|k| state.qd[k] + dt * qdd[k]);
    enforce_joint_limits(model, &state.q, &mut qd, dt, &chol);

    let mut q: [f64; N_DOF] = std::array::from_fn(|k| state.q[k] + dt * qd[k]);
    for j in 0..N_JOINTS {
        q[3 + j] = model.joints[j].clamp(q[3 + j]);
    }

    let next = BipedState {
        q,
        qd,
        time: state.time + dt,
        contact: ContactState { heel, toe },
    };
    if !next.is_finite() || next.qd.iter().any(|v| v.abs() > MAX_SPEED) {
        return Err(SimError::Diverged { time: next.time });
    }
    Ok(next)
}

/// Projected Gauss-Seidel over the unilateral joint-limit constraints: the
/// post-step angle may reach a limit but not cross it.
fn enforce_joint_limits(
    model: &BipedModel,
    q: &[f64; N_DOF],
    qd: &mut [f64; N_DOF],
    dt: f64,
    chol: &nalgebra::Cholesky<f64, nalgebra::Const<N_DOF>>,
) {
    let mut minv_cols: [Option<GenVec>; N_JOINTS] = Default::default();
    let mut accumulated = [0.0; N_JOINTS];
    for _ in 0..4 {
        let mut changed = false;
        for j in 0..N_JOINTS {
            let k = 3 + j;
            let joint = &model.joints[j];
            let predicted = q[k] + dt * qd[k];
            // sign: +1 guards the upper limit, -1 the lower
            let (side, bound) = if predicted > joint.upper || accumulated[j] < 0.0 {
                (1.0, joint.upper)
            } else if predicted < joint.lower || accumulated[j] > 0.0 {
                (-1.0, joint.lower)
            } else {
                continue;
            };
            let col = minv_cols[j].get_or_insert_with(|| {
                let mut e = GenVec::zeros();
                e[k] = 1.0;
                chol.solve(&e)
            });
            let target = (bound - q[k]) / dt;
            let mut impulse = (target - qd[k]) / col[k];
            // unilateral: total impulse may only push back inside
            let total = accumulated[j] + impulse;
            let clamped = if side > 0.0 { total.min(0.0) } else { total.max(0.0) };
            impulse = clamped - accumulated[j];
            if impulse == 0.0 {
                continue;
            }
            accumulated[j] = clamped;
            for (v, c) in qd.iter_mut().zip(col.iter()) {
                *v += c * impulse;
            }
            changed = true;
        }
        if !changed {
            break;
        }
    }
}
