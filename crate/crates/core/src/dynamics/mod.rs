//! Planar rigid-body simulation of the merged-leg biped with heel and toe
//! point contacts.

mod model;
mod sim;
mod state;

pub use model::*;
pub use sim::{
    ceiling_for_pitch, ceiling_from_kinematics, com_from_kinematics, com_state, foot_torque_ceiling, mass_matrix,
    mechanical_energy, nominal_state, rotate, settled_state, step, Kinematics, Vec2, MAX_SPEED, PHYSICS_DT,
};
pub use state::*;
