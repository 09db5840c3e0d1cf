//! State features fed to the policy.
//!
//! Layout (35 values for the five-link model):
//!
//! | index  | feature                                   |
//! |--------|-------------------------------------------|
//! | 0      | pelvis height                             |
//! | 1..5   | joint angles (ankle, knee, hip, waist)    |
//! | 5..9   | joint velocities                          |
//! | 9, 10  | torso and pelvis pitch                    |
//! | 11, 12 | torso and pelvis pitch rate               |
//! | 13..23 | link COM displacement w.r.t. pelvis COM   |
//! | 23..33 | link COM linear velocity                  |
//! | 33, 34 | heel and toe contact flags                |
//!
//! Continuous channels pass through a 10 Hz Butterworth bank; the contact
//! flags do not.

use serde::{Deserialize, Serialize};

use crate::dynamics::{BipedModel, BipedState, Kinematics, N_JOINTS, N_LINKS, PELVIS, TORSO};
use crate::filter::LowPassFilter;

/// Number of continuous (filtered) features for a model with `links` links.
pub const fn continuous_dim(links: usize) -> usize {
    1 + 2 * (links - 1) + 4 + 2 * links + 2 * links
}

pub const N_FLAGS: usize = 2;
pub const OBS_DIM: usize = continuous_dim(N_LINKS) + N_FLAGS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pelvis_height: f64,
    pub joint_angles: [f64; N_JOINTS],
    pub joint_velocities: [f64; N_JOINTS],
    pub phi_torso: f64,
    pub phi_pelvis: f64,
    pub phi_torso_rate: f64,
    pub phi_pelvis_rate: f64,
    pub link_displacement: [[f64; 2]; N_LINKS],
    pub link_velocity: [[f64; 2]; N_LINKS],
    pub contact: [bool; N_FLAGS],
}

impl Observation {
    fn from_continuous(c: &[f64], contact: [bool; N_FLAGS]) -> Self {
        let pair =
            |base: usize| -> [[f64; 2]; N_LINKS] { std::array::from_fn(|i| [c[base + 2 * i], c[base + 2 * i + 1]]) };
        Observation {
            pelvis_height: c[0],
            joint_angles: std::array::from_fn(|j| c[1 + j]),
            joint_velocities: std::array::from_fn(|j| c[5 + j]),
            phi_torso: c[9],
            phi_pelvis: c[10],
            phi_torso_rate: c[11],
            phi_pelvis_rate: c[12],
            link_displacement: pair(13),
            link_velocity: pair(23),
            contact,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(OBS_DIM);
        v.extend(raw_continuous_of(self));
        v.extend(self.contact.iter().map(|&f| if f { 1.0 } else { 0.0 }));
        v
    }
}

fn raw_continuous_of(o: &Observation) -> Vec<f64> {
    let mut v = Vec::with_capacity(OBS_DIM);
    v.push(o.pelvis_height);
    v.extend(o.joint_angles);
    v.extend(o.joint_velocities);
    v.extend([o.phi_torso, o.phi_pelvis, o.phi_torso_rate, o.phi_pelvis_rate]);
    v.extend(o.link_displacement.iter().flatten());
    v.extend(o.link_velocity.iter().flatten());
    v
}

/// Unfiltered features straight from the simulator state.
pub fn raw_observation(model: &BipedModel, state: &BipedState) -> Observation {
    let kin = Kinematics::new(model, &state.q, &state.qd);
    let pelvis = kin.com[PELVIS];
    Observation {
        pelvis_height: pelvis[1],
        joint_angles: state.joint_angles(),
        joint_velocities: state.joint_velocities(),
        phi_torso: kin.pitch[TORSO],
        phi_pelvis: kin.pitch[PELVIS],
        phi_torso_rate: kin.pitch_rate[TORSO],
        phi_pelvis_rate: kin.pitch_rate[PELVIS],
        link_displacement: std::array::from_fn(|i| [kin.com[i][0] - pelvis[0], kin.com[i][1] - pelvis[1]]),
        link_velocity: kin.com_vel,
        contact: state.contact.flags(),
    }
}

/// One low-pass filter per continuous feature.
#[derive(Debug, Clone)]
pub struct FilterBank {
    filters: Vec<LowPassFilter>,
}

impl FilterBank {
    pub fn new(cutoff: f64, sample_rate: f64) -> Self {
        FilterBank {
            filters: (0..continuous_dim(N_LINKS))
                .map(|_| LowPassFilter::butterworth2(cutoff, sample_rate))
                .collect(),
        }
    }

    /// Next sample re-primes every channel.
    pub fn clear(&mut self) {
        self.filters.iter_mut().for_each(LowPassFilter::clear);
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }
}

/// Samples the state, filters continuous channels and attaches the raw
/// contact flags.
pub fn observe(model: &BipedModel, state: &BipedState, filters: &mut FilterBank) -> Observation {
    let raw = raw_observation(model, state);
    let filtered: Vec<f64> = raw_continuous_of(&raw)
        .into_iter()
        .zip(filters.filters.iter_mut())
        .map(|(x, f)| f.filter_step(x))
        .collect();
    Observation::from_continuous(&filtered, raw.contact)
}
