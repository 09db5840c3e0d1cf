use serde::{Deserialize, Serialize};

/// Number of rigid links in the merged single-leg chain.
pub const N_LINKS: usize = 5;
/// Number of actuated revolute joints.
pub const N_JOINTS: usize = 4;
/// Generalized coordinates: foot x, z, pitch, then the four joint angles.
pub const N_DOF: usize = 3 + N_JOINTS;

pub const FOOT: usize = 0;
pub const SHANK: usize = 1;
pub const THIGH: usize = 2;
pub const PELVIS: usize = 3;
pub const TORSO: usize = 4;

pub const ANKLE: usize = 0;
pub const KNEE: usize = 1;
pub const HIP: usize = 2;
pub const WAIST: usize = 3;

pub const LINK_NAMES: [&str; N_LINKS] = ["foot", "shank", "thigh", "pelvis", "torso"];
pub const JOINT_NAMES: [&str; N_JOINTS] = ["ankle", "knee", "hip", "waist"];

/// Target aggregate figures the default model is calibrated against.
pub const NOMINAL_TOTAL_MASS: f64 = 127.6;
pub const NOMINAL_COM_HEIGHT: f64 = 1.084;
pub const HEEL_LENGTH: f64 = 0.111;
pub const TOE_LENGTH: f64 = 0.189;

/// A rigid link. `com` is expressed in the link frame, whose origin is the
/// proximal joint (the ankle for the foot) and whose +z axis runs along the
/// link towards its distal joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub mass: f64,
    pub com: [f64; 2],
    /// Rotational inertia about the link COM (kg·m²).
    pub inertia: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub lower: f64,
    pub upper: f64,
    pub torque_limit: f64,
    /// Reflected actuator inertia added on the joint's diagonal (kg·m²).
    pub armature: f64,
}

impl Joint {
    pub fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.lower, self.upper)
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Sole geometry, measured from the ankle joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootGeometry {
    /// Horizontal ankle-to-heel distance (m).
    pub heel: f64,
    /// Horizontal ankle-to-toe distance (m).
    pub toe: f64,
    /// Vertical ankle-to-sole distance (m).
    pub thickness: f64,
}

/// Penalty contact parameters for the heel and toe points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipedModel {
    pub links: [Link; N_LINKS],
    pub joints: [Joint; N_JOINTS],
    pub foot: FootGeometry,
    pub contact: ContactParams,
    pub gravity: f64,
    pub friction: f64,
}

impl BipedModel {
    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn torque_limits(&self) -> [f64; N_JOINTS] {
        std::array::from_fn(|j| self.joints[j].torque_limit)
    }

    pub fn clamp_torques(&self, torques: &[f64; N_JOINTS]) -> [f64; N_JOINTS] {
        std::array::from_fn(|j| {
            let lim = self.joints[j].torque_limit;
            torques[j].clamp(-lim, lim)
        })
    }

    pub fn clamp_angles(&self, angles: &[f64; N_JOINTS]) -> [f64; N_JOINTS] {
        std::array::from_fn(|j| self.joints[j].clamp(angles[j]))
    }

    /// Height of the aggregate COM above the sole when every link is
    /// vertical and all joint angles are zero.
    pub fn nominal_com_height(&self) -> f64 {
        let mut base = self.foot.thickness;
        let mut moment = self.links[FOOT].mass * (base + self.links[FOOT].com[1]);
        for link in &self.links[1..] {
            moment += link.mass * (base + link.com[1]);
            base += link.length;
        }
        moment / self.total_mass()
    }

    /// Sets the torso COM offset so that the upright pose places the
    /// aggregate COM at `height` above the sole.
    pub fn calibrate_com_height(&mut self, height: f64) {
        let total = self.total_mass();
        let torso_base =
            self.foot.thickness + self.links[SHANK].length + self.links[THIGH].length + self.links[PELVIS].length;
        let mut base = self.foot.thickness;
        let mut others = self.links[FOOT].mass * (base + self.links[FOOT].com[1]);
        for link in &self.links[SHANK..TORSO] {
            others += link.mass * (base + link.com[1]);
            base += link.length;
        }
        let torso = &mut self.links[TORSO];
        torso.com[1] = (height * total - others) / torso.mass - torso_base;
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, link) in LINK_NAMES.iter().zip(&self.links) {
            if !(link.mass > 0.0 && link.inertia > 0.0 && link.length > 0.0) {
                return Err(format!("{name}: mass, inertia and length must be positive"));
            }
        }
        for (name, joint) in JOINT_NAMES.iter().zip(&self.joints) {
            if joint.lower >= joint.upper
                || joint.lower.is_nan()
                || joint.upper.is_nan()
                || joint.torque_limit <= 0.0
                || joint.armature < 0.0
            {
                return Err(format!("{name}: invalid limits"));
            }
        }
        if self.foot.heel <= 0.0 || self.foot.toe <= 0.0 || self.foot.thickness <= 0.0 {
            return Err("foot geometry must be positive".into());
        }
        if self.gravity < 0.0 || self.friction <= 0.0 {
            return Err("gravity must be non-negative and friction positive".into());
        }
        Ok(())
    }
}

impl Default for BipedModel {
    fn default() -> Self {
        build_default_model()
    }
}

fn rod(mass: f64, length: f64, com_along: f64, width: f64) -> Link {
    Link {
        mass,
        com: [0.0, com_along],
        inertia: mass * (length * length + width * width) / 12.0,
        length,
    }
}

/// Default merged-leg humanoid, roughly 1.9 m tall.
///
/// Mass split: foot 5 %, shank 15 %, thigh 20 %, pelvis 15 %, torso 45 %
/// of 127.6 kg. The torso COM offset is solved so the upright COM sits at
/// 1.084 m, directly above the ankle (0.189 m behind the toe tip and
/// 0.111 m ahead of the heel tip).
pub fn build_default_model() -> BipedModel {
    let m = NOMINAL_TOTAL_MASS;
    let thickness = 0.08;
    let foot = Link {
        mass: 0.05 * m,
        com: [0.0, -thickness / 2.0],
        inertia: 0.05 * m * ((HEEL_LENGTH + TOE_LENGTH).powi(2) + thickness * thickness) / 12.0,
        length: HEEL_LENGTH + TOE_LENGTH,
    };
    let links = [
        foot,
        rod(0.15 * m, 0.50, 0.275, 0.12),
        rod(0.20 * m, 0.50, 0.275, 0.16),
        rod(0.15 * m, 0.20, 0.10, 0.30),
        // torso lumps head and arms; COM height solved below
        rod(0.45 * m, 0.60, 0.0, 0.35),
    ];
    let joint = |lower: f64, upper: f64| Joint {
        lower,
        upper,
        torque_limit: 500.0,
        armature: 0.5,
    };
    let mut model = BipedModel {
        links,
        joints: [
            joint(-0.8, 0.6),
            // zero is full extension: the knee locks there
            joint(-2.0, 0.0),
            joint(-0.5, 1.8),
            joint(-0.5, 0.5),
        ],
        foot: FootGeometry {
            heel: HEEL_LENGTH,
            toe: TOE_LENGTH,
            thickness,
        },
        contact: ContactParams {
            stiffness: 3.0e5,
            damping: 2.0e3,
            tangential_stiffness: 3.0e5,
            tangential_damping: 2.0e3,
            enabled: true,
        },
        gravity: 9.81,
        friction: 1.0,
    };
    model.calibrate_com_height(NOMINAL_COM_HEIGHT);
    model
}
