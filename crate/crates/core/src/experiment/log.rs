//! Rollout time series and their CSV form.
//!
//! The file starts with a schema line, then the column names, then one row
//! per low-level control tick:
//!
//! ```text
//! # balance-lab rollout v1
//! time,ankle_ref,ankle_measured,...,reward_total
//! ```
//!
//! Every value is written in scientific notation with 9 significant digits.
//! Angles are in rad, rates in rad/s, positions in m, torques in N·m.
//! Reward columns are sampled once per policy step and held in between.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ceiling_for_pitch, BipedModel, Pivot, N_JOINTS};

pub const SCHEMA_LINE: &str = "# balance-lab rollout v1";

pub const STATE_COLUMNS: [&str; 18] = [
    "time",
    "ankle_ref",
    "ankle_measured",
    "torso_pitch",
    "pelvis_pitch",
    "foot_pitch",
    "torso_rate",
    "pelvis_rate",
    "foot_rate",
    "capture_x",
    "com_x",
    "com_z",
    "torque_ankle",
    "torque_knee",
    "torque_hip",
    "torque_waist",
    "heel_contact",
    "toe_contact",
];

pub const REWARD_COLUMNS: [&str; 7] = [
    "reward_phi_torso",
    "reward_phi_pelvis",
    "reward_x_com",
    "reward_z_com",
    "reward_xd_com",
    "reward_zd_com",
    "reward_total",
];

pub const N_COLUMNS: usize = STATE_COLUMNS.len() + REWARD_COLUMNS.len();

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RolloutRow {
    pub time: f64,
    pub ankle_ref: f64,
    pub ankle_measured: f64,
    pub torso_pitch: f64,
    pub pelvis_pitch: f64,
    pub foot_pitch: f64,
    pub torso_rate: f64,
    pub pelvis_rate: f64,
    pub foot_rate: f64,
    pub capture_x: f64,
    pub com_x: f64,
    pub com_z: f64,
    pub torque: [f64; N_JOINTS],
    pub heel: bool,
    pub toe: bool,
    pub reward_terms: [f64; 6],
    pub reward_total: f64,
}

impl RolloutRow {
    pub fn values(&self) -> [f64; N_COLUMNS] {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let t = &self.torque;
        let r = &self.reward_terms;
        [
            self.time,
            self.ankle_ref,
            self.ankle_measured,
            self.torso_pitch,
            self.pelvis_pitch,
            self.foot_pitch,
            self.torso_rate,
            self.pelvis_rate,
            self.foot_rate,
            self.capture_x,
            self.com_x,
            self.com_z,
            t[0],
            t[1],
            t[2],
            t[3],
            flag(self.heel),
            flag(self.toe),
            r[0],
            r[1],
            r[2],
            r[3],
            r[4],
            r[5],
            self.reward_total,
        ]
    }

    pub fn from_values(v: &[f64; N_COLUMNS]) -> Self {
        RolloutRow {
            time: v[0],
            ankle_ref: v[1],
            ankle_measured: v[2],
            torso_pitch: v[3],
            pelvis_pitch: v[4],
            foot_pitch: v[5],
            torso_rate: v[6],
            pelvis_rate: v[7],
            foot_rate: v[8],
            capture_x: v[9],
            com_x: v[10],
            com_z: v[11],
            torque: [v[12], v[13], v[14], v[15]],
            heel: v[16] != 0.0,
            toe: v[17] != 0.0,
            reward_terms: [v[18], v[19], v[20], v[21], v[22], v[23]],
            reward_total: v[24],
        }
    }

    /// The pivot when exactly one contact point is active.
    pub fn pivot(&self) -> Option<Pivot> {
        match (self.heel, self.toe) {
            (true, false) => Some(Pivot::Heel),
            (false, true) => Some(Pivot::Toe),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RolloutLog {
    pub rows: Vec<RolloutRow>,
}

/// Peak ankle torque against the foot ceiling over single-contact rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeilingCheck {
    pub rows: usize,
    pub peak_torque: f64,
    /// Largest `|torque| / ceiling` seen.
    pub worst_ratio: f64,
}

impl RolloutLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dt(&self) -> Option<f64> {
        (self.rows.len() >= 2).then(|| self.rows[1].time - self.rows[0].time)
    }

    /// Time spent on a single contact point at or after `from`.
    pub fn underactuation_time(&self, from: f64) -> f64 {
        let dt = self.dt().unwrap_or(0.0);
        self.rows
            .iter()
            .filter(|r| r.time >= from && r.pivot().is_some())
            .count() as f64
            * dt
    }

    pub fn max_abs_ankle(&self) -> f64 {
        self.rows.iter().map(|r| r.ankle_measured.abs()).fold(0.0, f64::max)
    }

    /// Compares logged ankle torque with the ceiling at the logged foot
    /// pitch, over single-contact rows whose pivot matches `pivot` (or any
    /// pivot when `None`).
    pub fn ceiling_check(&self, model: &BipedModel, pivot: Option<Pivot>) -> CeilingCheck {
        let mut out = CeilingCheck {
            rows: 0,
            peak_torque: 0.0,
            worst_ratio: 0.0,
        };
        for r in &self.rows {
            let Some(p) = r.pivot() else { continue };
            if pivot.is_some_and(|want| want != p) {
                continue;
            }
            let tau = r.torque[0].abs();
            let ceiling = ceiling_for_pitch(model, p, r.foot_pitch);
            out.rows += 1;
            out.peak_torque = out.peak_torque.max(tau);
            out.worst_ratio = out.worst_ratio.max(tau / ceiling);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 + self.rows.len() * N_COLUMNS * 16);
        s.push_str(SCHEMA_LINE);
        s.push('\n');
        let names: Vec<&str> = STATE_COLUMNS.iter().chain(REWARD_COLUMNS.iter()).copied().collect();
        s.push_str(&names.join(","));
        s.push('\n');
        for r in &self.rows {
            for (i, v) in r.values().iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{v:.8e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(SCHEMA_LINE) {
            return Err("missing or unsupported schema line".into());
        }
        let header = lines.next().ok_or("missing column header")?;
        let names: Vec<&str> = STATE_COLUMNS.iter().chain(REWARD_COLUMNS.iter()).copied().collect();
        if header.split(',').collect::<Vec<_>>() != names {
            return Err("column header does not match the schema".into());
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let values: Vec<f64> = line
                .split(',')
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| format!("row {}: {e}", i + 1))?;
            let values: [f64; N_COLUMNS] = values
                .try_into()
                .map_err(|v: Vec<f64>| format!("row {}: {} fields, expected {N_COLUMNS}", i + 1, v.len()))?;
            rows.push(RolloutRow::from_values(&values));
        }
        Ok(RolloutLog { rows })
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_csv())
    }

    pub fn read_csv(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_csv(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_default_model;
    use proptest::prelude::*;

    fn row(t: f64) -> RolloutRow {
        RolloutRow {
            time: t,
            ankle_ref: 0.1 * t,
            ankle_measured: -0.05 * t,
            foot_pitch: 0.01,
            com_z: 1.084,
            torque: [210.41, -3.0, 1e-7, 0.0],
            toe: true,
            reward_terms: [1.0, 0.5, 0.25, 1e-5, 0.9, 0.8],
            reward_total: 3.45678912345678,
            ..Default::default()
        }
    }

    #[test]
    fn empty_log_is_header_only() {
        let csv = RolloutLog::default().to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next(), Some(SCHEMA_LINE));
        assert_eq!(RolloutLog::parse_csv(&csv).unwrap(), RolloutLog::default());
    }

    #[test]
    fn schema_width() {
        assert_eq!(N_COLUMNS, 25);
        let log = RolloutLog { rows: vec![row(0.0)] };
        let csv = log.to_csv();
        for line in csv.lines().skip(1) {
            assert_eq!(line.split(',').count(), N_COLUMNS);
        }
    }

    #[test]
    fn nine_significant_digits() {
        let log = RolloutLog { rows: vec![row(0.001)] };
        let csv = log.to_csv();
        let data = csv.lines().nth(2).unwrap();
        let first = data.split(',').next().unwrap();
        assert_eq!(first, "1.00000000e-3");
        assert!(data.ends_with(",3.45678912e0"));
    }

    #[test]
    fn byte_stable() {
        let log = RolloutLog {
            rows: (0..50).map(|k| row(k as f64 * 1e-3)).collect(),
        };
        assert_eq!(log.to_csv(), log.clone().to_csv());
    }

    #[test]
    fn rejects_wrong_schema() {
        assert!(RolloutLog::parse_csv("time\n").is_err());
        let csv = RolloutLog { rows: vec![row(0.0)] }.to_csv().replace("v1", "v9");
        assert!(RolloutLog::parse_csv(&csv).is_err());
        let mut csv = RolloutLog::default().to_csv();
        csv.push_str("1,2,3\n");
        assert!(RolloutLog::parse_csv(&csv).is_err());
    }

    #[test]
    fn ceiling_check_uses_single_contact_rows() {
        let model = build_default_model();
        let mut both = row(0.0);
        both.heel = true;
        both.torque[0] = 1e4;
        let log = RolloutLog {
            rows: vec![both, row(0.001)],
        };
        let c = log.ceiling_check(&model, None);
        assert_eq!(c.rows, 1);
        assert_eq!(c.peak_torque, 210.41);
        let ceiling = ceiling_for_pitch(&model, Pivot::Toe, 0.01);
        assert!((c.worst_ratio - 210.41 / ceiling).abs() < 1e-12);
        assert_eq!(log.ceiling_check(&model, Some(Pivot::Heel)).rows, 0);
        assert!((log.underactuation_time(0.0) - 0.001).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn roundtrip_within_formatting_precision(
            vals in proptest::collection::vec(-1e6f64..1e6, N_COLUMNS),
            heel in any::<bool>(),
        ) {
            let mut arr = [0.0; N_COLUMNS];
            arr.copy_from_slice(&vals);
            arr[16] = if heel { 1.0 } else { 0.0 };
            arr[17] = 1.0 - arr[16];
            let log = RolloutLog { rows: vec![RolloutRow::from_values(&arr)] };
            let back = RolloutLog::parse_csv(&log.to_csv()).unwrap();
            for (a, b) in back.rows[0].values().iter().zip(arr) {
                prop_assert!((a - b).abs() <= 5e-9 * b.abs() + 1e-300);
            }
            // a second pass is exact
            prop_assert_eq!(RolloutLog::parse_csv(&back.to_csv()).unwrap(), back);
        }
    }
}
