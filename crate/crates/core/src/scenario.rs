//! Experiment configuration: physical layout, power budgets, flight limits and
//! discretization, plus the scenario-file format.
//!
//! The file is TOML. Keys match the [`ScenarioConfig`] field names exactly and
//! unknown keys are rejected. Powers in the file are in dBm, `ref_gain` is in
//! dB, distances are meters and positions are `[x, y]` arrays. Conversion to
//! linear units happens at load time. `slot_len` (or `num_slots`) may be
//! omitted and is then derived from `period`. `interference_threshold` is
//! either a scalar applied to every PU or one value per PU.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Position2D;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convert a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert watts to dBm. Zero maps to negative infinity.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// All physical and algorithmic parameters of one experiment, in linear units
/// (watts, meters, seconds, bits/s/Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub num_pus: usize,
    pub user_positions: Vec<Position2D>,
    pub pu_positions: Vec<Position2D>,
    pub eve_center: Position2D,
    pub eve_radius: f64,
    pub alt_s: f64,
    pub alt_j: f64,
    pub ref_gain: f64,
    pub noise_power: f64,
    pub p_s_ave: f64,
    pub p_j_ave: f64,
    pub p_s_max: f64,
    pub p_j_max: f64,
    /// One threshold per PU, watts.
    pub interference_threshold: Vec<f64>,
    pub v_max_s: f64,
    pub v_max_j: f64,
    pub period: f64,
    pub num_slots: usize,
    pub slot_len: f64,
    pub r_min: f64,
    pub epsilon: f64,
    pub start_s: Position2D,
    pub end_s: Position2D,
    pub start_j: Position2D,
    pub end_j: Position2D,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdSpec {
    Scalar(f64),
    PerPu(Vec<f64>),
}

/// On-disk layout. Powers are dBm, `ref_gain` is dB.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    num_users: usize,
    num_pus: usize,
    user_positions: Vec<Position2D>,
    pu_positions: Vec<Position2D>,
    eve_center: Position2D,
    eve_radius: f64,
    alt_s: f64,
    alt_j: f64,
    ref_gain: f64,
    noise_power: f64,
    p_s_ave: f64,
    p_j_ave: f64,
    p_s_max: f64,
    p_j_max: f64,
    interference_threshold: ThresholdSpec,
    v_max_s: f64,
    v_max_j: f64,
    period: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_slots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slot_len: Option<f64>,
    r_min: f64,
    epsilon: f64,
    start_s: Position2D,
    end_s: Position2D,
    start_j: Position2D,
    end_j: Position2D,
}

/// Parse and validate a scenario from TOML text.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.message().to_string()))?;
    let cfg = ScenarioConfig::from_file(file)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    load_scenario(&text)
}

/// Serialize to the canonical TOML form accepted by [`load_scenario`].
pub fn serialize_scenario(cfg: &ScenarioConfig) -> String {
    let thresholds = &cfg.interference_threshold;
    let threshold = if thresholds.windows(2).all(|w| w[0] == w[1]) && !thresholds.is_empty() {
        ThresholdSpec::Scalar(watts_to_dbm(thresholds[0]))
    } else {
        ThresholdSpec::PerPu(thresholds.iter().map(|&w| watts_to_dbm(w)).collect())
    };
    let file = ScenarioFile {
        num_users: cfg.num_users,
        num_pus: cfg.num_pus,
        user_positions: cfg.user_positions.clone(),
        pu_positions: cfg.pu_positions.clone(),
        eve_center: cfg.eve_center,
        eve_radius: cfg.eve_radius,
        alt_s: cfg.alt_s,
        alt_j: cfg.alt_j,
        ref_gain: linear_to_db(cfg.ref_gain),
        noise_power: watts_to_dbm(cfg.noise_power),
        p_s_ave: watts_to_dbm(cfg.p_s_ave),
        p_j_ave: watts_to_dbm(cfg.p_j_ave),
        p_s_max: watts_to_dbm(cfg.p_s_max),
        p_j_max: watts_to_dbm(cfg.p_j_max),
        interference_threshold: threshold,
        v_max_s: cfg.v_max_s,
        v_max_j: cfg.v_max_j,
        period: cfg.period,
        num_slots: Some(cfg.num_slots),
        slot_len: Some(cfg.slot_len),
        r_min: cfg.r_min,
        epsilon: cfg.epsilon,
        start_s: cfg.start_s,
        end_s: cfg.end_s,
        start_j: cfg.start_j,
        end_j: cfg.end_j,
    };
    toml::to_string(&file).expect("scenario serializes")
}

/// Reference layout: three users, two PUs, V_max = 7 m/s, H = 15/10 m,
/// rho_0 = -30 dB, sigma^2 = -90 dBm, Gamma_r = -80 dBm, eps = 1e-3,
/// P_max = 4 P_ave. The rest are repository choices: averages of
/// -20 dBm, R_min = 0.1, T = 100 s with 1 s slots, r_E = 10 m, and closed
/// trajectories that start and end on the eastern point of the initial circle.
pub fn default_paper_scenario() -> ScenarioConfig {
    let p_ave = dbm_to_watts(-20.0);
    // 4x average, snapped to its dBm representation so files round-trip exactly
    let p_max = dbm_to_watts(watts_to_dbm(4.0 * p_ave));
    let mut cfg = ScenarioConfig {
        num_users: 3,
        num_pus: 2,
        user_positions: vec![
            Position2D::new(-55.0, -10.0),
            Position2D::new(0.0, -65.0),
            Position2D::new(50.0, -5.0),
        ],
        pu_positions: vec![Position2D::new(30.0, 25.0), Position2D::new(-30.0, 25.0)],
        eve_center: Position2D::new(15.0, -15.0),
        eve_radius: 10.0,
        alt_s: 15.0,
        alt_j: 10.0,
        ref_gain: db_to_linear(-30.0),
        noise_power: dbm_to_watts(-90.0),
        p_s_ave: p_ave,
        p_j_ave: p_ave,
        p_s_max: p_max,
        p_j_max: p_max,
        interference_threshold: vec![dbm_to_watts(-80.0); 2],
        v_max_s: 7.0,
        v_max_j: 7.0,
        period: 100.0,
        num_slots: 100,
        slot_len: 1.0,
        r_min: 0.1,
        epsilon: 1e-3,
        start_s: Position2D::new(0.0, 0.0),
        end_s: Position2D::new(0.0, 0.0),
        start_j: Position2D::new(0.0, 0.0),
        end_j: Position2D::new(0.0, 0.0),
    };
    cfg.place_endpoints_on_init_circles();
    cfg
}

impl ScenarioConfig {
    fn from_file(f: ScenarioFile) -> Result<Self, ScenarioError> {
        let (num_slots, slot_len) = match (f.num_slots, f.slot_len) {
            (Some(n), Some(d)) => (n, d),
            (Some(n), None) => {
                if n == 0 {
                    return Err(ScenarioError::Validation("num_slots must be positive".into()));
                }
                (n, f.period / n as f64)
            }
            (None, Some(d)) => {
                if !(d > 0.0) {
                    return Err(ScenarioError::Validation("slot_len must be positive".into()));
                }
                let n = (f.period / d).round();
                if n < 1.0 {
                    return Err(ScenarioError::Validation("period shorter than one slot".into()));
                }
                (n as usize, d)
            }
            (None, None) => {
                return Err(ScenarioError::Parse(
                    "at least one of num_slots and slot_len is required".into(),
                ))
            }
        };
        let interference_threshold = match f.interference_threshold {
            ThresholdSpec::Scalar(dbm) => vec![dbm_to_watts(dbm); f.num_pus],
            ThresholdSpec::PerPu(v) => v.into_iter().map(dbm_to_watts).collect(),
        };
        Ok(Self {
            num_users: f.num_users,
            num_pus: f.num_pus,
            user_positions: f.user_positions,
            pu_positions: f.pu_positions,
            eve_center: f.eve_center,
            eve_radius: f.eve_radius,
            alt_s: f.alt_s,
            alt_j: f.alt_j,
            ref_gain: db_to_linear(f.ref_gain),
            noise_power: dbm_to_watts(f.noise_power),
            p_s_ave: dbm_to_watts(f.p_s_ave),
            p_j_ave: dbm_to_watts(f.p_j_ave),
            p_s_max: dbm_to_watts(f.p_s_max),
            p_j_max: dbm_to_watts(f.p_j_max),
            interference_threshold,
            v_max_s: f.v_max_s,
            v_max_j: f.v_max_j,
            period: f.period,
            num_slots,
            slot_len,
            r_min: f.r_min,
            epsilon: f.epsilon,
            start_s: f.start_s,
            end_s: f.end_s,
            start_j: f.start_j,
            end_j: f.end_j,
        })
    }

    /// Check every invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Validation(msg));
        if self.num_users == 0 {
            return fail("num_users must be positive".into());
        }
        if self.user_positions.len() != self.num_users {
            return fail(format!(
                "user_positions has {} entries, num_users is {}",
                self.user_positions.len(),
                self.num_users
            ));
        }
        if self.pu_positions.len() != self.num_pus {
            return fail(format!(
                "pu_positions has {} entries, num_pus is {}",
                self.pu_positions.len(),
                self.num_pus
            ));
        }
        if self.interference_threshold.len() != self.num_pus {
            return fail(format!(
                "interference_threshold has {} entries, num_pus is {}",
                self.interference_threshold.len(),
                self.num_pus
            ));
        }
        let points = self
            .user_positions
            .iter()
            .chain(&self.pu_positions)
            .chain([&self.eve_center, &self.start_s, &self.end_s, &self.start_j, &self.end_j]);
        for p in points {
            if !p.is_finite() {
                return fail("positions must be finite".into());
            }
        }
        if self.num_slots == 0 || !(self.slot_len > 0.0) || !(self.period > 0.0) {
            return fail("discretization: period, num_slots and slot_len must be positive".into());
        }
        if ((self.slot_len * self.num_slots as f64) - self.period).abs() > 1e-12 * self.period {
            return fail(format!(
                "discretization: slot_len * num_slots = {} differs from period {}",
                self.slot_len * self.num_slots as f64,
                self.period
            ));
        }
        if !(self.p_s_ave > 0.0) || !(self.p_j_ave >= 0.0) {
            return fail("power ordering: p_s_ave must be > 0 and p_j_ave >= 0".into());
        }
        if self.p_s_max < self.p_s_ave || self.p_j_max < self.p_j_ave {
            return fail("power ordering: peak power below average power".into());
        }
        if !(self.eve_radius >= 0.0) || !self.eve_radius.is_finite() {
            return fail("eve_radius must be finite and non-negative".into());
        }
        if !(self.alt_s > 0.0) || !(self.alt_j > 0.0) {
            return fail("altitudes must be positive".into());
        }
        if !(self.ref_gain > 0.0) || !(self.noise_power > 0.0) {
            return fail("ref_gain and noise_power must be positive".into());
        }
        if self.interference_threshold.iter().any(|&g| !(g > 0.0)) {
            return fail("interference thresholds must be positive".into());
        }
        if !(self.v_max_s > 0.0) || !(self.v_max_j > 0.0) {
            return fail("speed limits must be positive".into());
        }
        if !(self.r_min >= 0.0) || !(self.epsilon > 0.0) {
            return fail("r_min must be >= 0 and epsilon > 0".into());
        }
        let horizon = (self.num_slots as f64 - 1.0) * self.slot_len;
        if self.start_s.dist(&self.end_s) > horizon * self.v_max_s + 1e-9 {
            return fail("reachability: S cannot reach end_s from start_s".into());
        }
        if self.start_j.dist(&self.end_j) > horizon * self.v_max_j + 1e-9 {
            return fail("reachability: J cannot reach end_j from start_j".into());
        }
        if self.start_s.dist(&self.eve_center) < self.eve_radius
            || self.end_s.dist(&self.eve_center) < self.eve_radius
        {
            return fail("eavesdropper disc: S endpoints lie inside the uncertainty disc".into());
        }
        Ok(())
    }

    /// Centroid of the cognitive users, the center of both initial circles.
    pub fn user_centroid(&self) -> Position2D {
        let k = self.user_positions.len() as f64;
        let (sx, sy) = self
            .user_positions
            .iter()
            .fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
        Position2D::new(sx / k, sy / k)
    }

    /// Radii of the initial S and J circles: `R_S = min(V T / 2 pi, max_k |C - w_k|)`,
    /// further capped so one slot's chord stays within the speed limit, and
    /// `R_J = R_S / 2` (also speed-capped).
    pub fn init_radii(&self) -> (f64, f64) {
        let c = self.user_centroid();
        let farthest = self
            .user_positions
            .iter()
            .map(|w| c.dist(w))
            .fold(0.0, f64::max);
        let r_s = (self.v_max_s * self.period / (2.0 * PI))
            .min(farthest)
            .min(chord_radius_cap(self.num_slots, self.slot_len * self.v_max_s));
        let r_j = (0.5 * r_s).min(chord_radius_cap(self.num_slots, self.slot_len * self.v_max_j));
        (r_s, r_j)
    }

    /// Set q^0 = q^F for both UAVs to the easternmost point of their initial circle.
    pub fn place_endpoints_on_init_circles(&mut self) {
        let c = self.user_centroid();
        let (r_s, r_j) = self.init_radii();
        self.start_s = Position2D::new(c.x + r_s, c.y);
        self.end_s = self.start_s;
        self.start_j = Position2D::new(c.x + r_j, c.y);
        self.end_j = self.start_j;
    }

    /// Same scenario over a different flight period, keeping the slot length.
    pub fn with_period(&self, period: f64) -> Result<Self, ScenarioError> {
        let mut out = self.clone();
        let n = (period / self.slot_len).round();
        if n < 2.0 {
            return Err(ScenarioError::Validation("period shorter than two slots".into()));
        }
        out.period = period;
        out.num_slots = n as usize;
        out.slot_len = period / n;
        out.validate()?;
        Ok(out)
    }

    pub fn with_eve_radius(&self, radius: f64) -> Result<Self, ScenarioError> {
        let mut out = self.clone();
        out.eve_radius = radius;
        out.validate()?;
        Ok(out)
    }

    /// Same threshold (watts) on every PU.
    pub fn with_interference_threshold(&self, watts: f64) -> Result<Self, ScenarioError> {
        let mut out = self.clone();
        out.interference_threshold = vec![watts; self.num_pus];
        out.validate()?;
        Ok(out)
    }

    pub fn max_step_s(&self) -> f64 {
        self.slot_len * self.v_max_s
    }

    pub fn max_step_j(&self) -> f64 {
        self.slot_len * self.v_max_j
    }
}

/// Largest radius whose chord over one of `n - 1` equal arcs is at most `step`.
fn chord_radius_cap(n: usize, step: f64) -> f64 {
    if n < 2 {
        return f64::INFINITY;
    }
    let half_arc = PI / (n as f64 - 1.0);
    step / (2.0 * half_arc.sin())
}
