//! Line-of-sight air-to-ground channel gains, including the worst-case bounds
//! used when the eavesdropper is only known to lie inside a disc.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Horizontal position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Position2D {
    pub x: f64,
    pub y: f64,
}

impl Position2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(&self, other: &Position2D) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Position2D) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Position2D {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Position2D> for [f64; 2] {
    fn from(p: Position2D) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("UAV inside uncertainty disc: distance {distance} m < radius {radius} m")]
    InsideDisc { distance: f64, radius: f64 },
}

/// `rho_0 / (|q - w|^2 + H^2)`.
pub fn los_gain(q: &Position2D, w: &Position2D, altitude: f64, ref_gain: f64) -> f64 {
    ref_gain / (q.dist2(w) + altitude * altitude)
}

/// Upper bound on the S -> E gain over every eavesdropper position in the disc,
/// using the closest possible horizontal distance `|q_s - w_E| - r_E`.
pub fn worst_case_gain_se(
    q_s: &Position2D,
    eve_center: &Position2D,
    eve_radius: f64,
    alt_s: f64,
    ref_gain: f64,
) -> Result<f64, ChannelError> {
    if eve_radius == 0.0 {
        return Ok(los_gain(q_s, eve_center, alt_s, ref_gain));
    }
    let distance = q_s.dist(eve_center);
    if distance < eve_radius {
        return Err(ChannelError::InsideDisc { distance, radius: eve_radius });
    }
    let gap = distance - eve_radius;
    Ok(ref_gain / (gap * gap + alt_s * alt_s))
}

/// Like [`worst_case_gain_se`] but saturating at `rho_0 / H^2` inside the disc.
/// Used for evaluation only; trajectories inside the disc are flagged by the
/// feasibility check.
pub fn worst_case_gain_se_saturating(
    q_s: &Position2D,
    eve_center: &Position2D,
    eve_radius: f64,
    alt_s: f64,
    ref_gain: f64,
) -> f64 {
    if eve_radius == 0.0 {
        return los_gain(q_s, eve_center, alt_s, ref_gain);
    }
    let gap = (q_s.dist(eve_center) - eve_radius).max(0.0);
    ref_gain / (gap * gap + alt_s * alt_s)
}

/// Lower bound on the J -> E gain over the disc, using the farthest possible
/// horizontal distance `|q_j - w_E| + r_E`.
pub fn worst_case_gain_je(
    q_j: &Position2D,
    eve_center: &Position2D,
    eve_radius: f64,
    alt_j: f64,
    ref_gain: f64,
) -> f64 {
    if eve_radius == 0.0 {
        return los_gain(q_j, eve_center, alt_j, ref_gain);
    }
    let far = q_j.dist(eve_center) + eve_radius;
    ref_gain / (far * far + alt_j * alt_j)
}
