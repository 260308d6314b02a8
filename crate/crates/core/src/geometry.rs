//! Noise-free geometric truth: arrival angles, ranges, and range differences
//! implied by a scenario's anchor and user coordinates.
//!
//! Angle conventions. The azimuth at anchor `i` is measured in the horizontal
//! plane as `atan2(x_q - x_i, y_q - y_i)`, which makes two things true for
//! every placement with a nonzero horizontal offset:
//!
//! - `cos(theta) * (x_q - x_i) - sin(theta) * (y_q - y_i) = 0` (the identity
//!   the pseudolinear azimuth rows are built on), and
//! - `sin(theta) * (x_q - x_i) + cos(theta) * (y_q - y_i) > 0` (the projected
//!   horizontal range is positive, so the elevation is well defined).
//!
//! A plain single-argument arctangent satisfies the first identity but flips
//! the projected range negative whenever `y_q < y_i`. The nominal interval
//! `(0, pi)` holds exactly when the user sits in the anchor's positive-x
//! half-space; for other placements the angle leaves that interval while both
//! identities above keep holding, which is what every consumer in this crate
//! relies on. Angles are radians throughout; degrees exist only at the CLI.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Anchor geometry: base station `p`, reflecting anchors `s_1..s_M`, and the
/// true mobile-user position `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Base-station position, meters.
    #[serde(rename = "bs")]
    pub bs_position: Vector3<f64>,
    /// Reflecting-anchor positions, meters. At least two.
    #[serde(rename = "ris")]
    pub ris_positions: Vec<Vector3<f64>>,
    /// Mobile-user position, meters.
    #[serde(rename = "mu")]
    pub mu_position: Vector3<f64>,
}

impl Scenario {
    /// Builds a scenario and checks its structural invariants.
    pub fn new(
        bs_position: Vector3<f64>,
        ris_positions: Vec<Vector3<f64>>,
        mu_position: Vector3<f64>,
    ) -> Result<Self> {
        let s = Self {
            bs_position,
            ris_positions,
            mu_position,
        };
        s.validate()?;
        Ok(s)
    }

    /// Number of reflecting anchors `M`.
    pub fn n_ris(&self) -> usize {
        self.ris_positions.len()
    }

    /// Checks: M >= 2 (the first-stage system needs 3M >= 4 rows), all
    /// coordinates finite, and the user does not coincide with any anchor
    /// (all ranges strictly positive).
    pub fn validate(&self) -> Result<()> {
        if self.ris_positions.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 reflecting anchors, got {}",
                self.ris_positions.len()
            )));
        }
        let all = self
            .ris_positions
            .iter()
            .chain([&self.bs_position, &self.mu_position]);
        for v in all {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidInput("non-finite coordinate".into()));
            }
        }
        if self.mu_position == self.bs_position {
            return Err(Error::InvalidInput(
                "user position coincides with the base station".into(),
            ));
        }
        if let Some(i) = self
            .ris_positions
            .iter()
            .position(|s| *s == self.mu_position)
        {
            return Err(Error::InvalidInput(format!(
                "user position coincides with anchor {i}"
            )));
        }
        Ok(())
    }

    /// Same scenario restricted to the first `k` reflecting anchors.
    pub fn with_first_ris(&self, k: usize) -> Result<Self> {
        if k > self.ris_positions.len() {
            return Err(Error::InvalidInput(format!(
                "requested {k} anchors but the scenario has {}",
                self.ris_positions.len()
            )));
        }
        Self::new(
            self.bs_position,
            self.ris_positions[..k].to_vec(),
            self.mu_position,
        )
    }
}

/// Noise-free measurement parameters implied by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    /// Azimuth angles at each anchor, radians (nominally in `(0, pi)`).
    pub azimuths: Vec<f64>,
    /// Elevation angles at each anchor, radians in `(-pi/2, pi/2)`.
    pub elevations: Vec<f64>,
    /// Direct base-station/user range `R_BU`, meters.
    pub r_bu: f64,
    /// Anchor/user ranges `R_RU,i`, meters.
    pub r_ru: Vec<f64>,
    /// Range differences `R_B,i = R_RU,i - R_BU`, meters.
    pub range_diffs: Vec<f64>,
}

impl TrueParams {
    pub fn n_ris(&self) -> usize {
        self.azimuths.len()
    }
}

/// Azimuth of `q` seen from `s`, chosen so the pseudolinear identity holds
/// with a positive projected horizontal range (see module docs).
///
/// Errors when `q` lies on the vertical line through `s`.
pub fn aoa_azimuth(q: &Vector3<f64>, s: &Vector3<f64>) -> Result<f64> {
    let dx = q.x - s.x;
    let dy = q.y - s.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::DegenerateGeometry {
            anchor: 0,
            detail: "user on the vertical line through the anchor".into(),
        });
    }
    Ok(dx.atan2(dy))
}

/// Elevation of `q` seen from `s`, given the azimuth from [`aoa_azimuth`].
///
/// The returned angle lies in `(-pi/2, pi/2)` and satisfies
/// `cos(phi) * (z_q - z_i) = sin(phi) * rho` with `rho` the projected
/// horizontal range. Errors when `rho` is not strictly positive.
pub fn aoa_elevation(q: &Vector3<f64>, s: &Vector3<f64>, theta: f64) -> Result<f64> {
    let dx = q.x - s.x;
    let dy = q.y - s.y;
    let dz = q.z - s.z;
    let rho = theta.sin() * dx + theta.cos() * dy;
    if rho <= 0.0 {
        return Err(Error::DegenerateGeometry {
            anchor: 0,
            detail: format!("projected horizontal range {rho:.3e} not positive"),
        });
    }
    Ok(dz.atan2(rho))
}

/// Euclidean distance between two points, meters.
pub fn distance(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm()
}

/// Range difference `R_B,i = |q - s_i| - |q - p|` of the anchor path over the
/// direct path, meters.
pub fn range_difference(q: &Vector3<f64>, s_i: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
    distance(q, s_i) - distance(q, p)
}

/// Computes every noise-free parameter for a scenario.
pub fn true_parameters(scenario: &Scenario) -> Result<TrueParams> {
    scenario.validate()?;
    let q = &scenario.mu_position;
    let p = &scenario.bs_position;
    let r_bu = distance(q, p);

    let m = scenario.n_ris();
    let mut azimuths = Vec::with_capacity(m);
    let mut elevations = Vec::with_capacity(m);
    let mut r_ru = Vec::with_capacity(m);
    let mut range_diffs = Vec::with_capacity(m);
    for (i, s) in scenario.ris_positions.iter().enumerate() {
        let tag = |e| match e {
            Error::DegenerateGeometry { detail, .. } => {
                Error::DegenerateGeometry { anchor: i, detail }
            }
            other => other,
        };
        let theta = aoa_azimuth(q, s).map_err(tag)?;
        let phi = aoa_elevation(q, s, theta).map_err(tag)?;
        azimuths.push(theta);
        elevations.push(phi);
        r_ru.push(distance(q, s));
        range_diffs.push(range_difference(q, s, p));
    }

    Ok(TrueParams {
        azimuths,
        elevations,
        r_bu,
        r_ru,
        range_diffs,
    })
}
