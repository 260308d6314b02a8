//! Gaussian measurement-error model: noisy angle/range synthesis and the
//! stacked covariance blocks the weighted stages consume.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::TrueParams;
use crate::{Error, Result};

/// Per-anchor measurement-error standard deviations.
///
/// Entries may be zero only all at once (the exact-measurement degenerate
/// case used by zero-noise checks); covariance assembly requires strictly
/// positive entries to stay positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Azimuth error std deviations, radians, one per anchor.
    pub sigma_n: Vec<f64>,
    /// Elevation error std deviations, radians, one per anchor.
    pub sigma_omega: Vec<f64>,
    /// Range-difference error std deviations, meters, one per anchor.
    pub sigma_nu: Vec<f64>,
}

impl NoiseModel {
    /// Builds a model with one angle sigma (shared by azimuth and elevation)
    /// and one range sigma, broadcast across `m` anchors.
    pub fn uniform(sigma_a: f64, sigma_t: f64, m: usize) -> Result<Self> {
        let model = Self {
            sigma_n: vec![sigma_a; m],
            sigma_omega: vec![sigma_a; m],
            sigma_nu: vec![sigma_t; m],
        };
        model.validate()?;
        Ok(model)
    }

    pub fn n_ris(&self) -> usize {
        self.sigma_n.len()
    }

    /// Checks lengths agree and entries are finite and non-negative, with
    /// zeros allowed only in the all-zero model.
    pub fn validate(&self) -> Result<()> {
        let m = self.sigma_n.len();
        if self.sigma_omega.len() != m || self.sigma_nu.len() != m || m == 0 {
            return Err(Error::InvalidInput(format!(
                "sigma vector lengths disagree: {} / {} / {}",
                m,
                self.sigma_omega.len(),
                self.sigma_nu.len()
            )));
        }
        let entries = || {
            self.sigma_n
                .iter()
                .chain(&self.sigma_omega)
                .chain(&self.sigma_nu)
        };
        if entries().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidInput(
                "sigma entries must be finite and non-negative".into(),
            ));
        }
        let any_zero = entries().any(|s| *s == 0.0);
        if any_zero && !self.is_null() {
            return Err(Error::InvalidInput(
                "zero sigmas are only valid in the all-zero model".into(),
            ));
        }
        Ok(())
    }

    /// True when every sigma is exactly zero.
    pub fn is_null(&self) -> bool {
        self.sigma_n
            .iter()
            .chain(&self.sigma_omega)
            .chain(&self.sigma_nu)
            .all(|s| *s == 0.0)
    }

    /// Scales every sigma by `factor` (variances by `factor^2`).
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |v: &[f64]| v.iter().map(|s| s * factor).collect();
        Self {
            sigma_n: scale(&self.sigma_n),
            sigma_omega: scale(&self.sigma_omega),
            sigma_nu: scale(&self.sigma_nu),
        }
    }
}

/// Scalar-or-array JSON field: a scalar broadcasts across anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Scalar(f64),
    PerAnchor(Vec<f64>),
}

impl SigmaSpec {
    pub(crate) fn resolve(&self, m: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            SigmaSpec::Scalar(s) => Ok(vec![*s; m]),
            SigmaSpec::PerAnchor(v) if v.len() == m => Ok(v.clone()),
            SigmaSpec::PerAnchor(v) => Err(Error::InvalidInput(format!(
                "{name} has {} entries but the scenario has {m} anchors",
                v.len()
            ))),
        }
    }
}

/// On-disk noise description: one angle field feeding both azimuth and
/// elevation sigmas, one range field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Angle error std deviation(s), radians.
    pub sigma_a: SigmaSpec,
    /// Range-difference error std deviation(s), meters.
    pub sigma_t: SigmaSpec,
}

impl NoiseSpec {
    /// Expands into a concrete per-anchor model for `m` anchors.
    pub fn into_model(&self, m: usize) -> Result<NoiseModel> {
        let sigma_a = self.sigma_a.resolve(m, "sigma_a")?;
        let model = NoiseModel {
            sigma_n: sigma_a.clone(),
            sigma_omega: sigma_a,
            sigma_nu: self.sigma_t.resolve(m, "sigma_t")?,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Noisy measurement vectors, one entry per anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    /// Measured azimuths, radians.
    pub theta_hat: Vec<f64>,
    /// Measured elevations, radians.
    pub phi_hat: Vec<f64>,
    /// Measured range differences, meters.
    pub rb_hat: Vec<f64>,
}

impl Measurements {
    pub fn n_ris(&self) -> usize {
        self.theta_hat.len()
    }

    /// Exact measurements equal to the true parameters.
    pub fn noiseless(truth: &TrueParams) -> Self {
        Self {
            theta_hat: truth.azimuths.clone(),
            phi_hat: truth.elevations.clone(),
            rb_hat: truth.range_diffs.clone(),
        }
    }
}

/// Diagonal covariance blocks `(Q_n, Q_omega, Q_nu)`, each `M x M`.
pub fn covariance_blocks(model: &NoiseModel) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let diag = |v: &[f64]| DMatrix::from_fn(v.len(), v.len(), |r, c| {
        if r == c { v[r] * v[r] } else { 0.0 }
    });
    (
        diag(&model.sigma_n),
        diag(&model.sigma_omega),
        diag(&model.sigma_nu),
    )
}

/// Stacked covariance `Q_r = blkdiag(Q_n, Q_omega, Q_nu)`, `3M x 3M`.
pub fn stacked_covariance(model: &NoiseModel) -> DMatrix<f64> {
    let m = model.n_ris();
    let mut q = DMatrix::zeros(3 * m, 3 * m);
    for i in 0..m {
        q[(i, i)] = model.sigma_n[i] * model.sigma_n[i];
        q[(m + i, m + i)] = model.sigma_omega[i] * model.sigma_omega[i];
        q[(2 * m + i, 2 * m + i)] = model.sigma_nu[i] * model.sigma_nu[i];
    }
    q
}

/// Draws one set of noisy measurements. Pure in `(truth, model, seed)`:
/// the same arguments always produce bit-identical output.
///
/// Draw order (part of the determinism contract): all azimuths, then all
/// elevations, then all range differences, one standard-normal draw each,
/// scaled by the corresponding sigma. The draw count is fixed at `3M`
/// regardless of the sigmas, so streams stay aligned across noise levels.
pub fn synthesize(truth: &TrueParams, model: &NoiseModel, seed: u64) -> Measurements {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = |values: &[f64], sigmas: &[f64]| -> Vec<f64> {
        values
            .iter()
            .zip(sigmas)
            .map(|(v, s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + s * z
            })
            .collect()
    };
    Measurements {
        theta_hat: noisy(&truth.azimuths, &model.sigma_n),
        phi_hat: noisy(&truth.elevations, &model.sigma_omega),
        rb_hat: noisy(&truth.range_diffs, &model.sigma_nu),
    }
}
