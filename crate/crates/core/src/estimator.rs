//! Two-stage weighted-least-squares position solver.
//!
//! Stage 1 stacks per-anchor azimuth, elevation, and range-difference
//! constraints into one pseudolinear system in `u = [q; R_BU]` and solves it
//! by iteratively reweighted least squares: the optimal weight depends on the
//! unknown anchor ranges, so it starts unweighted and rebuilds the weight
//! from each iterate's implied ranges. Stage 2 exploits the known dependence
//! `R_BU = |q - p|` by solving a second weighted system in the squared
//! coordinate offsets `xi = (q - p) o (q - p)`. The final map recovers the
//! position through componentwise signs (taken from Stage 1) and square
//! roots.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::geometry::Scenario;
use crate::measurement::{Measurements, NoiseModel};
use crate::{Error, Result};

/// Stacked pseudolinear system. Row order: all azimuth rows, all elevation
/// rows, all range-difference rows (`3M x 4` total).
#[derive(Debug, Clone, PartialEq)]
pub struct PseudolinearSystem {
    /// Coefficient matrix; angle rows have a zero fourth column.
    pub g_hat: DMatrix<f64>,
    /// Right-hand side.
    pub h_hat: DVector<f64>,
    /// Stacked measurement covariance (`3M x 3M`).
    pub q_r: DMatrix<f64>,
}

impl PseudolinearSystem {
    pub fn n_ris(&self) -> usize {
        self.g_hat.nrows() / 3
    }

    /// Elevation cosines recovered from the assembled elevation rows (third
    /// column holds `-cos(phi_hat)`); used to rebuild the scaling matrix
    /// without re-threading the raw measurements.
    fn elevation_cosines(&self) -> Vec<f64> {
        let m = self.n_ris();
        (0..m).map(|i| -self.g_hat[(m + i, 2)]).collect()
    }
}

/// Outcome of the Stage-1 iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Result {
    /// Estimate of `[x_q, y_q, z_q, R_BU]`.
    pub u_breve: Vector4<f64>,
    /// Final weight used for the last solve.
    pub w_r: DMatrix<f64>,
    /// Covariance estimate `(G^T W G)^-1` at the final weight.
    pub omega_u: Matrix4<f64>,
    /// Number of weighted solves performed.
    pub iterations_used: usize,
}

/// Final position estimate with its intermediate quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEstimate {
    /// Squared coordinate offsets from the base station, m^2 (pre-clamp).
    pub xi_breve: Vector3<f64>,
    /// Diagonal sign matrix applied to the square roots; entries in
    /// `{-1, 0, +1}`.
    pub pi: Matrix3<f64>,
    /// Recovered position, meters.
    pub q_hat: Vector3<f64>,
    /// Indices of squared offsets that were negative and clamped to zero.
    pub clamped_components: Vec<usize>,
}

/// Solver knobs for the Stage-1 iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Weighted-solve budget.
    pub max_iters: usize,
    /// Convergence threshold on the update norm between consecutive solves,
    /// relative to the iterate norm (floored at one).
    pub tol: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            tol: 1e-10,
        }
    }
}

/// Azimuth constraint row `[-cos, sin, 0, 0]`.
pub fn azimuth_row(theta_hat: f64) -> Vector4<f64> {
    Vector4::new(-theta_hat.cos(), theta_hat.sin(), 0.0, 0.0)
}

/// Elevation constraint row `[sin(phi) sin(theta), sin(phi) cos(theta),
/// -cos(phi), 0]`.
pub fn elevation_row(theta_hat: f64, phi_hat: f64) -> Vector4<f64> {
    Vector4::new(
        phi_hat.sin() * theta_hat.sin(),
        phi_hat.sin() * theta_hat.cos(),
        -phi_hat.cos(),
        0.0,
    )
}

/// Range-difference constraint: row `-[x_i - x_p, y_i - y_p, z_i - z_p,
/// rb_hat]` and target `-|s_i|^2/2 + |p|^2/2 + rb_hat^2/2`.
pub fn tdoa_row(rb_hat_i: f64, s_i: &Vector3<f64>, p: &Vector3<f64>) -> (Vector4<f64>, f64) {
    let d = s_i - p;
    let g = Vector4::new(-d.x, -d.y, -d.z, -rb_hat_i);
    let h = 0.5 * (p.norm_squared() - s_i.norm_squared() + rb_hat_i * rb_hat_i);
    (g, h)
}

/// Stacks the measurement rows into the pseudolinear system. The covariance
/// block comes from the noise model (the assumed error statistics, not the
/// realized noise).
pub fn assemble(
    measurements: &Measurements,
    scenario: &Scenario,
    model: &NoiseModel,
) -> Result<PseudolinearSystem> {
    scenario.validate()?;
    model.validate()?;
    let m = scenario.n_ris();
    if measurements.n_ris() != m
        || measurements.phi_hat.len() != m
        || measurements.rb_hat.len() != m
        || model.n_ris() != m
    {
        return Err(Error::InvalidInput(format!(
            "measurement/model lengths do not match the scenario's {m} anchors"
        )));
    }

    let mut g_hat = DMatrix::zeros(3 * m, 4);
    let mut h_hat = DVector::zeros(3 * m);
    for i in 0..m {
        let s = &scenario.ris_positions[i];
        let az = azimuth_row(measurements.theta_hat[i]);
        g_hat.row_mut(i).copy_from(&az.transpose());
        h_hat[i] = az.x * s.x + az.y * s.y + az.z * s.z;

        let el = elevation_row(measurements.theta_hat[i], measurements.phi_hat[i]);
        g_hat.row_mut(m + i).copy_from(&el.transpose());
        h_hat[m + i] = el.x * s.x + el.y * s.y + el.z * s.z;

        let (gt, ht) = tdoa_row(measurements.rb_hat[i], s, &scenario.bs_position);
        g_hat.row_mut(2 * m + i).copy_from(&gt.transpose());
        h_hat[2 * m + i] = ht;
    }

    Ok(PseudolinearSystem {
        g_hat,
        h_hat,
        q_r: crate::measurement::stacked_covariance(model),
    })
}

/// Residual scaling matrix: block-diagonal with per-anchor blocks
/// `-diag(R_i cos(phi_i))`, `-diag(R_i)`, `+diag(R_i)`.
pub fn scaling_matrix(r_ru: &[f64], elevations: &[f64]) -> DMatrix<f64> {
    scaling_from_cosines(
        r_ru,
        &elevations.iter().map(|p| p.cos()).collect::<Vec<_>>(),
    )
}

fn scaling_from_cosines(r_ru: &[f64], cos_phi: &[f64]) -> DMatrix<f64> {
    let m = r_ru.len();
    let mut b = DMatrix::zeros(3 * m, 3 * m);
    for i in 0..m {
        b[(i, i)] = -r_ru[i] * cos_phi[i];
        b[(m + i, m + i)] = -r_ru[i];
        b[(2 * m + i, 2 * m + i)] = r_ru[i];
    }
    b
}

/// Residual-covariance inverse `W = (B Q B^T)^-1`.
pub fn weight_matrix(b_r: &DMatrix<f64>, q_r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let omega = b_r * q_r * b_r.transpose();
    match omega.clone().cholesky() {
        Some(chol) => Ok(chol.inverse()),
        None => Err(Error::SingularSystem {
            condition: condition_estimate(&omega),
        }),
    }
}

/// Weighted least squares `argmin (h - G u)^T W (h - G u)` via a Cholesky
/// factorization of the normal equations. A failed factorization reports the
/// condition estimate of `G^T W G`.
pub fn wls_solve(g: &DMatrix<f64>, h: &DVector<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>> {
    let gtw = g.transpose() * w;
    let a = &gtw * g;
    let b = &gtw * h;
    match a.clone().cholesky() {
        Some(chol) => Ok(chol.solve(&b)),
        None => Err(Error::SingularSystem {
            condition: condition_estimate(&a),
        }),
    }
}

pub(crate) fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Iteratively reweighted Stage-1 solve.
///
/// Starts unweighted, then alternates solving and rebuilding the weight from
/// the iterate's implied anchor ranges until the update norm drops under
/// `config.tol` relative to the iterate norm (floored at one, so the test is
/// unit-free across scene scales) or the iteration budget runs out (reported
/// as an error carrying the last iterate). With an all-zero noise model the
/// weight stays at identity: measurements are exact, so weighting is
/// irrelevant.
pub fn stage1(
    system: &PseudolinearSystem,
    scenario: &Scenario,
    config: &EstimatorConfig,
) -> Result<Stage1Result> {
    if config.max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be at least 1".into()));
    }
    let m = system.n_ris();
    let cos_phi = system.elevation_cosines();
    let null_noise = system.q_r.diagonal().iter().all(|v| *v == 0.0);

    let mut w = DMatrix::identity(3 * m, 3 * m);
    let mut u_prev: Option<DVector<f64>> = None;
    let mut last_delta = f64::INFINITY;
    for iter in 1..=config.max_iters {
        let u = wls_solve(&system.g_hat, &system.h_hat, &w)?;
        if let Some(prev) = &u_prev {
            last_delta = (&u - prev).norm();
            if last_delta < config.tol * u.norm().max(1.0) {
                return finish_stage1(system, &w, &u, iter);
            }
        }
        if iter == config.max_iters {
            let last = finish_stage1(system, &w, &u, iter)?;
            return Err(Error::Stage1NonConvergence {
                iterations: iter,
                last_delta,
                last: Box::new(last),
            });
        }
        if !null_noise {
            let pos = Vector3::new(u[0], u[1], u[2]);
            let ranges: Vec<f64> = scenario
                .ris_positions
                .iter()
                .map(|s| (pos - s).norm())
                .collect();
            let b = scaling_from_cosines(&ranges, &cos_phi);
            w = weight_matrix(&b, &system.q_r)?;
        }
        u_prev = Some(u);
    }
    unreachable!("loop always returns within max_iters");
}

fn finish_stage1(
    system: &PseudolinearSystem,
    w: &DMatrix<f64>,
    u: &DVector<f64>,
    iterations: usize,
) -> Result<Stage1Result> {
    let p_hat = system.g_hat.transpose() * w * &system.g_hat;
    let omega_u = match p_hat.clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => {
            return Err(Error::SingularSystem {
                condition: condition_estimate(&p_hat),
            })
        }
    };
    Ok(Stage1Result {
        u_breve: Vector4::new(u[0], u[1], u[2], u[3]),
        w_r: w.clone(),
        omega_u: Matrix4::from_iterator(omega_u.iter().copied()),
        iterations_used: iterations,
    })
}

/// Second-stage system matrix: three identity rows tying each squared offset
/// to its unknown, plus one all-ones row tying their sum to `R_BU^2`.
pub fn stage2_design() -> DMatrix<f64> {
    let mut g1 = DMatrix::zeros(4, 3);
    g1[(0, 0)] = 1.0;
    g1[(1, 1)] = 1.0;
    g1[(2, 2)] = 1.0;
    g1[(3, 0)] = 1.0;
    g1[(3, 1)] = 1.0;
    g1[(3, 2)] = 1.0;
    g1
}

/// Stage-2 refinement on the squared coordinate offsets.
///
/// Returns the raw (unclamped) `xi` estimate and the weight used, so the
/// bias predictor and tests can inspect it.
pub fn stage2(
    stage1: &Stage1Result,
    system: &PseudolinearSystem,
    p: &Vector3<f64>,
) -> Result<(Vector3<f64>, Matrix4<f64>)> {
    let d = stage1.u_breve - Vector4::new(p.x, p.y, p.z, 0.0);
    // Degeneracy threshold scales with the offset magnitude so the check is
    // unit-free; an axis tie makes the squared-offset system unscalable.
    let threshold = 1e-9 * d.norm().max(1.0);
    for k in 0..4 {
        if d[k].abs() < threshold {
            return Err(Error::DegenerateAxis {
                axis: k,
                magnitude: d[k].abs(),
                threshold,
            });
        }
    }

    let h1 = DVector::from_iterator(4, d.iter().map(|v| v * v));
    let b1_inv = Matrix4::from_diagonal(&Vector4::new(
        1.0 / (2.0 * d[0]),
        1.0 / (2.0 * d[1]),
        1.0 / (2.0 * d[2]),
        1.0 / (2.0 * d[3]),
    ));
    let p_hat = system.g_hat.transpose() * &stage1.w_r * &system.g_hat;
    let p_hat = Matrix4::from_iterator(p_hat.iter().copied());
    let w1 = b1_inv * p_hat * b1_inv;

    let w1_dyn = DMatrix::from_iterator(4, 4, w1.iter().copied());
    let xi = wls_solve(&stage2_design(), &h1, &w1_dyn)?;
    Ok((Vector3::new(xi[0], xi[1], xi[2]), w1))
}

fn sign_or_zero(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}

/// Sign/square-root recovery of the position from the squared offsets.
/// Negative offsets are clamped to zero (and recorded): the estimate then
/// pins to the base station on that axis.
pub fn finalize(xi_breve: &Vector3<f64>, u_breve: &Vector4<f64>, p: &Vector3<f64>) -> FinalEstimate {
    let pi = Matrix3::from_diagonal(&Vector3::new(
        sign_or_zero(u_breve[0] - p.x),
        sign_or_zero(u_breve[1] - p.y),
        sign_or_zero(u_breve[2] - p.z),
    ));
    let mut clamped = Vec::new();
    let mut root = Vector3::zeros();
    for k in 0..3 {
        let xi = if xi_breve[k] < 0.0 {
            clamped.push(k);
            0.0
        } else {
            xi_breve[k]
        };
        root[k] = xi.sqrt();
    }
    FinalEstimate {
        xi_breve: *xi_breve,
        pi,
        q_hat: pi * root + p,
        clamped_components: clamped,
    }
}

/// Full solver output: the Stage-1 record alongside the final estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub stage1: Stage1Result,
    pub estimate: FinalEstimate,
}

/// Full pipeline: assemble, Stage 1, Stage 2, finalize.
pub fn solve(
    measurements: &Measurements,
    scenario: &Scenario,
    model: &NoiseModel,
    config: &EstimatorConfig,
) -> Result<Solution> {
    let system = assemble(measurements, scenario, model)?;
    let s1 = stage1(&system, scenario, config)?;
    let (xi, _) = stage2(&s1, &system, &scenario.bs_position)?;
    let estimate = finalize(&xi, &s1.u_breve, &scenario.bs_position);
    Ok(Solution {
        stage1: s1,
        estimate,
    })
}

/// Like [`solve`], returning only the final estimate.
pub fn estimate(
    measurements: &Measurements,
    scenario: &Scenario,
    model: &NoiseModel,
    config: &EstimatorConfig,
) -> Result<FinalEstimate> {
    Ok(solve(measurements, scenario, model, config)?.estimate)
}
