//! Closed-form prediction of the solver's leading-order bias.
//!
//! At finite noise the two-stage solver is not exactly unbiased: the design
//! matrix is built from the same noisy measurements as the right-hand side,
//! the squared-range target carries a quadratic noise term, and Stage 2
//! squares a noisy iterate. Expanding both stages to second order in the
//! measurement errors yields a bias prediction (and covariance) that depends
//! only on the geometry and the noise model, never on a realized draw.
//!
//! Everything is evaluated at a caller-supplied geometry: pass the true user
//! position to predict the estimator's bias, or pass a previously estimated
//! position to get a plug-in correction term.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Matrix4x3, Vector3, Vector4};

use crate::estimator::{
    assemble, condition_estimate, scaling_matrix, stage2_design, weight_matrix,
};
use crate::geometry::{true_parameters, Scenario, TrueParams};
use crate::measurement::{covariance_blocks, Measurements, NoiseModel};
use crate::{Error, Result};

/// First-order decomposition of the stacked system at a fixed geometry: the
/// exact design matrix, its sensitivity to each error channel, and the
/// weighted normal operators built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedSystem {
    /// Design matrix at exact measurements (`3M x 4`).
    pub g_r: DMatrix<f64>,
    /// Design sensitivity to azimuth errors (`3M x 4`): azimuth rows through
    /// their own angle, elevation rows through the azimuth they embed.
    pub g_bar_n: DMatrix<f64>,
    /// Design sensitivity to elevation errors (`3M x 4`).
    pub g_bar_omega: DMatrix<f64>,
    /// Design sensitivity to range-difference errors (`3M x 4`).
    pub g_bar_nu: DMatrix<f64>,
    /// Residual scaling at the true geometry (`3M x 3M`, diagonal).
    pub b_r_true: DMatrix<f64>,
    /// Optimal weight at the true geometry (`3M x 3M`).
    pub w_r_true: DMatrix<f64>,
    /// Normal matrix `G^T W G`.
    pub p_r: Matrix4<f64>,
    /// Weighted pseudoinverse `P^-1 G^T W` mapping residuals to parameter
    /// error (`4 x 3M`).
    pub h_r: DMatrix<f64>,
    /// Inverse normal matrix: leading-order Stage-1 covariance.
    pub omega_u: Matrix4<f64>,
    /// Per-channel noise variances (azimuth, elevation, range), length `M`.
    variances: [DVector<f64>; 3],
}

impl DecomposedSystem {
    pub fn n_ris(&self) -> usize {
        self.g_r.nrows() / 3
    }

    fn g_bar(&self, channel: usize) -> &DMatrix<f64> {
        match channel {
            0 => &self.g_bar_n,
            1 => &self.g_bar_omega,
            _ => &self.g_bar_nu,
        }
    }

    /// Residual scaling of one channel, embedded at its row block
    /// (`3M x M`): the stacked residual is the sum of these blocks applied
    /// to the per-channel error vectors.
    fn b_channel(&self, channel: usize) -> DMatrix<f64> {
        let m = self.n_ris();
        let mut b = DMatrix::zeros(3 * m, m);
        for i in 0..m {
            b[(channel * m + i, i)] = self.b_r_true[(channel * m + i, channel * m + i)];
        }
        b
    }

    /// One channel's variance diagonal replicated across the three row
    /// blocks (`3M x M`), Hadamard-conformable with the `3M x M` operator
    /// products it multiplies.
    fn q_bar(&self, channel: usize) -> DMatrix<f64> {
        let m = self.n_ris();
        let mut q = DMatrix::zeros(3 * m, m);
        for block in 0..3 {
            for i in 0..m {
                q[(block * m + i, i)] = self.variances[channel][i];
            }
        }
        q
    }
}

/// Row sums of an elementwise product, `(A o B) 1`. Equals the diagonal of
/// `A B^T` without forming the full product; the bias terms below use both
/// views, so a single implementation keeps them consistent.
pub fn hadamard_diag_identity(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    assert_eq!(a.shape(), b.shape(), "Hadamard factors must match in shape");
    DVector::from_iterator(
        a.nrows(),
        a.row_iter().zip(b.row_iter()).map(|(ra, rb)| ra.dot(&rb)),
    )
}

/// Builds the decomposition at exact measurements. Requires a nonzero noise
/// model: the optimal weight does not exist at zero covariance.
pub fn decompose(
    truth: &TrueParams,
    scenario: &Scenario,
    model: &NoiseModel,
) -> Result<DecomposedSystem> {
    if model.is_null() {
        return Err(Error::InvalidInput(
            "bias prediction requires a nonzero noise model".into(),
        ));
    }
    let system = assemble(&Measurements::noiseless(truth), scenario, model)?;
    let m = scenario.n_ris();

    let mut g_bar_n = DMatrix::zeros(3 * m, 4);
    let mut g_bar_omega = DMatrix::zeros(3 * m, 4);
    let mut g_bar_nu = DMatrix::zeros(3 * m, 4);
    for i in 0..m {
        let (st, ct) = truth.azimuths[i].sin_cos();
        let (sp, cp) = truth.elevations[i].sin_cos();
        // Azimuth rows move only with the azimuth error.
        g_bar_n[(i, 0)] = st;
        g_bar_n[(i, 1)] = ct;
        // Elevation rows move with both angle channels.
        g_bar_n[(m + i, 0)] = sp * ct;
        g_bar_n[(m + i, 1)] = -sp * st;
        g_bar_omega[(m + i, 0)] = cp * st;
        g_bar_omega[(m + i, 1)] = cp * ct;
        g_bar_omega[(m + i, 2)] = sp;
        // Range rows move only through their fourth column.
        g_bar_nu[(2 * m + i, 3)] = -1.0;
    }

    let b_r_true = scaling_matrix(&truth.r_ru, &truth.elevations);
    let w_r_true = weight_matrix(&b_r_true, &system.q_r)?;
    let p_big = system.g_hat.transpose() * &w_r_true * &system.g_hat;
    let omega_big = match p_big.clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => {
            return Err(Error::SingularSystem {
                condition: condition_estimate(&p_big),
            })
        }
    };
    let h_r = &omega_big * system.g_hat.transpose() * &w_r_true;
    let (q_n, q_omega, q_nu) = covariance_blocks(model);

    Ok(DecomposedSystem {
        g_r: system.g_hat,
        g_bar_n,
        g_bar_omega,
        g_bar_nu,
        b_r_true,
        w_r_true,
        p_r: Matrix4::from_iterator(p_big.iter().copied()),
        h_r,
        omega_u: Matrix4::from_iterator(omega_big.iter().copied()),
        variances: [q_n.diagonal(), q_omega.diagonal(), q_nu.diagonal()],
    })
}

/// First-stage bias split into its constituent terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Bias {
    /// First-order term; identically zero because the errors are zero-mean.
    pub e1: Vector4<f64>,
    /// Mean of the quadratic range-residual term.
    pub e2: Vector4<f64>,
    /// Design/residual correlation term: the same error realization enters
    /// the design matrix and the residual, leaving a deterministic mean.
    pub e3: Vector4<f64>,
    /// Predicted mean error of the Stage-1 solution.
    pub bias_u: Vector4<f64>,
}

fn to_v4(v: &DVector<f64>) -> Vector4<f64> {
    Vector4::new(v[0], v[1], v[2], v[3])
}

fn dm4(a: &Matrix4<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(4, 4, a.iter().copied())
}

pub fn bias_stage1(sys: &DecomposedSystem) -> Stage1Bias {
    let m = sys.n_ris();

    // The range residual is R nu + nu^2/2 exactly, so only the quadratic
    // part survives the expectation. Angle residuals are odd in their errors
    // at this order and leave no mean.
    let mut s = DVector::zeros(3 * m);
    for i in 0..m {
        s[2 * m + i] = sys.variances[2][i];
    }
    let e2 = to_v4(&(0.5 * (&sys.h_r * s)));

    let wg = &sys.w_r_true * &sys.g_r; // 3M x 4
    let wgh = &wg * &sys.h_r; // 3M x 3M
    let mut t31 = Vector4::zeros();
    let mut t32 = Vector4::zeros();
    let mut t33 = DVector::zeros(3 * m);
    for channel in 0..3 {
        let b_c = sys.b_channel(channel);
        let q_bar = sys.q_bar(channel);
        let g_bar = sys.g_bar(channel);
        t31 += to_v4(
            &(g_bar.transpose() * hadamard_diag_identity(&(&sys.w_r_true * &b_c), &q_bar)),
        );
        t32 += to_v4(&(g_bar.transpose() * hadamard_diag_identity(&(&wgh * &b_c), &q_bar)));
        t33 += hadamard_diag_identity(&(&sys.w_r_true * g_bar * &sys.h_r * &b_c), &q_bar);
    }
    let t33 = to_v4(&(sys.g_r.transpose() * t33));
    let e3 = sys.omega_u * (t31 - t32 - t33);
    Stage1Bias {
        e1: Vector4::zeros(),
        e2,
        e3,
        bias_u: e2 + e3,
    }
}

/// Second-stage bias together with the leading-order covariance of the
/// squared-offset solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Bias {
    /// Predicted mean error of the squared-offset solve.
    pub bias_xi: Vector3<f64>,
    /// Leading-order covariance of the squared-offset solve.
    pub omega_xi: Matrix3<f64>,
    w1: Matrix4<f64>,
    p2: Matrix4<f64>,
}

pub fn bias_stage2(
    sys: &DecomposedSystem,
    stage1: &Stage1Bias,
    truth: &TrueParams,
    scenario: &Scenario,
) -> Result<Stage2Bias> {
    let q = scenario.mu_position;
    let p = scenario.bs_position;
    let d = Vector4::new(q.x - p.x, q.y - p.y, q.z - p.z, truth.r_bu);
    // Same unit-free degeneracy check as the solver's second stage: a tied
    // axis makes the squared-offset scaling singular.
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
    let b1 = Matrix4::from_diagonal(&(2.0 * d));
    let b1_inv = Matrix4::from_diagonal(&d.map(|v| 1.0 / (2.0 * v)));

    let w1 = b1_inv * sys.p_r * b1_inv;
    let g1 = Matrix4x3::from_iterator(stage2_design().iter().copied());
    let p1 = g1.transpose() * w1 * g1;
    let omega_xi = match p1.cholesky() {
        Some(chol) => chol.inverse(),
        None => {
            return Err(Error::SingularSystem {
                condition: condition_estimate(&DMatrix::from_iterator(3, 3, p1.iter().copied())),
            })
        }
    };
    let h1 = omega_xi * g1.transpose() * w1;
    let p2 = Matrix4::identity() - g1 * h1;
    let c_u = sys.omega_u.diagonal();

    // Correlation between the Stage-2 weight (rebuilt from the noisy Stage-1
    // iterate) and the Stage-1 error it weights.
    let m = sys.n_ris();
    let p3 = dm4(&(b1_inv * p2 * b1)) * &sys.h_r; // 4 x 3M
    let wg = &sys.w_r_true * &sys.g_r; // 3M x 4
    let wgp3 = &wg * &p3; // 3M x 3M
    let mut acc = Vector4::zeros();
    let mut acc_g = DVector::zeros(3 * m);
    for channel in 0..3 {
        let b_c = sys.b_channel(channel);
        let q_bar = sys.q_bar(channel);
        let g_bar = sys.g_bar(channel);
        acc += to_v4(&(g_bar.transpose() * hadamard_diag_identity(&(&wgp3 * &b_c), &q_bar)));
        acc_g += hadamard_diag_identity(&(&sys.w_r_true * g_bar * &p3 * &b_c), &q_bar);
    }
    let a1 = b1_inv * (acc + to_v4(&(sys.g_r.transpose() * acc_g)));

    // Mean of the quadratic Stage-1 error terms entering through the
    // linearized weight.
    let p4 = p2 * b1 * sys.omega_u;
    let a2 = -2.0 * w1 * (b1_inv * p4.diagonal());
    let a3 = -2.0 * (b1_inv * (w1 * p4).diagonal());

    let bias_xi =
        h1 * (b1 * stage1.bias_u + c_u) + omega_xi * g1.transpose() * (a1 + a2 + a3);
    Ok(Stage2Bias {
        bias_xi,
        omega_xi,
        w1,
        p2,
    })
}

/// Bias and covariance of the recovered position. The sign/square-root map
/// divides the squared-offset error by twice the true offsets and subtracts
/// the mean of its own quadratic term.
pub fn bias_final(
    stage2: &Stage2Bias,
    scenario: &Scenario,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let d = scenario.mu_position - scenario.bs_position;
    let threshold = 1e-9 * d.norm().max(1.0);
    for k in 0..3 {
        if d[k].abs() < threshold {
            return Err(Error::DegenerateAxis {
                axis: k,
                magnitude: d[k].abs(),
                threshold,
            });
        }
    }
    let bq_inv = Matrix3::from_diagonal(&d.map(|v| 1.0 / (2.0 * v)));
    let omega_q = bq_inv * stage2.omega_xi * bq_inv;
    let bias_q = bq_inv * (stage2.bias_xi - omega_q.diagonal());
    Ok((bias_q, omega_q))
}

/// Complete bias/covariance prediction for one geometry and noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub e1: Vector4<f64>,
    pub e2: Vector4<f64>,
    pub e3: Vector4<f64>,
    /// Predicted mean error of the Stage-1 solution `[q; R_BU]`.
    pub bias_u: Vector4<f64>,
    /// Predicted mean error of the squared coordinate offsets.
    pub bias_xi: Vector3<f64>,
    /// Predicted mean error of the recovered position.
    pub bias_q: Vector3<f64>,
    pub omega_u: Matrix4<f64>,
    pub omega_xi: Matrix3<f64>,
    pub omega_q: Matrix3<f64>,
}

impl BiasReport {
    /// Exact measurements leave no bias and no spread.
    fn null() -> Self {
        Self {
            e1: Vector4::zeros(),
            e2: Vector4::zeros(),
            e3: Vector4::zeros(),
            bias_u: Vector4::zeros(),
            bias_xi: Vector3::zeros(),
            bias_q: Vector3::zeros(),
            omega_u: Matrix4::zeros(),
            omega_xi: Matrix3::zeros(),
            omega_q: Matrix3::zeros(),
        }
    }
}

/// Predicts the solver's leading-order bias and covariance at the given
/// geometry. Uses only the noise model, never a realized measurement; an
/// all-zero model short-circuits to a zero report.
pub fn predict(scenario: &Scenario, model: &NoiseModel) -> Result<BiasReport> {
    scenario.validate()?;
    model.validate()?;
    if model.n_ris() != scenario.n_ris() {
        return Err(Error::InvalidInput(format!(
            "noise model covers {} anchors but the scenario has {}",
            model.n_ris(),
            scenario.n_ris()
        )));
    }
    let truth = true_parameters(scenario)?;
    if model.is_null() {
        return Ok(BiasReport::null());
    }
    let sys = decompose(&truth, scenario, model)?;
    let s1 = bias_stage1(&sys);
    let s2 = bias_stage2(&sys, &s1, &truth, scenario)?;
    let (bias_q, omega_q) = bias_final(&s2, scenario)?;
    Ok(BiasReport {
        e1: s1.e1,
        e2: s1.e2,
        e3: s1.e3,
        bias_u: s1.bias_u,
        bias_xi: s2.bias_xi,
        bias_q,
        omega_u: sys.omega_u,
        omega_xi: s2.omega_xi,
        omega_q,
    })
}
