//! Shared machinery for the integration suites: the reference geometry, a
//! rejection-sampled generator of well-conditioned random scenes, brute-force
//! and nonlinear-least-squares oracles, and a Monte Carlo error harness.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tswls::estimator::{
    assemble, finalize, scaling_matrix, stage1, stage2, stage2_design, weight_matrix, wls_solve,
    EstimatorConfig,
};
use tswls::experiments::{pairwise_sum, trial_seed};
use tswls::geometry::{true_parameters, Scenario, TrueParams};
use tswls::measurement::{synthesize, Measurements, NoiseModel};

/// Three-anchor reference geometry used across the suites.
pub fn demo_scenario() -> Scenario {
    Scenario::new(
        Vector3::new(10.0, 12.0, 12.0),
        vec![
            Vector3::new(2.0, 20.0, 2.0),
            Vector3::new(-12.0, -16.0, 58.0),
            Vector3::new(-10.0, -10.0, 50.0),
        ],
        Vector3::new(0.0, 0.0, 40.0),
    )
    .unwrap()
}

/// Largest range in the scene; used to express tolerances in meters.
pub fn scene_scale(truth: &TrueParams) -> f64 {
    truth.r_ru.iter().copied().fold(truth.r_bu, f64::max)
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    sv.max() / sv.min()
}

/// Position-error scale (meters) of the exact-weight solution at the given
/// noise (trace of the position block of the Stage-1 covariance), plus the
/// worst condition number among the normal matrices every internal solve
/// factors: unweighted and weighted first-stage, and the squared-offset
/// stage evaluated at the true offsets.
pub fn instance_conditioning(
    sc: &Scenario,
    truth: &TrueParams,
    model: &NoiseModel,
) -> Option<(f64, f64)> {
    let exact = Measurements::noiseless(truth);
    let sys = assemble(&exact, sc, model).ok()?;
    let b_r = scaling_matrix(&truth.r_ru, &truth.elevations);
    let w_r = weight_matrix(&b_r, &sys.q_r).ok()?;
    let p_eye = sys.g_hat.transpose() * &sys.g_hat;
    let p_r = sys.g_hat.transpose() * &w_r * &sys.g_hat;
    let omega = p_r.clone().try_inverse()?;
    let dilution = (omega[(0, 0)] + omega[(1, 1)] + omega[(2, 2)]).sqrt();

    let db = sc.mu_position - sc.bs_position;
    let d4 = [db.x, db.y, db.z, truth.r_bu];
    let b1_inv = DMatrix::from_diagonal(&DVector::from_iterator(
        4,
        d4.iter().map(|v| 1.0 / (2.0 * v)),
    ));
    let w1 = &b1_inv * &p_r * &b1_inv;
    let g1 = stage2_design();
    let p1 = g1.transpose() * w1 * g1;

    let kappa = condition_number(&p_eye)
        .max(condition_number(&p_r))
        .max(condition_number(&p1));
    Some((dilution, kappa))
}

/// Random general-position scenario. Rejection-sampled so every derived
/// parameter exists, anchor ranges stay bounded away from zero, no axis is
/// tied, elevations stay away from vertical, and the geometry is well
/// conditioned: sub-meter position dilution at 1e-3 noise, and normal-matrix
/// condition numbers low enough (1e5) that direct solvers agree to well under
/// the comparison tolerances.
pub fn random_scenario(rng: &mut ChaCha8Rng, m: usize) -> Scenario {
    let gate_model = |m: usize| NoiseModel::uniform(1e-3, 1e-3, m).unwrap();
    loop {
        let mut draw = |lo: f64, hi: f64| -> Vector3<f64> {
            Vector3::new(
                rng.random_range(-40.0..40.0),
                rng.random_range(-40.0..40.0),
                rng.random_range(lo..hi),
            )
        };
        let bs = draw(0.0, 30.0);
        let mu = draw(20.0, 60.0);
        let ris: Vec<_> = (0..m).map(|_| draw(0.0, 60.0)).collect();
        let Ok(sc) = Scenario::new(bs, ris, mu) else {
            continue;
        };
        let Ok(tp) = true_parameters(&sc) else {
            continue;
        };
        let d = sc.mu_position - sc.bs_position;
        if d.x.abs() < 2.0 || d.y.abs() < 2.0 || d.z.abs() < 2.0 || d.norm() < 10.0 {
            continue;
        }
        if tp.r_ru.iter().any(|r| *r < 8.0) {
            continue;
        }
        if tp.elevations.iter().any(|e| e.abs() > 1.3) {
            continue;
        }
        match instance_conditioning(&sc, &tp, &gate_model(m)) {
            Some((dilution, kappa)) if dilution <= 1.0 && kappa <= 1e5 => return sc,
            _ => continue,
        }
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-3.0..3.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0))
}

/// Normal-equations reference: forms `G^T W G` and `G^T W h` explicitly and
/// solves by pivoted LU, a different factorization from the production path.
pub fn brute_force_wls(g: &DMatrix<f64>, h: &DVector<f64>, w: &DMatrix<f64>) -> DVector<f64> {
    let gtw = g.transpose() * w;
    let a = &gtw * g;
    let b = &gtw * h;
    a.lu().solve(&b).expect("oracle normal matrix is invertible")
}

pub fn rel_gap(got: &DVector<f64>, want: &DVector<f64>) -> f64 {
    (got - want).norm() / want.norm().max(1.0)
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    a - (a / std::f64::consts::TAU).round() * std::f64::consts::TAU
}

/// Weighted Gauss-Newton on the raw measurement residuals, position-only
/// parametrization (the direct range is implied by the position). Started at
/// the true position; this is the maximum-likelihood reference the two-stage
/// solution must track at small noise.
pub fn gauss_newton_position(
    sc: &Scenario,
    meas: &Measurements,
    model: &NoiseModel,
    start: Vector3<f64>,
) -> Vector3<f64> {
    let m = sc.n_ris();
    let p = sc.bs_position;
    let mut q = start;
    for _ in 0..100 {
        let mut jtj = nalgebra::Matrix3::<f64>::zeros();
        let mut jtr = Vector3::zeros();
        let mut add = |grad: Vector3<f64>, resid: f64, sigma: f64| {
            let w = 1.0 / (sigma * sigma);
            jtj += w * grad * grad.transpose();
            jtr += w * resid * grad;
        };
        for i in 0..m {
            let s = sc.ris_positions[i];
            let d = q - s;
            let rho2 = d.x * d.x + d.y * d.y;
            let rho = rho2.sqrt();
            let rr2 = rho2 + d.z * d.z;
            let rr = rr2.sqrt();
            let theta = f64::atan2(d.x, d.y);
            let phi = f64::atan2(d.z, rho);
            let db = q - p;
            let rb = db.norm();

            let g_theta = Vector3::new(d.y / rho2, -d.x / rho2, 0.0);
            add(g_theta, wrap_angle(theta - meas.theta_hat[i]), model.sigma_n[i]);

            let g_phi = Vector3::new(
                -d.z * d.x / (rho * rr2),
                -d.z * d.y / (rho * rr2),
                rho / rr2,
            );
            add(g_phi, wrap_angle(phi - meas.phi_hat[i]), model.sigma_omega[i]);

            let g_rb = d / rr - db / rb;
            add(g_rb, rr - rb - meas.rb_hat[i], model.sigma_nu[i]);
        }
        let step = jtj
            .try_inverse()
            .expect("oracle normal matrix is invertible")
            * jtr;
        q -= step;
        if step.norm() <= 1e-12 * (1.0 + q.norm()) {
            break;
        }
    }
    q
}

/// Worst relative disagreement between each internal weighted solve and the
/// brute-force normal-equations oracle over random well-conditioned
/// instances: the identity first pass, the final reweighted pass, and the
/// squared-offset solve.
pub fn worst_brute_force_gaps(cases: u64, seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 1e-3;
    let config = EstimatorConfig::default();
    let mut worst_first = 0.0f64;
    let mut worst_last = 0.0f64;
    let mut worst_xi = 0.0f64;
    for case in 0..cases {
        let m = if case % 2 == 0 { 2 } else { 3 };
        let sc = random_scenario(&mut rng, m);
        let model = NoiseModel::uniform(sigma, sigma, m).unwrap();
        let truth = true_parameters(&sc).unwrap();
        let meas = synthesize(&truth, &model, 1000 + case);
        let sys = assemble(&meas, &sc, &model).unwrap();

        let eye = DMatrix::identity(3 * m, 3 * m);
        let first = wls_solve(&sys.g_hat, &sys.h_hat, &eye).unwrap();
        let first_oracle = brute_force_wls(&sys.g_hat, &sys.h_hat, &eye);
        worst_first = worst_first.max(rel_gap(&first, &first_oracle));

        let s1 = stage1(&sys, &sc, &config).unwrap();
        let last_oracle = brute_force_wls(&sys.g_hat, &sys.h_hat, &s1.w_r);
        let u_dyn = DVector::from_iterator(4, s1.u_breve.iter().copied());
        worst_last = worst_last.max(rel_gap(&u_dyn, &last_oracle));

        let p = &sc.bs_position;
        let (xi, w1) = stage2(&s1, &sys, p).unwrap();

        // Rebuild the squared-offset weight from scratch.
        let d4 = s1.u_breve - Vector4::new(p.x, p.y, p.z, 0.0);
        let b1 = DMatrix::from_diagonal(&DVector::from_iterator(4, d4.iter().map(|v| 2.0 * v)));
        let b1_inv = b1.try_inverse().unwrap();
        let p_r = sys.g_hat.transpose() * &s1.w_r * &sys.g_hat;
        let w1_oracle = &b1_inv * p_r * &b1_inv;
        let w1_dyn = DMatrix::from_fn(4, 4, |i, j| w1[(i, j)]);
        let w_gap = (&w1_dyn - &w1_oracle).norm() / w1_oracle.norm();
        assert!(w_gap <= 1e-10, "case {case}: weight gap {w_gap:.3e}");

        let z = DVector::from_iterator(4, d4.iter().map(|v| v * v));
        let xi_oracle = brute_force_wls(&stage2_design(), &z, &w1_oracle);
        let xi_dyn = DVector::from_iterator(3, xi.iter().copied());
        worst_xi = worst_xi.max(rel_gap(&xi_dyn, &xi_oracle));
    }
    (worst_first, worst_last, worst_xi)
}

/// Worst Stage-1 position disagreement with the nonlinear least-squares
/// reference, as a fraction of the `10 sigma scene-scale` tolerance.
pub fn worst_nonlinear_ls_ratio(cases: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 1e-3;
    let config = EstimatorConfig::default();
    let mut worst = 0.0f64;
    for case in 0..cases {
        let m = if case % 2 == 0 { 2 } else { 3 };
        let sc = random_scenario(&mut rng, m);
        let model = NoiseModel::uniform(sigma, sigma, m).unwrap();
        let truth = true_parameters(&sc).unwrap();
        let meas = synthesize(&truth, &model, 7000 + case);

        let sys = assemble(&meas, &sc, &model).unwrap();
        let s1 = stage1(&sys, &sc, &config).unwrap();
        let q_ml = gauss_newton_position(&sc, &meas, &model, sc.mu_position);

        let gap = (s1.u_breve.xyz() - q_ml).norm();
        let tol = 10.0 * sigma * scene_scale(&truth);
        worst = worst.max(gap / tol);
    }
    worst
}

pub struct Accumulator {
    samples: Vec<Vec<f64>>,
}

impl Accumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            samples: vec![Vec::new(); dim],
        }
    }

    pub fn push(&mut self, values: &[f64]) {
        for (store, v) in self.samples.iter_mut().zip(values) {
            store.push(*v);
        }
    }

    /// Per-component mean and its standard error.
    pub fn stats(&self) -> (Vec<f64>, Vec<f64>) {
        let mut means = Vec::new();
        let mut ses = Vec::new();
        for store in &self.samples {
            let n = store.len() as f64;
            let mean = pairwise_sum(store) / n;
            let centered: Vec<f64> = store.iter().map(|v| (v - mean) * (v - mean)).collect();
            let var = pairwise_sum(&centered) / (n - 1.0);
            means.push(mean);
            ses.push((var / n).sqrt());
        }
        (means, ses)
    }
}

pub struct McRun {
    pub fixed_u: Accumulator,
    pub irls_u: Accumulator,
    pub xi: Accumulator,
    pub q: Accumulator,
    pub failures: usize,
}

/// Empirical error means through the full chain: the fixed-true-weight
/// solution (the estimator the expansion analyzes), the production iterated
/// solution, the squared offsets, and the recovered position.
pub fn mc_error_run(sc: &Scenario, model: &NoiseModel, trials: u64, base_seed: u64) -> McRun {
    let truth = true_parameters(sc).unwrap();
    let config = EstimatorConfig::default();
    let p = sc.bs_position;
    let q = sc.mu_position;
    let u_true = Vector4::new(q.x, q.y, q.z, truth.r_bu);
    let d = q - p;
    let xi_true = d.component_mul(&d);

    let exact = Measurements::noiseless(&truth);
    let exact_sys = assemble(&exact, sc, model).unwrap();
    let b_true = scaling_matrix(&truth.r_ru, &truth.elevations);
    let w_true = weight_matrix(&b_true, &exact_sys.q_r).unwrap();

    let mut run = McRun {
        fixed_u: Accumulator::new(4),
        irls_u: Accumulator::new(4),
        xi: Accumulator::new(3),
        q: Accumulator::new(3),
        failures: 0,
    };
    for t in 0..trials {
        let meas = synthesize(&truth, model, trial_seed(base_seed, 0, t));
        let outcome = (|| {
            let sys = assemble(&meas, sc, model)?;
            let u_fixed = wls_solve(&sys.g_hat, &sys.h_hat, &w_true)?;
            let s1 = stage1(&sys, sc, &config)?;
            let (xi, _) = stage2(&s1, &sys, &p)?;
            let est = finalize(&xi, &s1.u_breve, &p);
            Ok::<_, tswls::Error>((u_fixed, s1.u_breve, xi, est.q_hat))
        })();
        match outcome {
            Ok((u_fixed, u_irls, xi, q_hat)) => {
                let uf: Vec<f64> = (0..4).map(|k| u_fixed[k] - u_true[k]).collect();
                let ui: Vec<f64> = (0..4).map(|k| u_irls[k] - u_true[k]).collect();
                let xe: Vec<f64> = (0..3).map(|k| xi[k] - xi_true[k]).collect();
                let qe: Vec<f64> = (0..3).map(|k| q_hat[k] - q[k]).collect();
                run.fixed_u.push(&uf);
                run.irls_u.push(&ui);
                run.xi.push(&xe);
                run.q.push(&qe);
            }
            Err(_) => run.failures += 1,
        }
    }
    run
}
