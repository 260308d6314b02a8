//! Browser bindings for the localization library. Three operations back a
//! static demo page: draw one noisy measurement set and solve it, trace mean
//! squared error against the angle-noise level by in-browser Monte Carlo,
//! and evaluate the closed-form bias and covariance predictions. Inputs and
//! outputs are JSON strings so the page stays plain JavaScript.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tswls::bias;
use tswls::estimator::{solve, EstimatorConfig};
use tswls::experiments::{run_point, Algorithm};
use tswls::geometry::{true_parameters, Scenario};
use tswls::measurement::{synthesize, Measurements, NoiseSpec};

fn parse<T: serde::de::DeserializeOwned>(json: &str, what: &str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("invalid {what}: {e}"))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("output structs serialize")
}

#[derive(Serialize)]
struct EstimateOutput {
    /// Recovered position, meters.
    q_hat: [f64; 3],
    /// Stage-1 estimate of position and direct range.
    u_breve: [f64; 4],
    /// Squared coordinate offsets from the base station, pre-clamp.
    xi_breve: [f64; 3],
    /// Diagonal of the sign matrix applied to the square roots.
    pi: [f64; 3],
    /// True where a negative squared offset was clamped to zero.
    clamped: [bool; 3],
    /// Weighted solves performed in Stage 1.
    iterations: usize,
    /// Distance from the configured position, meters.
    error_m: f64,
    /// The drawn measurement set behind this estimate.
    measurements: Measurements,
}

fn estimate_inner(scenario_json: &str, noise_json: &str, seed: u64) -> Result<String, String> {
    let scenario: Scenario = parse(scenario_json, "scenario")?;
    let spec: NoiseSpec = parse(noise_json, "noise")?;
    scenario.validate().map_err(|e| e.to_string())?;
    let model = spec.into_model(scenario.n_ris()).map_err(|e| e.to_string())?;
    let truth = true_parameters(&scenario).map_err(|e| e.to_string())?;
    let measurements = synthesize(&truth, &model, seed);
    let solution = solve(&measurements, &scenario, &model, &EstimatorConfig::default())
        .map_err(|e| e.to_string())?;

    let est = &solution.estimate;
    let mut clamped = [false; 3];
    for &k in &est.clamped_components {
        clamped[k] = true;
    }
    Ok(to_json(&EstimateOutput {
        q_hat: est.q_hat.into(),
        u_breve: solution.stage1.u_breve.into(),
        xi_breve: est.xi_breve.into(),
        pi: [est.pi[(0, 0)], est.pi[(1, 1)], est.pi[(2, 2)]],
        clamped,
        iterations: solution.stage1.iterations_used,
        error_m: (est.q_hat - scenario.mu_position).norm(),
        measurements,
    }))
}

/// Draws one noisy measurement set (`seed` fixes the draw) and returns the
/// full solution as JSON.
#[wasm_bindgen]
pub fn estimate_once(scenario_json: &str, noise_json: &str, seed: u64) -> Result<String, JsValue> {
    estimate_inner(scenario_json, noise_json, seed).map_err(|e| JsValue::from_str(&e))
}

#[derive(Serialize)]
struct CurveSeries {
    n_ris: usize,
    /// Mean squared position error at each swept angle sigma, m^2.
    mse: Vec<f64>,
    mse_se: Vec<f64>,
    failures: Vec<usize>,
}

#[derive(Serialize)]
struct CurveOutput {
    sigma_a: Vec<f64>,
    series: Vec<CurveSeries>,
}

fn mse_curve_inner(
    scenario_json: &str,
    sigma_a_json: &str,
    sigma_t: f64,
    trials: u32,
    seed: u64,
) -> Result<String, String> {
    let scenario: Scenario = parse(scenario_json, "scenario")?;
    let sigma_a: Vec<f64> = parse(sigma_a_json, "sigma_a list")?;
    scenario.validate().map_err(|e| e.to_string())?;
    if sigma_a.is_empty() || sigma_a.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err("sigma_a list must hold positive finite values".into());
    }

    let config = EstimatorConfig::default();
    let mut series: Vec<CurveSeries> = (2..=scenario.n_ris())
        .map(|k| CurveSeries {
            n_ris: k,
            mse: Vec::new(),
            mse_se: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for (ai, &sa) in sigma_a.iter().enumerate() {
        for s in series.iter_mut() {
            let sub = scenario.with_first_ris(s.n_ris).map_err(|e| e.to_string())?;
            let model = tswls::measurement::NoiseModel::uniform(sa, sigma_t, s.n_ris)
                .map_err(|e| e.to_string())?;
            let point_index = (ai * scenario.n_ris() + s.n_ris) as u64;
            let summary = run_point(
                &sub,
                &model,
                &[Algorithm::Tswls],
                trials as usize,
                seed,
                point_index,
                &config,
            )
            .map_err(|e| e.to_string())?
            .remove(0);
            s.mse.push(summary.mse);
            s.mse_se.push(summary.mse_se);
            s.failures.push(summary.failures);
        }
    }
    Ok(to_json(&CurveOutput { sigma_a, series }))
}

/// Monte Carlo mean squared error against the angle-noise level, one series
/// per anchor-subset size (first 2, 3, ... anchors), at a fixed range sigma.
#[wasm_bindgen]
pub fn mse_curve(
    scenario_json: &str,
    sigma_a_json: &str,
    sigma_t: f64,
    trials: u32,
    seed: u64,
) -> Result<String, JsValue> {
    mse_curve_inner(scenario_json, sigma_a_json, sigma_t, trials, seed)
        .map_err(|e| JsValue::from_str(&e))
}

#[derive(Serialize)]
struct BiasOutput {
    /// Predicted mean error of the Stage-1 estimate `[x, y, z, R]`.
    bias_u: [f64; 4],
    /// Predicted mean error of the squared offsets.
    bias_xi: [f64; 3],
    /// Predicted mean error of the final position, meters.
    bias_q: [f64; 3],
    /// Predicted per-axis standard deviation of the final position, meters.
    std_q: [f64; 3],
    /// Predicted mean squared error (covariance trace), m^2.
    trace_omega_q: f64,
}

fn predict_bias_inner(scenario_json: &str, noise_json: &str) -> Result<String, String> {
    let scenario: Scenario = parse(scenario_json, "scenario")?;
    let spec: NoiseSpec = parse(noise_json, "noise")?;
    scenario.validate().map_err(|e| e.to_string())?;
    let model = spec.into_model(scenario.n_ris()).map_err(|e| e.to_string())?;
    let report = bias::predict(&scenario, &model).map_err(|e| e.to_string())?;
    Ok(to_json(&BiasOutput {
        bias_u: report.bias_u.into(),
        bias_xi: report.bias_xi.into(),
        bias_q: report.bias_q.into(),
        std_q: [
            report.omega_q[(0, 0)].sqrt(),
            report.omega_q[(1, 1)].sqrt(),
            report.omega_q[(2, 2)].sqrt(),
        ],
        trace_omega_q: report.omega_q.trace(),
    }))
}

/// Closed-form second-order bias and covariance of the final position for a
/// scenario and noise level, without any simulation.
#[wasm_bindgen]
pub fn predict_bias(scenario_json: &str, noise_json: &str) -> Result<String, JsValue> {
    predict_bias_inner(scenario_json, noise_json).map_err(|e| JsValue::from_str(&e))
}
