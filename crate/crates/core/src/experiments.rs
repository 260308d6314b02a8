//! Monte Carlo experiment harness.
//!
//! Runs repeated noisy-measurement trials over a grid of noise levels (or an
//! SNR scale, or anchor-subset sizes) and summarizes accuracy per point. All
//! randomness derives from one base seed through a counter-based mix, so a
//! sweep is reproducible bit for bit regardless of thread count: every trial
//! draws from its own seeded stream, results are collected in trial order,
//! and reductions run serially over that ordered buffer.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::geometry_estimate;
use crate::bias;
use crate::estimator::{assemble, finalize, stage1, stage2, EstimatorConfig};
use crate::geometry::{true_parameters, Scenario};
use crate::measurement::{synthesize, NoiseModel, NoiseSpec, SigmaSpec};
use crate::{Error, Result};

/// Position algorithms the harness can run on a shared realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Two-stage weighted-least-squares solver.
    Tswls,
    /// Angle-only unweighted least squares reference (config token
    /// `"geometry"`, after the geometric relationship it inverts).
    Geometry,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Tswls => write!(f, "tswls"),
            Algorithm::Geometry => write!(f, "geometry"),
        }
    }
}

/// Swept quantity of a sweep configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Angle-error standard deviation, radians.
    SigmaA,
    /// Range-error standard deviation, meters.
    SigmaT,
    /// SNR in dB; both sigma families scale by `10^(-snr/20)` relative to
    /// the configured reference sigmas.
    SnrDb,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepAxis::SigmaA => write!(f, "sigma_a"),
            SweepAxis::SigmaT => write!(f, "sigma_t"),
            SweepAxis::SnrDb => write!(f, "snr_db"),
        }
    }
}

/// Scenario embedded in a config, either inline or as a file reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Inline(Scenario),
    Path(String),
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Tswls]
}

/// On-disk sweep description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Config format version; this crate reads version 1.
    pub schema_version: u32,
    pub scenario: ScenarioRef,
    pub axis: SweepAxis,
    pub axis_values: Vec<f64>,
    /// Fixed angle sigma(s); the reference level for the SNR axis. Ignored
    /// when `axis` sweeps it.
    #[serde(default)]
    pub sigma_a: Option<SigmaSpec>,
    /// Fixed range sigma(s); the reference level for the SNR axis. Ignored
    /// when `axis` sweeps it.
    #[serde(default)]
    pub sigma_t: Option<SigmaSpec>,
    /// Anchor counts to evaluate, each using the first `k` anchors of the
    /// scenario. Defaults to the full set.
    #[serde(default)]
    pub ris_subsets: Option<Vec<usize>>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Attach the predicted bias to every solver row.
    #[serde(default)]
    pub bias_validation: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::InvalidInput(format!(
                "unsupported schema_version {} (expected 1)",
                self.schema_version
            )));
        }
        if self.axis_values.is_empty() {
            return Err(Error::InvalidInput("axis_values must not be empty".into()));
        }
        if !self.axis_values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("axis_values must be finite".into()));
        }
        if matches!(self.axis, SweepAxis::SigmaA | SweepAxis::SigmaT)
            && self.axis_values.iter().any(|v| *v <= 0.0)
        {
            return Err(Error::InvalidInput(
                "swept sigma values must be positive".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidInput(
                "algorithms must name at least one algorithm".into(),
            ));
        }
        let need = |field: &Option<SigmaSpec>, name: &str| {
            field.is_some().then_some(()).ok_or_else(|| {
                Error::InvalidInput(format!("{name} is required for this axis"))
            })
        };
        match self.axis {
            SweepAxis::SigmaA => need(&self.sigma_t, "sigma_t")?,
            SweepAxis::SigmaT => need(&self.sigma_a, "sigma_a")?,
            SweepAxis::SnrDb => {
                need(&self.sigma_a, "sigma_a")?;
                need(&self.sigma_t, "sigma_t")?;
            }
        }
        if let Some(subsets) = &self.ris_subsets {
            if subsets.is_empty() {
                return Err(Error::InvalidInput("ris_subsets must not be empty".into()));
            }
        }
        Ok(())
    }

    /// Returns the inline scenario, or loads the referenced JSON file
    /// (relative paths resolve against `base_dir`).
    pub fn resolved_scenario(&self, base_dir: &Path) -> Result<Scenario> {
        let scenario = match &self.scenario {
            ScenarioRef::Inline(s) => s.clone(),
            ScenarioRef::Path(p) => {
                let path = if Path::new(p).is_absolute() {
                    PathBuf::from(p)
                } else {
                    base_dir.join(p)
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
            }
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Noise model at one axis value for an `m`-anchor scenario.
    pub fn model_at(&self, axis_value: f64, m: usize) -> Result<NoiseModel> {
        let resolve = |field: &Option<SigmaSpec>, name: &str| -> Result<Vec<f64>> {
            field
                .as_ref()
                .ok_or_else(|| Error::InvalidInput(format!("{name} is required for this axis")))?
                .resolve(m, name)
        };
        let model = match self.axis {
            SweepAxis::SigmaA => NoiseModel {
                sigma_n: vec![axis_value; m],
                sigma_omega: vec![axis_value; m],
                sigma_nu: resolve(&self.sigma_t, "sigma_t")?,
            },
            SweepAxis::SigmaT => {
                let sigma_a = resolve(&self.sigma_a, "sigma_a")?;
                NoiseModel {
                    sigma_n: sigma_a.clone(),
                    sigma_omega: sigma_a,
                    sigma_nu: vec![axis_value; m],
                }
            }
            SweepAxis::SnrDb => {
                let spec = NoiseSpec {
                    sigma_a: self.sigma_a.clone().expect("validated above"),
                    sigma_t: self.sigma_t.clone().expect("validated above"),
                };
                spec.into_model(m)?.scaled(snr_scale(snr_db_checked(axis_value)?))
            }
        };
        model.validate()?;
        Ok(model)
    }
}

fn snr_db_checked(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidInput("SNR values must be finite".into()))
    }
}

/// Sigma scale factor at a given SNR: unity at 0 dB, a tenth per +20 dB.
pub fn snr_scale(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

/// Maps an SNR point to concrete scalar sigmas from the 0 dB references.
pub fn snr_to_sigmas(snr_db: f64, sigma_a_ref: f64, sigma_t_ref: f64) -> (f64, f64) {
    let f = snr_scale(snr_db);
    (sigma_a_ref * f, sigma_t_ref * f)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one trial of one sweep point. Counter-based mixing keeps
/// neighboring points and trials statistically unrelated while staying a
/// pure function of `(base_seed, point_index, trial_index)`.
pub fn trial_seed(base_seed: u64, point_index: u64, trial_index: u64) -> u64 {
    splitmix64(splitmix64(base_seed ^ splitmix64(point_index)) ^ trial_index)
}

/// Sums with pairwise splitting: error grows like `O(log n)` rather than
/// `O(n)`, which keeps million-trial accumulations trustworthy.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (lo, hi) = xs.split_at(xs.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// Sample mean and the standard error of that mean.
fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let centered: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&centered) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One algorithm's outcome on one realization.
#[derive(Debug, Clone)]
enum TrialOutcome {
    /// Converged estimate, reported as the position error vector.
    Converged {
        err: Vector3<f64>,
        clamped: bool,
        iterations: usize,
    },
    /// Iteration budget exhausted; the last iterate still produced an
    /// estimate. Excluded from the converged statistics, kept in the
    /// all-trials error.
    Degraded { err: Vector3<f64> },
    /// No estimate at all.
    Failed,
}

/// Per-point, per-algorithm summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub algorithm: Algorithm,
    /// Trials attempted (including failures).
    pub trials: usize,
    /// Mean squared position error over converged trials, m^2.
    pub mse: f64,
    /// Standard error of `mse`.
    pub mse_se: f64,
    /// Mean squared error including degraded (non-converged) estimates.
    pub mse_all: f64,
    /// Mean position error over converged trials.
    pub bias: Vector3<f64>,
    /// Standard error of each `bias` component.
    pub bias_se: Vector3<f64>,
    /// Fraction of converged trials with at least one clamped component.
    pub clamp_rate: f64,
    /// Trials with no converged estimate.
    pub failures: usize,
    /// Mean Stage-1 solve count over converged trials (0 for the baseline).
    pub mean_iterations: f64,
}

fn solver_outcome(
    measurements: &crate::measurement::Measurements,
    scenario: &Scenario,
    model: &NoiseModel,
    config: &EstimatorConfig,
) -> TrialOutcome {
    let system = match assemble(measurements, scenario, model) {
        Ok(s) => s,
        Err(_) => return TrialOutcome::Failed,
    };
    let p = &scenario.bs_position;
    match stage1(&system, scenario, config) {
        Ok(s1) => match stage2(&s1, &system, p) {
            Ok((xi, _)) => {
                let est = finalize(&xi, &s1.u_breve, p);
                TrialOutcome::Converged {
                    err: est.q_hat - scenario.mu_position,
                    clamped: !est.clamped_components.is_empty(),
                    iterations: s1.iterations_used,
                }
            }
            Err(_) => TrialOutcome::Failed,
        },
        Err(Error::Stage1NonConvergence { last, .. }) => match stage2(&last, &system, p) {
            Ok((xi, _)) => {
                let est = finalize(&xi, &last.u_breve, p);
                TrialOutcome::Degraded {
                    err: est.q_hat - scenario.mu_position,
                }
            }
            Err(_) => TrialOutcome::Failed,
        },
        Err(_) => TrialOutcome::Failed,
    }
}

fn baseline_outcome(
    measurements: &crate::measurement::Measurements,
    scenario: &Scenario,
) -> TrialOutcome {
    match geometry_estimate(measurements, scenario) {
        Ok(q) => TrialOutcome::Converged {
            err: q - scenario.mu_position,
            clamped: false,
            iterations: 0,
        },
        Err(_) => TrialOutcome::Failed,
    }
}

fn summarize(
    algorithm: Algorithm,
    outcomes: &[TrialOutcome],
    point_index: u64,
) -> Result<PointSummary> {
    let trials = outcomes.len();
    let mut sq = Vec::with_capacity(trials);
    let mut sq_all = Vec::with_capacity(trials);
    let mut comp = [
        Vec::with_capacity(trials),
        Vec::with_capacity(trials),
        Vec::with_capacity(trials),
    ];
    let mut clamped = 0usize;
    let mut iterations = 0usize;
    let mut failures = 0usize;
    for outcome in outcomes {
        match outcome {
            TrialOutcome::Converged {
                err,
                clamped: c,
                iterations: it,
            } => {
                sq.push(err.norm_squared());
                sq_all.push(err.norm_squared());
                for k in 0..3 {
                    comp[k].push(err[k]);
                }
                clamped += usize::from(*c);
                iterations += it;
            }
            TrialOutcome::Degraded { err } => {
                sq_all.push(err.norm_squared());
                failures += 1;
            }
            TrialOutcome::Failed => failures += 1,
        }
    }
    if sq.is_empty() {
        return Err(Error::AllTrialsFailed {
            point: point_index as usize,
            trials,
        });
    }
    let (mse, mse_se) = mean_and_se(&sq);
    let (mse_all, _) = mean_and_se(&sq_all);
    let mut bias = Vector3::zeros();
    let mut bias_se = Vector3::zeros();
    for k in 0..3 {
        let (b, se) = mean_and_se(&comp[k]);
        bias[k] = b;
        bias_se[k] = se;
    }
    let converged = sq.len() as f64;
    Ok(PointSummary {
        algorithm,
        trials,
        mse,
        mse_se,
        mse_all,
        bias,
        bias_se,
        clamp_rate: clamped as f64 / converged,
        failures,
        mean_iterations: iterations as f64 / converged,
    })
}

/// Runs `trials` realizations of one sweep point and summarizes each
/// requested algorithm. All algorithms see the same realization in each
/// trial, so cross-algorithm comparisons are paired.
pub fn run_point(
    scenario: &Scenario,
    model: &NoiseModel,
    algorithms: &[Algorithm],
    trials: usize,
    base_seed: u64,
    point_index: u64,
    config: &EstimatorConfig,
) -> Result<Vec<PointSummary>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    if algorithms.is_empty() {
        return Err(Error::InvalidInput(
            "at least one algorithm is required".into(),
        ));
    }
    let truth = true_parameters(scenario)?;

    let run_trial = |t: usize| -> Vec<TrialOutcome> {
        let meas = synthesize(&truth, model, trial_seed(base_seed, point_index, t as u64));
        algorithms
            .iter()
            .map(|alg| match alg {
                Algorithm::Tswls => solver_outcome(&meas, scenario, model, config),
                Algorithm::Geometry => baseline_outcome(&meas, scenario),
            })
            .collect()
    };

    // Trials are embarrassingly parallel; outcomes are collected in trial
    // order and reduced serially, so the thread count never changes results.
    #[cfg(feature = "parallel")]
    let records: Vec<Vec<TrialOutcome>> = (0..trials).into_par_iter().map(run_trial).collect();
    #[cfg(not(feature = "parallel"))]
    let records: Vec<Vec<TrialOutcome>> = (0..trials).map(run_trial).collect();

    algorithms
        .iter()
        .enumerate()
        .map(|(ai, alg)| {
            let outcomes: Vec<TrialOutcome> =
                records.iter().map(|r| r[ai].clone()).collect();
            summarize(*alg, &outcomes, point_index)
        })
        .collect()
}

/// One output row of a sweep: a point summary plus its grid coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Swept quantity, e.g. `sigma_a`.
    pub axis_name: String,
    pub axis_value: f64,
    /// Anchors used at this point.
    pub n_ris: usize,
    /// Predicted solver bias at this point (solver rows only, and only when
    /// the config asks for bias validation).
    pub theo_bias: Option<Vector3<f64>>,
    pub summary: PointSummary,
}

/// Executes a sweep configuration against a resolved scenario.
///
/// Points are enumerated axis-major (`point_index = axis * n_subsets +
/// subset`), which fixes every trial's seed independent of scheduling.
pub fn run_sweep(
    config: &SweepConfig,
    scenario: &Scenario,
    estimator: &EstimatorConfig,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    scenario.validate()?;
    let m_full = scenario.n_ris();
    let subsets = config
        .ris_subsets
        .clone()
        .unwrap_or_else(|| vec![m_full]);
    for &k in &subsets {
        if k < 2 || k > m_full {
            return Err(Error::InvalidInput(format!(
                "ris_subsets entry {k} is outside 2..={m_full}"
            )));
        }
    }

    let mut rows = Vec::new();
    for (ai, &value) in config.axis_values.iter().enumerate() {
        for (si, &k) in subsets.iter().enumerate() {
            let sub = scenario.with_first_ris(k)?;
            let model = config.model_at(value, k)?;
            let point_index = (ai * subsets.len() + si) as u64;
            let theo = if config.bias_validation {
                Some(bias::predict(&sub, &model)?.bias_q)
            } else {
                None
            };
            let summaries = run_point(
                &sub,
                &model,
                &config.algorithms,
                config.trials,
                config.seed,
                point_index,
                estimator,
            )?;
            for summary in summaries {
                let is_solver = summary.algorithm == Algorithm::Tswls;
                rows.push(SweepRow {
                    axis_name: config.axis.to_string(),
                    axis_value: value,
                    n_ris: k,
                    theo_bias: if is_solver { theo } else { None },
                    summary,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn demo_scenario() -> Scenario {
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

    #[test]
    fn trial_seed_is_deterministic_and_spread() {
        assert_eq!(trial_seed(7, 3, 11), trial_seed(7, 3, 11));
        // Neighboring indices give unrelated seeds.
        let s: Vec<u64> = (0..100).map(|t| trial_seed(7, 3, t)).collect();
        let mut dedup = s.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 100);
        assert_ne!(trial_seed(7, 3, 0), trial_seed(7, 4, 0));
        assert_ne!(trial_seed(7, 3, 0), trial_seed(8, 3, 0));
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        let ints: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&ints), 500_500.0);
        let xs: Vec<f64> = (0..5000).map(|i| ((i * 37 % 1001) as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9 * naive.abs().max(1.0));
    }

    #[test]
    fn mean_and_se_known_values() {
        let (m, se) = mean_and_se(&[5.0; 64]);
        assert_eq!(m, 5.0);
        assert_eq!(se, 0.0);
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        // Sample variance 5/3, so the SE of the mean is sqrt(5/12).
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn snr_mapping() {
        let (a, t) = snr_to_sigmas(0.0, 1e-2, 1e-1);
        assert_eq!((a, t), (1e-2, 1e-1));
        let (a, t) = snr_to_sigmas(20.0, 1e-2, 1e-1);
        assert!((a - 1e-3).abs() < 1e-18);
        assert!((t - 1e-2).abs() < 1e-17);
        // Higher SNR always means smaller sigmas.
        let mut last = f64::INFINITY;
        for snr in [-30.0, -20.0, -10.0, 0.0, 10.0] {
            let s = snr_scale(snr);
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn run_point_is_reproducible() {
        let sc = demo_scenario();
        let model = NoiseModel::uniform(1e-3, 1e-3, 3).unwrap();
        let config = EstimatorConfig::default();
        let a = run_point(&sc, &model, &[Algorithm::Tswls], 64, 42, 0, &config).unwrap();
        let b = run_point(&sc, &model, &[Algorithm::Tswls], 64, 42, 0, &config).unwrap();
        assert_eq!(a[0].mse.to_bits(), b[0].mse.to_bits());
        assert_eq!(a[0].bias, b[0].bias);
        let c = run_point(&sc, &model, &[Algorithm::Tswls], 64, 43, 0, &config).unwrap();
        assert_ne!(a[0].mse.to_bits(), c[0].mse.to_bits());
    }

    #[test]
    fn run_point_zero_noise_is_exact() {
        let sc = demo_scenario();
        let model = NoiseModel::uniform(0.0, 0.0, 3).unwrap();
        let out = run_point(
            &sc,
            &model,
            &[Algorithm::Tswls, Algorithm::Geometry],
            8,
            1,
            0,
            &EstimatorConfig::default(),
        )
        .unwrap();
        for s in &out {
            assert_eq!(s.failures, 0);
            assert!(s.mse < 1e-18, "{:?} mse {}", s.algorithm, s.mse);
        }
        assert_eq!(out[0].algorithm, Algorithm::Tswls);
        assert_eq!(out[1].algorithm, Algorithm::Geometry);
    }

    #[test]
    fn run_point_moderate_noise_sanity() {
        let sc = demo_scenario();
        let model = NoiseModel::uniform(1e-3, 1e-3, 3).unwrap();
        let out = run_point(
            &sc,
            &model,
            &[Algorithm::Tswls],
            300,
            7,
            0,
            &EstimatorConfig::default(),
        )
        .unwrap();
        let s = &out[0];
        assert_eq!(s.trials, 300);
        assert_eq!(s.failures, 0);
        assert!(s.mse > 0.0 && s.mse < 1e-2, "mse {}", s.mse);
        assert!(s.mse_all >= s.mse * 0.99);
        assert!(s.mean_iterations >= 2.0);
        assert_eq!(s.clamp_rate, 0.0);
    }

    #[test]
    fn sweep_config_parses_and_validates() {
        let text = r#"{
            "schema_version": 1,
            "scenario": {
                "bs": [10.0, 12.0, 12.0],
                "ris": [[2.0, 20.0, 2.0], [-12.0, -16.0, 58.0]],
                "mu": [0.0, 0.0, 40.0]
            },
            "axis": "sigma_a",
            "axis_values": [1e-2, 1e-3],
            "sigma_t": 1e-3,
            "ris_subsets": [2],
            "trials": 16,
            "seed": 9,
            "algorithms": ["tswls", "geometry"]
        }"#;
        let config: SweepConfig = serde_json::from_str(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.axis, SweepAxis::SigmaA);
        assert!(!config.bias_validation);
        let sc = config
            .resolved_scenario(Path::new("."))
            .unwrap();
        assert_eq!(sc.n_ris(), 2);

        // Missing fixed sigma for the swept axis.
        let mut broken = config.clone();
        broken.sigma_t = None;
        assert!(broken.validate().is_err());
        // Unknown schema version.
        let mut broken = config.clone();
        broken.schema_version = 2;
        assert!(broken.validate().is_err());
    }

    #[test]
    fn sweep_config_scenario_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        std::fs::write(
            &path,
            r#"{"bs": [10, 12, 12],
                "ris": [[2, 20, 2], [-12, -16, 58], [-10, -10, 50]],
                "mu": [0, 0, 40]}"#,
        )
        .unwrap();
        let config = SweepConfig {
            schema_version: 1,
            scenario: ScenarioRef::Path("scene.json".into()),
            axis: SweepAxis::SigmaT,
            axis_values: vec![1e-2],
            sigma_a: Some(SigmaSpec::Scalar(1e-3)),
            sigma_t: None,
            ris_subsets: None,
            trials: 4,
            seed: 1,
            algorithms: default_algorithms(),
            bias_validation: false,
        };
        let sc = config.resolved_scenario(dir.path()).unwrap();
        assert_eq!(sc.n_ris(), 3);
        assert!(config
            .resolved_scenario(Path::new("/nonexistent"))
            .is_err());
    }

    #[test]
    fn run_sweep_grid_and_bias_attachment() {
        let config = SweepConfig {
            schema_version: 1,
            scenario: ScenarioRef::Inline(demo_scenario()),
            axis: SweepAxis::SigmaA,
            axis_values: vec![1e-2, 1e-3],
            sigma_a: None,
            sigma_t: Some(SigmaSpec::Scalar(1e-3)),
            ris_subsets: Some(vec![2, 3]),
            trials: 32,
            seed: 5,
            algorithms: vec![Algorithm::Tswls, Algorithm::Geometry],
            bias_validation: true,
        };
        let rows = run_sweep(&config, &demo_scenario(), &EstimatorConfig::default()).unwrap();
        // 2 axis values x 2 subsets x 2 algorithms.
        assert_eq!(rows.len(), 8);
        for row in &rows {
            assert_eq!(row.axis_name, "sigma_a");
            assert!(row.summary.mse >= 0.0);
            match row.summary.algorithm {
                Algorithm::Tswls => assert!(row.theo_bias.is_some()),
                Algorithm::Geometry => assert!(row.theo_bias.is_none()),
            }
        }
        assert_eq!(
            rows.iter().filter(|r| r.n_ris == 2).count(),
            4
        );
    }

    #[test]
    fn snr_axis_builds_scaled_models() {
        let config = SweepConfig {
            schema_version: 1,
            scenario: ScenarioRef::Inline(demo_scenario()),
            axis: SweepAxis::SnrDb,
            axis_values: vec![0.0, 20.0],
            sigma_a: Some(SigmaSpec::Scalar(1e-2)),
            sigma_t: Some(SigmaSpec::Scalar(1e-1)),
            ris_subsets: None,
            trials: 4,
            seed: 2,
            algorithms: default_algorithms(),
            bias_validation: false,
        };
        let m0 = config.model_at(0.0, 3).unwrap();
        assert_eq!(m0.sigma_n, vec![1e-2; 3]);
        let m20 = config.model_at(20.0, 3).unwrap();
        assert!((m20.sigma_n[0] - 1e-3).abs() < 1e-18);
        assert!((m20.sigma_nu[0] - 1e-2).abs() < 1e-17);
    }
}
