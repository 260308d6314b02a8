use crate::estimator::Stage1Result;

/// Errors shared across the solver and experiment modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The mobile user sits on the vertical line through an anchor (or on an
    /// anchor itself), so the arrival angles are undefined.
    #[error("degenerate geometry at anchor {anchor}: {detail}")]
    DegenerateGeometry { anchor: usize, detail: String },

    /// A scenario or noise model violated a structural requirement.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Normal equations could not be factorized; the condition estimate is
    /// from an SVD of the (near-)singular matrix.
    #[error("singular normal equations (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },

    /// Stage 1 exhausted its iteration budget before the update norm fell
    /// under the tolerance. The last iterate is still usable as a degraded
    /// estimate and is carried here so callers can report it.
    #[error("stage 1 did not converge in {iterations} iterations (last update norm {last_delta:.3e})")]
    Stage1NonConvergence {
        iterations: usize,
        last_delta: f64,
        last: Box<Stage1Result>,
    },

    /// A Stage-2 scaling entry |u_k - p_k| fell under the degeneracy
    /// threshold, so the squared-offset system cannot be scaled on that axis.
    #[error("degenerate axis {axis}: |u - p| = {magnitude:.3e} below threshold {threshold:.3e}")]
    DegenerateAxis {
        axis: usize,
        magnitude: f64,
        threshold: f64,
    },

    /// Every trial of a Monte Carlo point failed; no statistic can be formed.
    #[error("all {trials} trials failed at sweep point {point}")]
    AllTrialsFailed { point: usize, trials: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
