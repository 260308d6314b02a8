//! Angle-only comparison algorithm: unweighted least squares on the `2M`
//! azimuth/elevation pseudolinear rows alone. No range differences, no
//! weighting, no second stage. Serves as the reference the two-stage solver
//! is measured against on identical measurement realizations.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::estimator::{azimuth_row, elevation_row, wls_solve};
use crate::geometry::Scenario;
use crate::measurement::Measurements;
use crate::{Error, Result};

/// Solves the angle-only system for the position.
pub fn geometry_estimate(measurements: &Measurements, scenario: &Scenario) -> Result<Vector3<f64>> {
    scenario.validate()?;
    let m = scenario.n_ris();
    if measurements.n_ris() != m || measurements.phi_hat.len() != m {
        return Err(Error::InvalidInput(format!(
            "measurement lengths do not match the scenario's {m} anchors"
        )));
    }

    let mut g = DMatrix::zeros(2 * m, 3);
    let mut h = DVector::zeros(2 * m);
    for i in 0..m {
        let s = &scenario.ris_positions[i];
        let az = azimuth_row(measurements.theta_hat[i]);
        let el = elevation_row(measurements.theta_hat[i], measurements.phi_hat[i]);
        for c in 0..3 {
            g[(i, c)] = az[c];
            g[(m + i, c)] = el[c];
        }
        h[i] = az.x * s.x + az.y * s.y + az.z * s.z;
        h[m + i] = el.x * s.x + el.y * s.y + el.z * s.z;
    }

    let w = DMatrix::identity(2 * m, 2 * m);
    let u = wls_solve(&g, &h, &w)?;
    Ok(Vector3::new(u[0], u[1], u[2]))
}
