use nalgebra::{DMatrix, DVector};

use super::{FirstMethodError, SpectralSplit};
use crate::linalg;
use crate::sampling;
use crate::system::AutonomousSystem;

pub const SAFETY_MARGIN: f64 = 1.1;
pub const DEFAULT_SEED: u64 = 0x5eed_c0de;

/// Sampled bounds `V' <= -alpha1 V + beta1 sqrt(V) |lambda|` and
/// `-gamma (V + lambda^2) <= lambda' <= 0` on a ball of split coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalConstants {
    pub alpha1: f64,
    pub beta1: f64,
    pub gamma: f64,
    pub radius: f64,
    pub samples: usize,
}

/// Estimates the local constants from `samples` seeded uniform points of the
/// ball of the given radius in split coordinates.
///
/// `alpha1` comes from the linear block: `lambda_min(Q) / lambda_max(H)` with
/// `Q = -(HA + A^T H)`, shrunk by the safety margin. `beta1` and `gamma` are the
/// largest sampled ratios, inflated by the margin.
pub fn estimate_local_constants(
    system: &AutonomousSystem,
    split: &SpectralSplit,
    h: &DMatrix<f64>,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<LocalConstants, FirstMethodError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(FirstMethodError::BadParameter(format!("radius must be positive, got {radius}")));
    }
    if samples == 0 {
        return Err(FirstMethodError::BadParameter("samples must be positive".into()));
    }
    let n = split.n();
    if h.nrows() != n || h.ncols() != n || system.dim() != n + 1 {
        return Err(FirstMethodError::DimensionMismatch(format!(
            "system dimension {}, split block {n}, H {}x{}",
            system.dim(),
            h.nrows(),
            h.ncols()
        )));
    }

    let q = -(h * &split.a + split.a.transpose() * h);
    let decay = linalg::min_symmetric_eigenvalue(&q) / linalg::max_symmetric_eigenvalue(h);
    if !(decay > 0.0) {
        return Err(FirstMethodError::NotSpd("-(HA + A^T H)".into()));
    }
    let alpha1 = decay / SAFETY_MARGIN;

    let mut rng = sampling::rng(seed);
    let mut beta_ratio = 0.0f64;
    let mut gamma_ratio = 0.0f64;
    for _ in 0..samples {
        let y = sampling::in_ball(&mut rng, n + 1, radius);
        let rate = &split.transform * system.eval(&(&split.inverse * &y));
        let x = y.rows(0, n).clone_owned();
        let lambda = y[n];
        let v = (x.transpose() * h * &x)[0];
        let v_dot = 2.0 * (x.transpose() * h * rate.rows(0, n))[0];
        let lambda_dot = rate[n];

        if lambda_dot > 1e-12 * (1.0 + rate.norm()) {
            return Err(FirstMethodError::RegionViolation {
                point: y.iter().copied().collect(),
                rate: lambda_dot,
            });
        }
        let denom = v + lambda * lambda;
        if denom > 0.0 {
            gamma_ratio = gamma_ratio.max(-lambda_dot / denom);
        }
        let cross = v.sqrt() * lambda.abs();
        if cross > 0.0 {
            beta_ratio = beta_ratio.max((v_dot + alpha1 * v) / cross);
        }
    }

    Ok(LocalConstants {
        alpha1,
        beta1: (SAFETY_MARGIN * beta_ratio).max(1e-6 * alpha1),
        gamma: (SAFETY_MARGIN * gamma_ratio).max(1e-9),
        radius,
        samples,
    })
}

/// Split-coordinate vector field `y -> T p(T^-1 y)`.
pub fn split_field(system: &AutonomousSystem, split: &SpectralSplit, y: &DVector<f64>) -> DVector<f64> {
    &split.transform * system.eval(&(&split.inverse * y))
}
