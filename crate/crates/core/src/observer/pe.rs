use nalgebra::{DMatrix, DVector};

use super::{ObserverError, ObserverSystem};
use crate::linalg;
use crate::quadrature::{adaptive_gk15, gauss16};
use crate::report::KeyValueReport;

pub const DEFAULT_QUADRATURE_TOL: f64 = 1e-9;
const MAX_INTERVALS: usize = 4096;
/// Points per window used to bound the regressor and its derivative.
const BOUND_SAMPLES_PER_WINDOW: usize = 64;

/// `t -> (phi(t), integral over s in [0, 1] of dv/dlambda(t, lambda(t) s))`,
/// the integral by 16-point Gauss-Legendre.
pub fn extended_regressor<'a, L>(system: &'a ObserverSystem, lambda: L) -> impl Fn(f64) -> DVector<f64> + 'a
where
    L: Fn(f64) -> f64 + 'a,
{
    move |t| {
        let phi = system.phi(t);
        let m = phi.len();
        let level = lambda(t);
        let mean_slope = gauss16(|s| system.dv_dlambda(t, level * s), 0.0, 1.0);
        let mut out = DVector::zeros(m + 1);
        out.rows_mut(0, m).copy_from(&phi);
        out[m] = mean_slope;
        out
    }
}

/// Minimum over scanned window starts of the smallest eigenvalue of the
/// window Gram integral, scoped to the scanned horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PECertificate {
    pub t_window: f64,
    pub mu: f64,
    pub worst_t: f64,
    pub t_start: f64,
    pub horizon: f64,
    pub scan_step: f64,
    pub windows: usize,
    /// Bound on the regressor norm and on its derivative norm, sampled and inflated by 10%.
    pub m_phi: f64,
    /// Gram integral at `worst_t`.
    pub worst_gram: DMatrix<f64>,
    pub quadrature_tol: f64,
}

impl PECertificate {
    /// `mu` above the quadrature noise floor.
    pub fn is_pe(&self) -> bool {
        self.mu > self.noise_floor()
    }

    /// Eigenvalues within this distance of zero are indistinguishable from it.
    pub fn noise_floor(&self) -> f64 {
        10.0 * self.quadrature_tol * (1.0 + self.worst_gram.norm())
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.num("t_window", self.t_window)
            .num("t_start", self.t_start)
            .num("horizon", self.horizon)
            .num("scan_step", self.scan_step)
            .text("windows", self.windows.to_string())
            .num("mu", self.mu)
            .num("worst_t", self.worst_t)
            .num("m_phi", self.m_phi)
            .matrix("worst_gram", &self.worst_gram)
            .text("persistently_exciting", self.is_pe().to_string());
        r
    }
}

/// Scans `t` over `[t_start, t_start + horizon - t_window]` in steps of
/// `scan_step` (the end point included) and integrates the regressor's outer
/// product over `[t, t + t_window]` by adaptive Gauss-Kronrod.
pub fn pe_check<F>(
    regressor: F,
    t_window: f64,
    t_start: f64,
    horizon: f64,
    scan_step: f64,
) -> Result<PECertificate, ObserverError>
where
    F: Fn(f64) -> DVector<f64>,
{
    if !(t_window > 0.0) || !(horizon >= t_window) || !(scan_step > 0.0) {
        return Err(ObserverError::Invalid(format!(
            "need t_window > 0, horizon >= t_window and scan_step > 0 (got {t_window}, {horizon}, {scan_step})"
        )));
    }
    let d = regressor(t_start).len();
    let outer = |t: f64| {
        let phi = regressor(t);
        let m = &phi * phi.transpose();
        DVector::from_column_slice(m.as_slice())
    };
    let last = t_start + horizon - t_window;
    let count = ((last - t_start) / scan_step + 1e-9).floor() as usize + 1;
    let mut mu = f64::INFINITY;
    let mut worst_t = t_start;
    let mut worst_gram = DMatrix::zeros(d, d);
    for i in 0..count {
        let t = t_start + i as f64 * scan_step;
        let flat = adaptive_gk15(outer, t, t + t_window, DEFAULT_QUADRATURE_TOL, MAX_INTERVALS)?;
        let gram = linalg::symmetrize(&DMatrix::from_column_slice(d, d, flat.as_slice()));
        let smallest = linalg::min_symmetric_eigenvalue(&gram);
        if smallest < mu {
            mu = smallest;
            worst_t = t;
            worst_gram = gram;
        }
    }

    let samples = BOUND_SAMPLES_PER_WINDOW * ((horizon / t_window).ceil() as usize).max(1);
    let h = 1e-5 * t_window;
    let mut bound = 0.0f64;
    for i in 0..=samples {
        let t = t_start + horizon * i as f64 / samples as f64;
        let value = regressor(t);
        let slope = (regressor(t + h) - regressor(t - h)) / (2.0 * h);
        bound = bound.max(value.norm()).max(slope.norm());
    }

    Ok(PECertificate {
        t_window,
        mu,
        worst_t,
        t_start,
        horizon,
        scan_step,
        windows: count,
        m_phi: 1.1 * bound,
        worst_gram,
        quadrature_tol: DEFAULT_QUADRATURE_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use std::f64::consts::PI;

    #[test]
    fn rotating_regressor_is_uniformly_exciting() {
        let cert = pe_check(|t: f64| dvector![t.sin(), t.cos()], 2.0 * PI, 0.0, 20.0, 0.5).unwrap();
        assert!((cert.mu - PI).abs() < 1e-6);
        assert!(cert.is_pe());
        assert!((cert.worst_gram[(0, 1)]).abs() < 1e-6);
        assert!(cert.m_phi >= 1.0);
    }

    #[test]
    fn constant_regressor_is_not_exciting() {
        let cert = pe_check(|_| dvector![1.0, 0.0], 1.0, 0.0, 5.0, 0.5).unwrap();
        assert!(cert.mu.abs() < 1e-12);
        assert!(!cert.is_pe());
    }

    #[test]
    fn scalar_sine_half_period() {
        let cert = pe_check(|t: f64| dvector![t.sin()], PI, 0.0, 10.0, 0.25).unwrap();
        assert!((cert.mu - PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn regressor_examples() {
        let sys = ObserverSystem::scalar_example(0.05, 1.0, 0.0).unwrap();
        let reg = extended_regressor(&sys, |_| 0.7);
        let v = reg(1.3);
        assert!((v[1] - 1.3f64.sin()).abs() < 1e-15);

        let mut params = sys.params().clone();
        params.v = std::sync::Arc::new(|_, _| 0.0);
        params.dv_dlambda = None;
        let quiet = ObserverSystem::new(params.clone()).unwrap();
        assert_eq!(extended_regressor(&quiet, |_| 1.0)(0.4)[1], 0.0);

        params.v = std::sync::Arc::new(|_, l| l * l);
        params.dv_dlambda = Some(std::sync::Arc::new(|_, l| 2.0 * l));
        let square = ObserverSystem::new(params).unwrap();
        assert!((extended_regressor(&square, |_| 1.0)(0.0)[1] - 1.0).abs() < 1e-14);
    }
}
