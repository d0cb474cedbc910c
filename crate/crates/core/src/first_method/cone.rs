use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::FirstMethodError;
use crate::sampling;

/// Cone parameters `(k, a)` maximizing the guaranteed level `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalCone {
    pub k_star: f64,
    pub a_star: f64,
}

/// Largest level `a` for which the cone with slope `k` is certified.
pub fn cone_level(k: f64, alpha1: f64, beta1: f64, gamma: f64) -> f64 {
    let inner = (k * alpha1 / 2.0 - k * k * beta1 / 2.0) / (gamma * (1.0 + k * k));
    inner * inner
}

/// Maximizes [`cone_level`] over `k` in `(0, alpha1/beta1)` by golden-section search.
pub fn optimal_cone(alpha1: f64, beta1: f64, gamma: f64) -> Result<OptimalCone, FirstMethodError> {
    for (name, v) in [("alpha1", alpha1), ("beta1", beta1), ("gamma", gamma)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(FirstMethodError::BadParameter(format!("{name} must be positive and finite, got {v}")));
        }
    }
    // Search in u = k beta1 / alpha1 so the interval is (0, 1) whatever the scale.
    let scale = alpha1 / beta1;
    let objective = |u: f64| cone_level(u * scale, alpha1, beta1, gamma);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (objective(c), objective(d));
    while hi - lo > 1e-12 * (c.abs() + 1e-300) && hi - lo > 1e-15 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = objective(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = objective(d);
        }
    }
    let u = 0.5 * (lo + hi);
    let k_star = u * scale;
    Ok(OptimalCone {
        k_star,
        a_star: cone_level(k_star, alpha1, beta1, gamma),
    })
}

/// The region `{ V(x) <= a, k sqrt(a) >= lambda >= k sqrt(V(x)) }` in split
/// coordinates, with `V(x) = x^T H x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeRegion {
    pub h: DMatrix<f64>,
    pub k: f64,
    pub a: f64,
}

impl ConeRegion {
    pub fn new(h: DMatrix<f64>, k: f64, a: f64) -> Self {
        Self { h, k, a }
    }

    pub fn lyapunov_value(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.h * x)[0]
    }

    /// Membership of a stacked point `(x, lambda)` with relative slack `tol`.
    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        let n = self.h.nrows();
        let x = z.rows(0, n).clone_owned();
        let lambda = z[n];
        let v = self.lyapunov_value(&x);
        let top = self.k * self.a.sqrt();
        let slack = tol * top.max(z.norm());
        v <= self.a * (1.0 + tol) && lambda <= top + slack && lambda >= self.k * v.sqrt() - slack
    }

    /// Largest Euclidean norm of a point of the region.
    pub fn outer_radius(&self) -> f64 {
        let h_min = crate::linalg::min_symmetric_eigenvalue(&self.h);
        (self.a / h_min + self.k * self.k * self.a).sqrt()
    }

    /// Uniform sample from the region.
    ///
    /// For fixed `lambda` the `x`-slice is the ellipsoid `V <= (lambda/k)^2`,
    /// whose volume grows like `lambda^n`; `lambda` is drawn from that density
    /// and `x` uniformly from the slice.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.h.nrows();
        let u: f64 = rng.random();
        let lambda = self.k * self.a.sqrt() * u.powf(1.0 / (n as f64 + 1.0));
        let y = sampling::in_ball(rng, n, lambda / self.k);
        let chol = self.h.clone().cholesky().expect("H is SPD");
        let x = chol.l().transpose().solve_upper_triangular(&y).expect("triangular factor is invertible");
        let mut z = DVector::zeros(n + 1);
        z.rows_mut(0, n).copy_from(&x);
        z[n] = lambda;
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_oracle(alpha1: f64, beta1: f64, gamma: f64) -> (f64, f64) {
        let kmax = alpha1 / beta1;
        let step = 1e-6 * kmax;
        let mut best = (0.0, 0.0);
        let mut k = step;
        while k < kmax {
            let a = cone_level(k, alpha1, beta1, gamma);
            if a > best.1 {
                best = (k, a);
            }
            k += step;
        }
        best
    }

    #[test]
    fn unit_constants() {
        let cone = optimal_cone(1.0, 1.0, 1.0).unwrap();
        let (k_grid, a_grid) = grid_oracle(1.0, 1.0, 1.0);
        assert!((cone.k_star - k_grid).abs() < 2e-6);
        assert!((cone.a_star - a_grid).abs() <= 1e-6 * a_grid);
        assert!((cone.k_star - (2f64.sqrt() - 1.0)).abs() < 1e-8);
        assert!((cone.a_star - 0.010723304703363).abs() < 1e-12);
    }

    #[test]
    fn doubling_all_constants() {
        let unit = optimal_cone(1.0, 1.0, 1.0).unwrap();
        let doubled = optimal_cone(2.0, 2.0, 2.0).unwrap();
        assert!((unit.k_star - doubled.k_star).abs() < 1e-8);
        let (_, a_grid) = grid_oracle(2.0, 2.0, 2.0);
        assert!((doubled.a_star - a_grid).abs() <= 1e-6 * a_grid);
        // numerator doubles, denominator doubles
        assert!((doubled.a_star - unit.a_star).abs() < 1e-12);
    }

    #[test]
    fn steep_beta() {
        let cone = optimal_cone(1.0, 10.0, 1.0).unwrap();
        assert!(cone.k_star < 0.1 && cone.a_star > 0.0);
        let (_, a_grid) = grid_oracle(1.0, 10.0, 1.0);
        assert!((cone.a_star - a_grid).abs() <= 1e-6 * a_grid);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(optimal_cone(0.0, 1.0, 1.0).is_err());
        assert!(optimal_cone(1.0, -1.0, 1.0).is_err());
        assert!(optimal_cone(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn samples_lie_in_region() {
        let region = ConeRegion::new(nalgebra::dmatrix![2.0, 0.5; 0.5, 1.0], 0.3, 0.01);
        let mut rng = sampling::rng(7);
        for _ in 0..500 {
            let z = region.sample(&mut rng);
            assert!(region.contains(&z, 1e-12));
            assert!(z.norm() <= region.outer_radius() * (1.0 + 1e-12));
        }
    }
}
