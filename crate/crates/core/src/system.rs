//! Vector-field representations and finite-difference derivatives.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Autonomous vector field `z -> p(z)`.
pub type Field = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Time-dependent vector field `(t, z) -> p(t, z)`, the shape the integrator consumes.
pub type TimeField = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// `(x, lambda, t) -> f(x, lambda, t)`.
pub type CascadeDrift = Arc<dyn Fn(&DVector<f64>, f64, f64) -> DVector<f64> + Send + Sync>;
/// `(x, lambda, t) -> g(x, lambda, t)`.
pub type CascadeRate = Arc<dyn Fn(&DVector<f64>, f64, f64) -> f64 + Send + Sync>;
/// Distance from a point to the set where the field is not differentiable.
pub type KinkDistance = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

const EQUILIBRIUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("origin is not an equilibrium: |p(0)| = {residual:e}")]
    NotEquilibrium { residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite field value in stencil for column {column}")]
    NonFinite { column: usize },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
    #[error("stencil of radius {reach:e} hits a declared non-smooth locus (distance {distance:e})")]
    NonSmooth { distance: f64, reach: f64 },
    #[error("system is declared {declared} but {required} is required")]
    Smoothness {
        declared: Smoothness,
        required: Smoothness,
    },
}

/// Declared regularity of the field at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Smoothness {
    C1AtOrigin,
    C2AtOrigin,
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoothness::C1AtOrigin => write!(f, "C1 at origin"),
            Smoothness::C2AtOrigin => write!(f, "C2 at origin"),
        }
    }
}

/// Default central-difference step for first derivatives at `point`.
pub fn default_step(point: &DVector<f64>) -> f64 {
    f64::EPSILON.cbrt() * point.norm().max(1.0)
}

/// Default step for second differences; rounding error there scales as `eps / h^2`.
pub fn default_hessian_step(point: &DVector<f64>) -> f64 {
    f64::EPSILON.powf(0.25) * point.norm().max(1.0)
}

/// Central-difference Jacobian; column `j` is `(p(z + h e_j) - p(z - h e_j)) / 2h`,
/// with `2h` taken as the difference of the rounded probe coordinates.
pub fn numerical_jacobian<F>(field: F, point: &DVector<f64>, h: f64) -> Result<DMatrix<f64>, SystemError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(SystemError::BadStep(h));
    }
    let m = point.len();
    let mut jac = DMatrix::zeros(m, m);
    let mut probe = point.clone();
    for j in 0..m {
        probe[j] = point[j] + h;
        let (up, plus) = (probe[j], field(&probe));
        probe[j] = point[j] - h;
        let (down, minus) = (probe[j], field(&probe));
        probe[j] = point[j];
        if plus.len() != m || minus.len() != m {
            return Err(SystemError::DimensionMismatch {
                expected: m,
                got: plus.len().min(minus.len()),
            });
        }
        if plus.iter().chain(minus.iter()).any(|v| !v.is_finite()) {
            return Err(SystemError::NonFinite { column: j });
        }
        // the representable step, not 2h, so rounding of z +- h does not leak in
        let col = (plus - minus) / (up - down);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Symmetrized central second-difference Hessian of a scalar field.
pub fn numerical_hessian<F>(f: F, point: &DVector<f64>, h: f64) -> Result<DMatrix<f64>, SystemError>
where
    F: Fn(&DVector<f64>) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(SystemError::BadStep(h));
    }
    let m = point.len();
    let mut hess = DMatrix::zeros(m, m);
    let mut probe = point.clone();
    let eval = |probe: &DVector<f64>, column: usize| {
        let v = f(probe);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SystemError::NonFinite { column })
        }
    };
    let center = eval(point, 0)?;
    for i in 0..m {
        probe[i] = point[i] + h;
        let plus = eval(&probe, i)?;
        probe[i] = point[i] - h;
        let minus = eval(&probe, i)?;
        probe[i] = point[i];
        hess[(i, i)] = (plus - 2.0 * center + minus) / (h * h);

        for j in (i + 1)..m {
            let mut corner = |si: f64, sj: f64| {
                probe[i] = point[i] + si * h;
                probe[j] = point[j] + sj * h;
                let v = eval(&probe, j);
                probe[i] = point[i];
                probe[j] = point[j];
                v
            };
            let pp = corner(1.0, 1.0)?;
            let pm = corner(1.0, -1.0)?;
            let mp = corner(-1.0, 1.0)?;
            let mm = corner(-1.0, -1.0)?;
            let mixed = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[(i, j)] = mixed;
            hess[(j, i)] = mixed;
        }
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

/// `z' = p(z)` with `p(0) = 0`.
#[derive(Clone)]
pub struct AutonomousSystem {
    dim: usize,
    field: Field,
    smoothness: Smoothness,
    kink: Option<KinkDistance>,
}

impl fmt::Debug for AutonomousSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AutonomousSystem")
            .field("dim", &self.dim)
            .field("smoothness", &self.smoothness)
            .field("has_kink", &self.kink.is_some())
            .finish()
    }
}

impl AutonomousSystem {
    pub fn new<F>(dim: usize, smoothness: Smoothness, field: F) -> Result<Self, SystemError>
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        let field: Field = Arc::new(field);
        let at_origin = field(&DVector::zeros(dim));
        if at_origin.len() != dim {
            return Err(SystemError::DimensionMismatch {
                expected: dim,
                got: at_origin.len(),
            });
        }
        let residual = at_origin.amax();
        if !(residual <= EQUILIBRIUM_TOL) {
            return Err(SystemError::NotEquilibrium { residual });
        }
        Ok(Self {
            dim,
            field,
            smoothness,
            kink: None,
        })
    }

    /// Declares where the field fails to be differentiable. Derivative requests
    /// whose stencil reaches that set are refused.
    pub fn with_kink<K>(mut self, distance: K) -> Self
    where
        K: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        self.kink = Some(Arc::new(distance));
        self
    }

    /// Linear field `z' = J z`.
    pub fn linear(matrix: DMatrix<f64>) -> Result<Self, SystemError> {
        if !matrix.is_square() {
            return Err(SystemError::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let dim = matrix.nrows();
        Self::new(dim, Smoothness::C2AtOrigin, move |z| &matrix * z)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.field)(z)
    }

    pub fn field(&self) -> Field {
        self.field.clone()
    }

    pub fn time_field(&self) -> TimeField {
        let field = self.field.clone();
        Arc::new(move |_t, z| field(z))
    }

    fn check_kink(&self, point: &DVector<f64>, reach: f64) -> Result<(), SystemError> {
        if let Some(kink) = &self.kink {
            let distance = kink(point);
            if distance <= reach {
                return Err(SystemError::NonSmooth { distance, reach });
            }
        }
        Ok(())
    }

    pub fn jacobian(&self, point: &DVector<f64>, h: Option<f64>) -> Result<DMatrix<f64>, SystemError> {
        self.check_dim(point)?;
        let h = h.unwrap_or_else(|| default_step(point));
        self.check_kink(point, 2.0 * h)?;
        numerical_jacobian(|z| self.eval(z), point, h)
    }

    /// Hessian of component `component` of `transform * p(inverse * y)` at `point`.
    pub fn transformed_hessian(
        &self,
        transform: &DMatrix<f64>,
        inverse: &DMatrix<f64>,
        component: usize,
        point: &DVector<f64>,
        h: Option<f64>,
    ) -> Result<DMatrix<f64>, SystemError> {
        if self.smoothness < Smoothness::C2AtOrigin {
            return Err(SystemError::Smoothness {
                declared: self.smoothness,
                required: Smoothness::C2AtOrigin,
            });
        }
        self.check_dim(point)?;
        let h = h.unwrap_or_else(|| default_hessian_step(point));
        // The stencil reaches h*sqrt(2) in transformed coordinates; `inverse` may stretch it.
        let reach = 2.0 * h * inverse.norm().max(1.0);
        self.check_kink(&(inverse * point), reach)?;
        let row = transform.row(component).clone_owned();
        numerical_hessian(|y| (&row * self.eval(&(inverse * y)))[0], point, h)
    }

    fn check_dim(&self, point: &DVector<f64>) -> Result<(), SystemError> {
        if point.len() == self.dim {
            Ok(())
        } else {
            Err(SystemError::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            })
        }
    }
}

/// `x' = f(x, lambda, t)`, `lambda' = g(x, lambda, t)` with the origin an equilibrium.
///
/// The stacked state is `(x, lambda)` with `lambda` last.
#[derive(Clone)]
pub struct CascadeSystem {
    n: usize,
    f: CascadeDrift,
    g: CascadeRate,
}

impl fmt::Debug for CascadeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CascadeSystem").field("n", &self.n).finish()
    }
}

impl CascadeSystem {
    pub fn new<F, G>(n: usize, f: F, g: G) -> Result<Self, SystemError>
    where
        F: Fn(&DVector<f64>, f64, f64) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(&DVector<f64>, f64, f64) -> f64 + Send + Sync + 'static,
    {
        let system = Self {
            n,
            f: Arc::new(f),
            g: Arc::new(g),
        };
        let zero = DVector::zeros(n);
        for k in 0..=20 {
            let t = -10.0 + k as f64;
            let fx = (system.f)(&zero, 0.0, t);
            if fx.len() != n {
                return Err(SystemError::DimensionMismatch {
                    expected: n,
                    got: fx.len(),
                });
            }
            let residual = fx.amax().max((system.g)(&zero, 0.0, t).abs());
            if !(residual <= EQUILIBRIUM_TOL) {
                return Err(SystemError::NotEquilibrium { residual });
            }
        }
        Ok(system)
    }

    /// Dimension of `x`; the stacked state has dimension `n + 1`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self, x: &DVector<f64>, lambda: f64, t: f64) -> DVector<f64> {
        (self.f)(x, lambda, t)
    }

    pub fn g(&self, x: &DVector<f64>, lambda: f64, t: f64) -> f64 {
        (self.g)(x, lambda, t)
    }

    /// Splits a stacked state into `(x, lambda)`.
    pub fn split(state: &DVector<f64>) -> (DVector<f64>, f64) {
        let n = state.len() - 1;
        (state.rows(0, n).clone_owned(), state[n])
    }

    pub fn time_field(&self) -> TimeField {
        let (f, g, n) = (self.f.clone(), self.g.clone(), self.n);
        Arc::new(move |t, state| {
            let x = state.rows(0, n).clone_owned();
            let lambda = state[n];
            let mut out = DVector::zeros(n + 1);
            out.rows_mut(0, n).copy_from(&f(&x, lambda, t));
            out[n] = g(&x, lambda, t);
            out
        })
    }
}
