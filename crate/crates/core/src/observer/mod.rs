//! The adaptive-observer cascade
//!
//! ```text
//! x1' = A x1 + b phi(t)^T x2 + b v(t, lambda)
//! x2' = -Gamma phi(t) (C^T x1)
//! lambda' = -gamma |C^T x1|
//! ```
//!
//! with `P A + A^T P <= -Q`, `P b = C`, together with persistency-of-excitation
//! certificates and exponential-convergence diagnostics.

mod convergence;
mod gamma;
mod pe;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use convergence::{
    auxiliary_z_norms, check_c1_c4, fit_exponential_rate, lemma1_bound_check, lyapunov_increase, C1C4Report,
    ExpRateReport, MIN_TAIL_SAMPLES,
};
pub use gamma::{gamma_search, GammaCriteria, GammaSearchReport};
pub use pe::{extended_regressor, pe_check, PECertificate, DEFAULT_QUADRATURE_TOL};

use crate::first_method::{solve_lyapunov, FirstMethodError};
use crate::linalg::{self, is_spd};
use crate::ode::{integrate, EventKind, EventSpec, IntegrationError, IntegratorConfig, Trajectory};
use crate::quadrature::QuadratureError;

pub type Regressor = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;
pub type Perturbation = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("invalid observer: {0}")]
    Invalid(String),
    #[error(transparent)]
    FirstMethod(#[from] FirstMethodError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no gamma in (0, {gamma_max}] passes: {reason}")]
    SearchFailure { gamma_max: f64, reason: String },
}

/// Construction data for [`ObserverSystem`].
#[derive(Clone)]
pub struct ObserverParams {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub big_gamma: DMatrix<f64>,
    pub gamma: f64,
    pub phi: Regressor,
    pub v: Perturbation,
    /// `dv/dlambda`; central differences when absent.
    pub dv_dlambda: Option<Perturbation>,
    pub lambda0: f64,
    /// Time window `[0, dv_window]` sampled by central differences for the
    /// bound on `|dv/dlambda|`.
    pub dv_window: f64,
}

#[derive(Clone)]
pub struct ObserverSystem {
    params: ObserverParams,
    dv: f64,
}

impl fmt::Debug for ObserverSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObserverSystem")
            .field("a", &self.params.a)
            .field("b", &self.params.b)
            .field("c", &self.params.c)
            .field("gamma", &self.params.gamma)
            .field("lambda0", &self.params.lambda0)
            .field("dv", &self.dv)
            .finish_non_exhaustive()
    }
}

const DV_GRID_T: usize = 200;
const DV_GRID_LAMBDA: usize = 21;

impl ObserverSystem {
    pub fn new(params: ObserverParams) -> Result<Self, ObserverError> {
        let k = params.a.nrows();
        if !params.a.is_square() || params.b.len() != k || params.c.len() != k {
            return Err(ObserverError::Invalid(format!(
                "A is {}x{}, b has {}, C has {}",
                params.a.nrows(),
                params.a.ncols(),
                params.b.len(),
                params.c.len()
            )));
        }
        let m = params.big_gamma.nrows();
        if !is_spd(&params.big_gamma) {
            return Err(ObserverError::Invalid("Gamma must be symmetric positive definite".into()));
        }
        if (params.phi)(0.0).len() != m {
            return Err(ObserverError::Invalid(format!("phi must have {m} components")));
        }
        if !(params.gamma > 0.0 && params.gamma.is_finite()) {
            return Err(ObserverError::Invalid(format!("gamma must be positive, got {}", params.gamma)));
        }
        if !(params.lambda0 >= 0.0 && params.lambda0.is_finite()) {
            return Err(ObserverError::Invalid(format!("lambda0 must be non-negative, got {}", params.lambda0)));
        }
        if !(params.dv_window > 0.0) {
            return Err(ObserverError::Invalid("dv_window must be positive".into()));
        }
        let mut system = Self { params, dv: 0.0 };
        let mut worst = 0.0f64;
        for i in 0..DV_GRID_T {
            let t = system.params.dv_window * i as f64 / (DV_GRID_T - 1) as f64;
            let at_rest = (system.params.v)(t, 0.0);
            if at_rest.abs() > 1e-12 {
                return Err(ObserverError::Invalid(format!("v(t, 0) = {at_rest} at t = {t}")));
            }
            for j in 0..DV_GRID_LAMBDA {
                let lambda = system.params.lambda0 * j as f64 / (DV_GRID_LAMBDA - 1) as f64;
                worst = worst.max(system.central_slope(t, lambda).abs());
            }
        }
        system.dv = 1.1 * worst;
        Ok(system)
    }

    /// Scalar example: `A = -1`, `b = 1`, `C = P b = 1/2`, `phi = sin`, `Gamma = 1`,
    /// and `v(t, lambda) = lambda sin(t + phase)`.
    pub fn scalar_example(gamma: f64, lambda0: f64, phase: f64) -> Result<Self, ObserverError> {
        let a = DMatrix::from_element(1, 1, -1.0);
        let b = DVector::from_element(1, 1.0);
        let (_, _, c) = construct_mky(&a, &b)?;
        Self::new(ObserverParams {
            a,
            b,
            c,
            big_gamma: DMatrix::identity(1, 1),
            gamma,
            phi: Arc::new(|t| DVector::from_element(1, t.sin())),
            v: Arc::new(move |t, l| l * (t + phase).sin()),
            dv_dlambda: Some(Arc::new(move |t, _| (t + phase).sin())),
            lambda0,
            dv_window: 2.0 * std::f64::consts::PI,
        })
    }

    pub fn params(&self) -> &ObserverParams {
        &self.params
    }

    /// Copy with a different `gamma`.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self, ObserverError> {
        Self::new(ObserverParams {
            gamma,
            ..self.params.clone()
        })
    }

    pub fn k(&self) -> usize {
        self.params.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.params.big_gamma.nrows()
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn lambda0(&self) -> f64 {
        self.params.lambda0
    }

    /// Sampled bound on `|dv/dlambda|`, inflated by 10%.
    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn phi(&self, t: f64) -> DVector<f64> {
        (self.params.phi)(t)
    }

    pub fn v(&self, t: f64, lambda: f64) -> f64 {
        (self.params.v)(t, lambda)
    }

    pub fn dv_dlambda(&self, t: f64, lambda: f64) -> f64 {
        match &self.params.dv_dlambda {
            Some(d) => d(t, lambda),
            None => self.central_slope(t, lambda),
        }
    }

    fn central_slope(&self, t: f64, lambda: f64) -> f64 {
        let h = f64::EPSILON.cbrt() * lambda.abs().max(1.0);
        (self.v(t, lambda + h) - self.v(t, lambda - h)) / (2.0 * h)
    }

    /// Right-hand side on the stacked state `(x1, x2, lambda)`.
    pub fn rhs(&self, t: f64, state: &DVector<f64>) -> DVector<f64> {
        let (k, m) = (self.k(), self.m());
        let p = &self.params;
        let x1 = state.rows(0, k);
        let x2 = state.rows(k, m);
        let lambda = state[k + m];
        let phi = self.phi(t);
        let output = p.c.dot(&x1);
        let drive = phi.dot(&x2) + self.v(t, lambda);
        let mut out = DVector::zeros(k + m + 1);
        out.rows_mut(0, k).copy_from(&(&p.a * x1 + &p.b * drive));
        out.rows_mut(k, m).copy_from(&(&p.big_gamma * &phi * (-output)));
        out[k + m] = -p.gamma * output.abs();
        out
    }

    /// `x1^T P x1 + x2^T Gamma^-1 x2 + (D_v / gamma) lambda^2`.
    pub fn lyapunov_function(&self, p: &DMatrix<f64>, state: &DVector<f64>) -> f64 {
        let (k, m) = (self.k(), self.m());
        let x1 = state.rows(0, k);
        let x2 = state.rows(k, m).clone_owned();
        let gamma_inv = self.params.big_gamma.clone().try_inverse().expect("Gamma is SPD");
        let lambda = state[k + m];
        (x1.transpose() * p * x1)[0] + (x2.transpose() * gamma_inv * &x2)[0] + self.dv / self.params.gamma * lambda * lambda
    }
}

/// Outcome of [`verify_mky`].
#[derive(Debug, Clone, PartialEq)]
pub struct MkyTriple {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Largest eigenvalue of `PA + A^T P + Q`.
    pub residual_lyap: f64,
    /// `|P b - C|`.
    pub residual_pb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MkyVerdict {
    Ok(MkyTriple),
    Fail { reason: String, triple: MkyTriple },
}

impl MkyVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, MkyVerdict::Ok(_))
    }
}

pub fn verify_mky(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    tol: f64,
) -> MkyVerdict {
    let k = a.nrows();
    let shapes_ok = a.is_square() && b.len() == k && c.len() == k && p.shape() == (k, k) && q.shape() == (k, k);
    let triple = |residual_lyap, residual_pb| MkyTriple {
        p: p.clone(),
        q: q.clone(),
        residual_lyap,
        residual_pb,
    };
    if !shapes_ok {
        return MkyVerdict::Fail {
            reason: "inconsistent dimensions".into(),
            triple: triple(f64::NAN, f64::NAN),
        };
    }
    let residual_lyap = linalg::max_symmetric_eigenvalue(&(p * a + a.transpose() * p + q));
    let residual_pb = (p * b - c).norm();
    let t = triple(residual_lyap, residual_pb);
    let reason = if !is_spd(p) {
        Some("P is not symmetric positive definite")
    } else if !is_spd(q) {
        Some("Q is not symmetric positive definite")
    } else if residual_lyap > tol {
        Some("PA + A^T P + Q is not negative semidefinite")
    } else if residual_pb > tol {
        Some("P b differs from C")
    } else {
        None
    };
    match reason {
        Some(r) => MkyVerdict::Fail {
            reason: r.into(),
            triple: t,
        },
        None => MkyVerdict::Ok(t),
    }
}

/// `Q = I`, `P` from the Lyapunov equation, `C = P b`.
pub fn construct_mky(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>), ObserverError> {
    if b.len() != a.nrows() {
        return Err(ObserverError::Invalid(format!("b has {} entries for a {}-dimensional A", b.len(), a.nrows())));
    }
    let q = DMatrix::identity(a.nrows(), a.nrows());
    let p = solve_lyapunov(a, &q)?;
    let c = &p * b;
    Ok((p, q, c))
}

/// Runs leaving a ball this many times larger than the start are halted as divergent.
pub const ESCAPE_FACTOR: f64 = 1e6;

/// Integrates from `(x0, lambda0)` over `[0, tf]`, recording any negative
/// `lambda` and halting on divergence.
pub fn simulate_observer(
    system: &ObserverSystem,
    x0: &DVector<f64>,
    config: &IntegratorConfig,
    tf: f64,
) -> Result<Trajectory, ObserverError> {
    let n = system.k() + system.m();
    if x0.len() != n {
        return Err(ObserverError::Invalid(format!("x0 must have {n} entries, got {}", x0.len())));
    }
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(x0);
    start[n] = system.lambda0();
    let events = [
        EventSpec::record(EventKind::ComponentNegative { component: n }),
        EventSpec::halt(EventKind::BallEscape {
            center: DVector::zeros(n + 1),
            radius: ESCAPE_FACTOR * start.norm().max(1.0),
        }),
    ];
    Ok(integrate(|t, z| system.rhs(t, z), &start, 0.0, tf, config, &events)?)
}
