//! Weak-attractor test for equilibria whose Jacobian has exactly one zero
//! eigenvalue and all other eigenvalues in the open left half-plane.
//!
//! The pipeline is [`classify_spectrum`], [`build_transform`], the Hessian of
//! the critical component, [`solve_lyapunov`], [`estimate_local_constants`] and
//! [`optimal_cone`]; [`weak_attractor_test`] runs all of them.

mod cone;
mod constants;
mod lyapunov;
mod spectrum;

use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

pub use cone::{cone_level, optimal_cone, ConeRegion, OptimalCone};
pub use constants::{estimate_local_constants, split_field, LocalConstants, DEFAULT_SEED, SAFETY_MARGIN};
pub use lyapunov::{lyapunov_residual, solve_lyapunov, solve_lyapunov_identity};
pub use spectrum::{build_transform, classify_spectrum, default_zero_tol, SpectralSplit, SpectrumClass, SpectrumIssue};

use crate::linalg::{self, Definiteness, LinalgError};
use crate::report::{fmt12, matrices_csv, KeyValueReport};
use crate::system::{AutonomousSystem, SystemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FirstMethodError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("spectrum does not qualify: {}", describe_issues(.issues))]
    Spectrum {
        issues: Vec<SpectrumIssue>,
        violating: Vec<Complex<f64>>,
    },
    #[error("conditioning: {0}")]
    Conditioning(String),
    #[error("matrix is not Hurwitz (eigenvalues {})", describe_eigenvalues(.eigenvalues))]
    NotHurwitz { eigenvalues: Vec<Complex<f64>> },
    #[error("{0} is not symmetric positive definite")]
    NotSpd(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("critical rate {rate:e} > 0 at split point {point:?}")]
    RegionViolation { point: Vec<f64>, rate: f64 },
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

fn describe_issues(issues: &[SpectrumIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

fn describe_eigenvalues(values: &[Complex<f64>]) -> String {
    values.iter().map(|z| fmt_complex(*z)).collect::<Vec<_>>().join(", ")
}

pub fn fmt_complex(z: Complex<f64>) -> String {
    if z.im == 0.0 {
        fmt12(z.re)
    } else if z.im > 0.0 {
        format!("{}+{}i", fmt12(z.re), fmt12(z.im))
    } else {
        format!("{}-{}i", fmt12(z.re), fmt12(-z.im))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    WeakAttractor,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::WeakAttractor => "weak-attractor",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    /// Zero band for the critical eigenvalue; `None` means `1e-8 * |J|`.
    pub zero_tol: Option<f64>,
    /// Eigenvalue band for the Hessian sign test; `None` means `1e-6 * max(1, |G|)`.
    pub definiteness_tol: Option<f64>,
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
    /// Right-hand side of the Lyapunov equation; `None` means identity.
    pub q: Option<DMatrix<f64>>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            zero_tol: None,
            definiteness_tol: None,
            radius: 0.5,
            samples: 2000,
            seed: DEFAULT_SEED,
            q: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorCertificate {
    /// Split used downstream; if the Hessian was positive definite its critical
    /// coordinate has already been negated.
    pub split: SpectralSplit,
    pub jacobian: DMatrix<f64>,
    /// Hessian of the critical component in the split returned above.
    pub g: DMatrix<f64>,
    /// Sign class of the Hessian before any negation.
    pub definiteness: Definiteness,
    pub definiteness_tol: f64,
    pub negated: bool,
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub constants: Option<LocalConstants>,
    pub cone: Option<OptimalCone>,
    /// Whether the certified cone fits inside the sampling ball.
    pub cone_within_radius: Option<bool>,
    pub verdict: Verdict,
}

impl AttractorCertificate {
    pub fn region(&self) -> Option<ConeRegion> {
        self.cone.map(|c| ConeRegion::new(self.h.clone(), c.k_star, c.a_star))
    }

    /// Maps a split-coordinate point back to the original state.
    pub fn to_original(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.split.inverse * y
    }

    pub fn to_split(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.split.transform * z
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.text(
            "eigenvalues",
            self.split.eigenvalues.iter().map(|z| fmt_complex(*z)).collect::<Vec<_>>().join(", "),
        )
        .num("zero_tol", self.split.zero_tol)
        .matrix("T", &self.split.transform)
        .matrix("A", &self.split.a)
        .list("b", self.split.b.iter().copied())
        .matrix("G", &self.g)
        .text("definiteness", self.definiteness.to_string())
        .text("lambda_negated", self.negated.to_string())
        .matrix("H", &self.h)
        .matrix("Q", &self.q);
        if let Some(c) = &self.constants {
            r.num("alpha1", c.alpha1)
                .num("beta1", c.beta1)
                .num("gamma", c.gamma)
                .num("radius", c.radius)
                .text("samples", c.samples.to_string());
        }
        if let Some(c) = &self.cone {
            r.num("k_star", c.k_star).num("a_star", c.a_star);
        }
        if let Some(inside) = self.cone_within_radius {
            r.text("cone_within_radius", inside.to_string());
        }
        r.text("verdict", self.verdict.to_string());
        r
    }

    /// CSV of the entries of `G` and `H`.
    pub fn matrices_csv(&self) -> String {
        matrices_csv(&[("G", &self.g), ("H", &self.h)])
    }
}

/// Runs the full weak-attractor pipeline at the origin.
pub fn weak_attractor_test(
    system: &AutonomousSystem,
    options: &AnalysisOptions,
) -> Result<AttractorCertificate, FirstMethodError> {
    let m = system.dim();
    let origin = DVector::zeros(m);
    let jacobian = system.jacobian(&origin, None)?;
    let zero_tol = options.zero_tol.unwrap_or_else(|| default_zero_tol(&jacobian));
    let mut split = build_transform(&jacobian, zero_tol)?;
    let n = split.n();

    let mut g = system.transformed_hessian(&split.transform, &split.inverse, n, &origin, None)?;
    let definiteness_tol = options
        .definiteness_tol
        .unwrap_or_else(|| 1e-6 * g.norm().max(1.0));
    let definiteness = linalg::definiteness(&g, definiteness_tol);
    let negated = definiteness == Definiteness::PositiveDefinite;
    if negated {
        split = split.negate_critical();
        g = system.transformed_hessian(&split.transform, &split.inverse, n, &origin, None)?;
    }

    let q = options.q.clone().unwrap_or_else(|| DMatrix::identity(n, n));
    let h = solve_lyapunov(&split.a, &q)?;

    let (constants, cone, cone_within_radius, verdict) = if definiteness.is_sign_definite() {
        let constants = estimate_local_constants(system, &split, &h, options.radius, options.samples, options.seed)?;
        let cone = optimal_cone(constants.alpha1, constants.beta1, constants.gamma)?;
        let inside = ConeRegion::new(h.clone(), cone.k_star, cone.a_star).outer_radius() <= constants.radius;
        (Some(constants), Some(cone), Some(inside), Verdict::WeakAttractor)
    } else {
        (None, None, None, Verdict::Inconclusive)
    };

    Ok(AttractorCertificate {
        split,
        jacobian,
        g,
        definiteness,
        definiteness_tol,
        negated,
        h,
        q,
        constants,
        cone,
        cone_within_radius,
        verdict,
    })
}
