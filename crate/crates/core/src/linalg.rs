//! Small dense linear-algebra helpers on top of nalgebra.

use std::fmt;

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("eigenvalue iteration did not converge (matrix norm {norm:e})")]
    NoConvergence { norm: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

const SCHUR_MAX_ITER: usize = 10_000;

pub fn check_square(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// Eigenvalues of a general real matrix via the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, LinalgError> {
    check_square(m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(LinalgError::NoConvergence { norm: m.norm() })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalues of the symmetric part `(m + m^T) / 2`, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = symmetrize(m);
    let mut values: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Symmetric to within `1e-12` relative and smallest eigenvalue strictly positive.
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1e-300) && min_symmetric_eigenvalue(m) > 0.0
}

/// All eigenvalues have strictly negative real part.
pub fn is_hurwitz(m: &DMatrix<f64>) -> Result<bool, LinalgError> {
    Ok(eigenvalues(m)?.iter().all(|z| z.re < 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    NegativeDefinite,
    PositiveDefinite,
    Indefinite,
    /// Some eigenvalue lies within tolerance of zero and the rest share a sign.
    SemiDefiniteInconclusive,
}

impl Definiteness {
    pub fn is_sign_definite(self) -> bool {
        matches!(self, Definiteness::NegativeDefinite | Definiteness::PositiveDefinite)
    }
}

impl fmt::Display for Definiteness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Definiteness::NegativeDefinite => "negative-definite",
            Definiteness::PositiveDefinite => "positive-definite",
            Definiteness::Indefinite => "indefinite",
            Definiteness::SemiDefiniteInconclusive => "semi-definite-inconclusive",
        };
        f.write_str(s)
    }
}

/// Classifies the symmetric part of `m` by its eigenvalues against `±tol`.
pub fn definiteness(m: &DMatrix<f64>, tol: f64) -> Definiteness {
    let values = symmetric_eigenvalues(m);
    let positive = values.iter().filter(|&&v| v > tol).count();
    let negative = values.iter().filter(|&&v| v < -tol).count();
    let n = values.len();
    if negative == n && n > 0 {
        Definiteness::NegativeDefinite
    } else if positive == n && n > 0 {
        Definiteness::PositiveDefinite
    } else if positive > 0 && negative > 0 {
        Definiteness::Indefinite
    } else {
        Definiteness::SemiDefiniteInconclusive
    }
}
