use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};

use super::FirstMethodError;
use crate::linalg;

/// Default band around zero for the critical eigenvalue: `1e-8 * |J|`.
pub fn default_zero_tol(j: &DMatrix<f64>) -> f64 {
    1e-8 * j.norm().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumIssue {
    NoZeroEigenvalue,
    MultipleZeroEigenvalues,
    NonNegativeRealPart,
}

impl fmt::Display for SpectrumIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpectrumIssue::NoZeroEigenvalue => "no eigenvalue within tolerance of zero",
            SpectrumIssue::MultipleZeroEigenvalues => "more than one eigenvalue within tolerance of zero",
            SpectrumIssue::NonNegativeRealPart => "eigenvalue with non-negative real part outside the zero band",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumClass {
    /// Exactly one eigenvalue in the zero band, all others strictly stable.
    Qualifies { eigenvalues: Vec<Complex<f64>> },
    Fails {
        issues: Vec<SpectrumIssue>,
        violating: Vec<Complex<f64>>,
    },
}

impl SpectrumClass {
    pub fn qualifies(&self) -> bool {
        matches!(self, SpectrumClass::Qualifies { .. })
    }
}

pub fn classify_spectrum(j: &DMatrix<f64>, zero_tol: f64) -> Result<SpectrumClass, FirstMethodError> {
    if !(zero_tol > 0.0) {
        return Err(FirstMethodError::BadParameter(format!("zero_tol must be positive, got {zero_tol}")));
    }
    let eigenvalues = linalg::eigenvalues(j)?;
    let zeros: Vec<Complex<f64>> = eigenvalues.iter().copied().filter(|z| z.norm() <= zero_tol).collect();
    let unstable: Vec<Complex<f64>> = eigenvalues
        .iter()
        .copied()
        .filter(|z| z.norm() > zero_tol && z.re >= -zero_tol)
        .collect();
    let mut issues = Vec::new();
    let mut violating = Vec::new();
    match zeros.len() {
        0 => issues.push(SpectrumIssue::NoZeroEigenvalue),
        1 => {}
        _ => {
            issues.push(SpectrumIssue::MultipleZeroEigenvalues);
            violating.extend(zeros.iter().copied());
        }
    }
    if !unstable.is_empty() {
        issues.push(SpectrumIssue::NonNegativeRealPart);
        violating.extend(unstable);
    }
    Ok(if issues.is_empty() {
        SpectrumClass::Qualifies { eigenvalues }
    } else {
        SpectrumClass::Fails { issues, violating }
    })
}

/// Coordinates `(x, lambda) = T z` in which the Jacobian has block form
/// `[[A, b], [0, 0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSplit {
    pub transform: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Eigenvalues of the original Jacobian.
    pub eigenvalues: Vec<Complex<f64>>,
    pub zero_tol: f64,
    /// Norm of the last row of `T J T^-1`.
    pub bottom_row_norm: f64,
    /// Largest distance between eigenvalues of `A` and the stable eigenvalues of `J`
    /// after nearest pairing.
    pub eigen_mismatch: f64,
}

impl SpectralSplit {
    /// Dimension of the stable block.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn transformed_jacobian(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        &self.transform * j * &self.inverse
    }

    /// The split obtained by replacing `lambda` with `-lambda`.
    pub fn negate_critical(&self) -> SpectralSplit {
        let m = self.transform.nrows();
        let mut transform = self.transform.clone();
        transform.row_mut(m - 1).neg_mut();
        let mut inverse = self.inverse.clone();
        inverse.column_mut(m - 1).neg_mut();
        SpectralSplit {
            transform,
            inverse,
            a: self.a.clone(),
            b: -&self.b,
            ..self.clone()
        }
    }
}

/// Builds an orthogonal `T` whose last row is the unit left null vector of `J`
/// and whose remaining rows are an orthonormal completion.
pub fn build_transform(j: &DMatrix<f64>, zero_tol: f64) -> Result<SpectralSplit, FirstMethodError> {
    let eigenvalues = match classify_spectrum(j, zero_tol)? {
        SpectrumClass::Qualifies { eigenvalues } => eigenvalues,
        SpectrumClass::Fails { issues, violating } => {
            return Err(FirstMethodError::Spectrum { issues, violating });
        }
    };
    let m = j.nrows();
    if m < 2 {
        return Err(FirstMethodError::DimensionMismatch(
            "need at least one stable direction besides the critical one".into(),
        ));
    }

    // Left singular vectors of J are taken as right singular vectors of J^T:
    // nalgebra's `u` factor is unreliable for exactly rank-deficient input.
    let svd = j.transpose().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let (smallest, second) = (svd.singular_values[order[0]], svd.singular_values[order[1]]);
    if second <= 10.0 * zero_tol {
        return Err(FirstMethodError::Conditioning(format!(
            "left null space is not one-dimensional (singular values {smallest:e}, {second:e})"
        )));
    }
    let mut w: DVector<f64> = v_t.row(order[0]).transpose();
    w /= w.norm();
    let null_residual = (j.transpose() * &w).norm();
    if null_residual > zero_tol.max(1e-12 * j.norm()) {
        return Err(FirstMethodError::Conditioning(format!(
            "left null vector residual {null_residual:e} exceeds tolerance"
        )));
    }
    let pivot = w.iamax();
    if w[pivot] < 0.0 {
        w.neg_mut();
    }

    // Householder reflector R = I - 2 v v^T / |v|^2 with v = w + e_pivot maps w to
    // -e_pivot, so its columns other than `pivot` span the complement of w.
    let mut v = w.clone();
    v[pivot] += 1.0;
    let reflector = DMatrix::identity(m, m) - (&v * v.transpose()) * (2.0 / v.norm_squared());
    let mut transform = DMatrix::zeros(m, m);
    for (row, col) in (0..m).filter(|&c| c != pivot).enumerate() {
        transform.set_row(row, &reflector.column(col).transpose());
    }
    transform.set_row(m - 1, &w.transpose());
    let inverse = transform.transpose();

    let identity_error = (&transform * &inverse - DMatrix::<f64>::identity(m, m)).amax();
    if identity_error > 1e-10 {
        return Err(FirstMethodError::Conditioning(format!(
            "T T^-1 deviates from identity by {identity_error:e}"
        )));
    }

    let tj = &transform * j * &inverse;
    let n = m - 1;
    let a = tj.view((0, 0), (n, n)).clone_owned();
    let b = tj.view((0, n), (n, 1)).column(0).clone_owned();
    let bottom_row_norm = tj.row(n).norm();

    let stable: Vec<Complex<f64>> = {
        let mut by_size: Vec<Complex<f64>> = eigenvalues.clone();
        by_size.sort_by(|p, q| p.norm().total_cmp(&q.norm()));
        by_size.into_iter().skip(1).collect()
    };
    let eigen_mismatch = nearest_pairing_distance(&linalg::eigenvalues(&a)?, &stable);

    Ok(SpectralSplit {
        transform,
        inverse,
        a,
        b,
        eigenvalues,
        zero_tol,
        bottom_row_norm,
        eigen_mismatch,
    })
}

/// Greedy nearest pairing of two equally sized multisets; returns the worst distance.
fn nearest_pairing_distance(left: &[Complex<f64>], right: &[Complex<f64>]) -> f64 {
    let mut used = vec![false; right.len()];
    let mut worst = 0.0f64;
    for z in left {
        let best = right
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .min_by(|(_, p), (_, q)| (*p - z).norm().total_cmp(&(*q - z).norm()));
        match best {
            Some((i, w)) => {
                used[i] = true;
                worst = worst.max((w - z).norm());
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn classification_examples() {
        let tol = 1e-8;
        assert!(classify_spectrum(&dmatrix![-1.0, 1.0; 0.0, 0.0], tol).unwrap().qualifies());
        match classify_spectrum(&dmatrix![-1.0, 0.0; 0.0, -2.0], tol).unwrap() {
            SpectrumClass::Fails { issues, violating } => {
                assert_eq!(issues, vec![SpectrumIssue::NoZeroEigenvalue]);
                assert!(violating.is_empty());
            }
            other => panic!("{other:?}"),
        }
        match classify_spectrum(&dmatrix![0.0, 1.0; -1.0, 0.0], tol).unwrap() {
            SpectrumClass::Fails { issues, violating } => {
                assert!(issues.contains(&SpectrumIssue::NonNegativeRealPart));
                assert_eq!(violating.len(), 2);
            }
            other => panic!("{other:?}"),
        }
        match classify_spectrum(&DMatrix::zeros(2, 2), tol).unwrap() {
            SpectrumClass::Fails { issues, .. } => assert_eq!(issues, vec![SpectrumIssue::MultipleZeroEigenvalues]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn block_form_input_keeps_block() {
        let j = dmatrix![-1.0, 1.0; 0.0, 0.0];
        let split = build_transform(&j, default_zero_tol(&j)).unwrap();
        // T is identity up to the sign of the completion row
        assert!((split.a[(0, 0)] + 1.0).abs() < 1e-14);
        assert!((split.b[0].abs() - 1.0).abs() < 1e-14);
        assert!(split.bottom_row_norm < 1e-14);
        assert!((split.transform[(0, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn three_dimensional_block() {
        let j = dmatrix![-2.0, 0.0, 1.0; 0.0, -3.0, 1.0; 0.0, 0.0, 0.0];
        let split = build_transform(&j, default_zero_tol(&j)).unwrap();
        let tj = split.transformed_jacobian(&j);
        assert!(tj.row(2).norm() < 1e-12);
        let mut ev: Vec<f64> = crate::linalg::eigenvalues(&split.a).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 3.0).abs() < 1e-12 && (ev[1] + 2.0).abs() < 1e-12);
        assert!(split.eigen_mismatch < 1e-12);
        // b is (1, 1) up to the orthogonal basis choice of the completion
        assert!((split.b.norm() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn negation_flips_b_only() {
        let j = dmatrix![-1.0, 1.0; 0.0, 0.0];
        let split = build_transform(&j, 1e-8).unwrap();
        let neg = split.negate_critical();
        let tj = neg.transformed_jacobian(&j);
        assert!((tj[(0, 1)] + split.b[0]).abs() < 1e-14);
        assert!((&neg.transform * &neg.inverse - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn failing_spectrum_is_an_error_for_transform() {
        let err = build_transform(&dmatrix![-1.0, 0.0; 0.0, -2.0], 1e-8).unwrap_err();
        assert!(matches!(err, FirstMethodError::Spectrum { .. }));
    }
}
