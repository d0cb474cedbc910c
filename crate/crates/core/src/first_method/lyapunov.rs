use nalgebra::{DMatrix, DVector};

use super::FirstMethodError;
use crate::linalg::{self, is_spd};

fn packed_index(i: usize, j: usize, n: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // row-major upper triangle
    i * n - i * (i + 1) / 2 + j
}

/// Relative residual `|HA + A^T H + Q| / (|A| |H| + |Q|)` in Frobenius norm.
pub fn lyapunov_residual(a: &DMatrix<f64>, h: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let r = h * a + a.transpose() * h + q;
    r.norm() / (a.norm() * h.norm() + q.norm())
}

/// Solves `H A + A^T H = -Q` for symmetric `H`.
///
/// The symmetric unknown is packed into its `n(n+1)/2` upper-triangular
/// entries and the resulting linear system is solved by fully pivoted LU with
/// two rounds of iterative refinement.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, FirstMethodError> {
    linalg::check_square(a)?;
    let n = a.nrows();
    if q.nrows() != n || q.ncols() != n {
        return Err(FirstMethodError::DimensionMismatch(format!(
            "A is {n}x{n} but Q is {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if !is_spd(q) {
        return Err(FirstMethodError::NotSpd("Q".into()));
    }
    let spectrum = linalg::eigenvalues(a)?;
    if spectrum.iter().any(|z| z.re >= 0.0) {
        return Err(FirstMethodError::NotHurwitz { eigenvalues: spectrum });
    }

    let dim = n * (n + 1) / 2;
    let mut system = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for p in 0..n {
        for s in p..n {
            let row = packed_index(p, s, n);
            rhs[row] = -q[(p, s)];
            for k in 0..n {
                system[(row, packed_index(p, k, n))] += a[(k, s)];
                system[(row, packed_index(k, s, n))] += a[(k, p)];
            }
        }
    }

    let lu = system.clone().full_piv_lu();
    let mut packed = lu
        .solve(&rhs)
        .ok_or_else(|| FirstMethodError::Conditioning("singular Lyapunov system".into()))?;
    for _ in 0..2 {
        let residual = &rhs - &system * &packed;
        if let Some(correction) = lu.solve(&residual) {
            packed += correction;
        }
    }

    let h = DMatrix::from_fn(n, n, |i, j| packed[packed_index(i, j, n)]);
    let rel = lyapunov_residual(a, &h, q);
    if !(rel <= 1e-10) {
        return Err(FirstMethodError::Conditioning(format!(
            "Lyapunov residual {rel:e} exceeds 1e-10"
        )));
    }
    if !is_spd(&h) {
        return Err(FirstMethodError::NotSpd("H".into()));
    }
    Ok(h)
}

/// [`solve_lyapunov`] with `Q = I`.
pub fn solve_lyapunov_identity(a: &DMatrix<f64>) -> Result<DMatrix<f64>, FirstMethodError> {
    solve_lyapunov(a, &DMatrix::identity(a.nrows(), a.ncols()))
}
