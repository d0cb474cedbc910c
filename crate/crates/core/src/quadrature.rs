//! Gauss-Legendre and adaptive Gauss-Kronrod quadrature.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("adaptive quadrature did not reach tolerance {tol:e} (estimate {error:e}) after {intervals} intervals")]
    NoConvergence { tol: f64, error: f64, intervals: usize },
    #[error("non-finite integrand value at {at}")]
    NonFinite { at: f64 },
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// from Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// 16-point Gauss-Legendre approximation of the integral over `[a, b]`.
pub fn gauss16<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gl16();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes.iter().zip(weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights on the odd-indexed Kronrod nodes (and the center).
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F>(f: &F, a: f64, b: f64) -> Result<(DVector<f64>, f64), QuadratureError>
where
    F: Fn(f64) -> DVector<f64>,
{
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let eval = |t: f64| {
        let v = f(t);
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite { at: t })
        }
    };
    let center = eval(mid)?;
    let mut kronrod = &center * KRONROD_WEIGHTS[7];
    let mut gauss = &center * GAUSS7_WEIGHTS[3];
    for j in 0..7 {
        let dx = half * KRONROD_NODES[j];
        let pair = eval(mid - dx)? + eval(mid + dx)?;
        kronrod += &pair * KRONROD_WEIGHTS[j];
        if j % 2 == 1 {
            gauss += &pair * GAUSS7_WEIGHTS[j / 2];
        }
    }
    let kronrod = kronrod * half;
    let error = (&kronrod - gauss * half).amax();
    Ok((kronrod, error))
}

/// Adaptive Gauss-Kronrod (7/15) integration of a vector-valued function,
/// bisecting the interval with the largest error estimate until the summed
/// estimate is below `abs_tol`.
pub fn adaptive_gk15<F>(f: F, a: f64, b: f64, abs_tol: f64, max_intervals: usize) -> Result<DVector<f64>, QuadratureError>
where
    F: Fn(f64) -> DVector<f64>,
{
    let (value, error) = kronrod15(&f, a, b)?;
    let mut pieces = vec![(a, b, value, error)];
    loop {
        let total_error: f64 = pieces.iter().map(|p| p.3).sum();
        if total_error <= abs_tol {
            break;
        }
        if pieces.len() >= max_intervals {
            return Err(QuadratureError::NoConvergence {
                tol: abs_tol,
                error: total_error,
                intervals: pieces.len(),
            });
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("at least one interval");
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (left, left_err) = kronrod15(&f, lo, mid)?;
        let (right, right_err) = kronrod15(&f, mid, hi)?;
        pieces.push((lo, mid, left, left_err));
        pieces.push((mid, hi, right, right_err));
    }
    pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut sum = DVector::zeros(pieces[0].2.len());
    for p in &pieces {
        sum += &p.2;
    }
    Ok(sum)
}
