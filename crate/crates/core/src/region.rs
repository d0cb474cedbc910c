//! Comparison-function conditions for forward-invariant sets of cascades
//! `x' = f(x, lambda, t)`, `lambda' = g(x, lambda, t)`, and empirical checks of
//! invariance and of the limit behavior of `lambda`.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::ode::{integrate, IntegratorConfig, Trajectory};
use crate::report::fmt12;
use crate::sampling;
use crate::system::CascadeSystem;

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type StateFunction = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("contract violation in `{callable}`: {detail}")]
    Contract { callable: String, detail: String },
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("trajectory tail has {have} samples, need at least {need}")]
    ShortTrajectory { have: usize, need: usize },
}

fn contract(callable: &str, detail: impl Into<String>) -> RegionError {
    RegionError::Contract {
        callable: callable.to_owned(),
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Unspecified,
    NonDecreasing,
    Increasing,
}

/// A scalar function with its declared monotonicity.
#[derive(Clone)]
pub struct ScalarFn {
    name: String,
    f: ScalarMap,
    monotonicity: Monotonicity,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn")
            .field("name", &self.name)
            .field("monotonicity", &self.monotonicity)
            .finish()
    }
}

impl ScalarFn {
    pub fn new<F>(name: &str, monotonicity: Monotonicity, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.to_owned(),
            f: Arc::new(f),
            monotonicity,
        }
    }

    pub fn zero(name: &str) -> Self {
        Self::new(name, Monotonicity::NonDecreasing, |_| 0.0)
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn monotonicity(&self) -> Monotonicity {
        self.monotonicity
    }

    /// Checks the declared monotonicity on the given increasing grid.
    fn check_monotone(&self, grid: &[f64]) -> Result<(), RegionError> {
        let strict = match self.monotonicity {
            Monotonicity::Unspecified => return Ok(()),
            Monotonicity::NonDecreasing => false,
            Monotonicity::Increasing => true,
        };
        let mut prev = self.eval(grid[0]);
        for &s in &grid[1..] {
            let cur = self.eval(s);
            if cur < prev || (strict && cur == prev) {
                return Err(contract(&self.name, format!("not monotone near s = {}", fmt12(s))));
            }
            prev = cur;
        }
        Ok(())
    }

    fn check_vanishes(&self) -> Result<(), RegionError> {
        let at_zero = self.eval(0.0);
        if at_zero.abs() > 1e-12 {
            return Err(contract(&self.name, format!("value at 0 is {}", fmt12(at_zero))));
        }
        Ok(())
    }

    /// Inverse of an increasing function by bisection, expanding the bracket
    /// by doubling until it contains the target.
    pub fn inverse(&self, target: f64) -> Result<f64, RegionError> {
        if target <= 0.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut f_lo = self.eval(lo);
        let mut f_hi = self.eval(hi);
        let mut doublings = 0;
        while f_hi < target {
            if f_hi < f_lo {
                return Err(contract(&self.name, "decreasing while expanding the inversion bracket"));
            }
            lo = hi;
            f_lo = f_hi;
            hi *= 2.0;
            f_hi = self.eval(hi);
            doublings += 1;
            if doublings > 1000 || !f_hi.is_finite() {
                return Err(contract(&self.name, format!("does not reach {}", fmt12(target))));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f_mid = self.eval(mid);
            if f_mid < f_lo || f_mid > f_hi {
                return Err(contract(&self.name, format!("not monotone near s = {}", fmt12(mid))));
            }
            if f_mid < target {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
                f_hi = f_mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Comparison functions bounding the cascade:
/// `alpha_lower(|x|) <= V(x) <= alpha_upper(|x|)`,
/// `V' <= alpha(V) + beta(V) phi(|lambda|)` and
/// `-xi(|lambda|) - delta(|x|) <= lambda' <= 0`.
#[derive(Clone)]
pub struct ComparisonData {
    pub v: StateFunction,
    pub alpha_lower: ScalarFn,
    pub alpha_upper: ScalarFn,
    pub alpha: ScalarFn,
    pub beta: ScalarFn,
    pub phi: ScalarFn,
    pub delta: ScalarFn,
    pub xi: ScalarFn,
}

impl fmt::Debug for ComparisonData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComparisonData")
            .field("alpha_lower", &self.alpha_lower)
            .field("alpha_upper", &self.alpha_upper)
            .finish_non_exhaustive()
    }
}

/// Scope of a successful [`ComparisonData::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationScope {
    pub s_max: f64,
    pub grid_size: usize,
    pub state_samples: usize,
}

impl ComparisonData {
    /// Checks the sampled class-K contracts on `[0, s_max]` and the sandwich
    /// bound on `V` at `state_samples` seeded points with `|x| <= s_max`.
    pub fn validate(&self, dim: usize, s_max: f64, grid_size: usize, state_samples: usize) -> Result<ValidationScope, RegionError> {
        if !(s_max > 0.0) || grid_size < 2 {
            return Err(RegionError::BadParameter("need s_max > 0 and grid_size >= 2".into()));
        }
        let grid: Vec<f64> = (0..grid_size).map(|i| s_max * i as f64 / (grid_size - 1) as f64).collect();
        for k0 in [&self.phi, &self.delta, &self.xi] {
            k0.check_vanishes()?;
            k0.check_monotone(&grid)?;
        }
        for kinf in [&self.alpha_lower, &self.alpha_upper] {
            kinf.check_vanishes()?;
            kinf.check_monotone(&grid)?;
        }
        if self.alpha.eval(0.0).abs() > 1e-12 {
            return Err(contract(self.alpha.name(), "alpha(0) must vanish"));
        }
        for &s in &grid {
            if self.alpha_lower.eval(s) > self.alpha_upper.eval(s) {
                return Err(contract(self.alpha_lower.name(), format!("exceeds the upper bound at s = {}", fmt12(s))));
            }
            if self.beta.eval(s) < 0.0 {
                return Err(contract(self.beta.name(), format!("negative at s = {}", fmt12(s))));
            }
        }
        let mut rng = sampling::rng(0xc0a5_7a11);
        for _ in 0..state_samples {
            let x = sampling::in_ball(&mut rng, dim, s_max);
            let r = x.norm();
            let v = (self.v)(&x);
            let slack = 1e-12 * (1.0 + v.abs());
            if v < self.alpha_lower.eval(r) - slack || v > self.alpha_upper.eval(r) + slack {
                return Err(contract("V", format!("sandwich bound fails at |x| = {}", fmt12(r))));
            }
        }
        Ok(ValidationScope {
            s_max,
            grid_size,
            state_samples,
        })
    }
}

/// Increasing `psi` with `psi(0) = 0`.
#[derive(Debug, Clone)]
pub enum Psi {
    /// `psi(V) = p sqrt(V)` with the derivative in closed form.
    SqrtFamily(f64),
    /// User function, with an optional derivative; otherwise central differences.
    Custom { psi: ScalarFn, derivative: Option<ScalarFn> },
}

impl Psi {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Psi::SqrtFamily(p) => p * v.max(0.0).sqrt(),
            Psi::Custom { psi, .. } => psi.eval(v),
        }
    }

    /// Derivative at `v > 0`.
    pub fn derivative(&self, v: f64) -> f64 {
        match self {
            Psi::SqrtFamily(p) => p / (2.0 * v.sqrt()),
            Psi::Custom { derivative: Some(d), .. } => d.eval(v),
            Psi::Custom { psi, .. } => {
                // step stays inside (0, 2v)
                let h = v * f64::EPSILON.cbrt();
                (psi.eval(v + h) - psi.eval(v - h)) / (2.0 * h)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition4 {
    /// Largest sampled value of the left-hand side (non-positive up to rounding).
    Holds { max_slack: f64 },
    Violated { v_worst: f64, value: f64 },
}

impl Condition4 {
    pub fn holds(&self) -> bool {
        matches!(self, Condition4::Holds { .. })
    }
}

pub const CONDITION_GRID_FLOOR: f64 = 1e-8;

/// Evaluates
/// `psi'(V) [alpha(V) + beta(V) phi(psi(V))] + delta(alpha_lower^-1(V)) + xi(psi(V))`
/// on `grid_size` logarithmically spaced points of `(1e-8 a, a]`.
///
/// A point counts as satisfied when its value is at most `1e-12` times the sum
/// of the magnitudes of its terms, so exact cancellations are not lost to rounding.
pub fn check_condition4(data: &ComparisonData, psi: &Psi, a: f64, grid_size: usize) -> Result<Condition4, RegionError> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(RegionError::BadParameter(format!("a must be positive, got {a}")));
    }
    if grid_size == 0 {
        return Err(RegionError::BadParameter("grid_size must be positive".into()));
    }
    let lo = (CONDITION_GRID_FLOOR * a).ln();
    let hi = a.ln();
    let mut max_value = f64::NEG_INFINITY;
    let mut worst: Option<(f64, f64)> = None;
    for i in 0..grid_size {
        let v = if grid_size == 1 {
            a
        } else {
            (lo + (hi - lo) * (i + 1) as f64 / grid_size as f64).exp().min(a)
        };
        let psi_v = psi.eval(v);
        let flow = data.alpha.eval(v) + data.beta.eval(v) * data.phi.eval(psi_v);
        let drift = psi.derivative(v) * flow;
        let leak = data.delta.eval(data.alpha_lower.inverse(v)?);
        let growth = data.xi.eval(psi_v);
        let value = drift + leak + growth;
        let scale = drift.abs() + leak.abs() + growth.abs();
        max_value = max_value.max(value);
        if value > 1e-12 * scale && worst.is_none_or(|(_, w)| value > w) {
            worst = Some((v, value));
        }
    }
    Ok(match worst {
        Some((v_worst, value)) => Condition4::Violated { v_worst, value },
        None => Condition4::Holds { max_slack: max_value },
    })
}

/// `{ (x, lambda) : V(x) in [0, a], psi(a) >= lambda >= psi(V(x)) }`.
#[derive(Clone)]
pub struct RegionOmegaA {
    pub a: f64,
    pub psi: Psi,
    pub v: StateFunction,
}

impl fmt::Debug for RegionOmegaA {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegionOmegaA").field("a", &self.a).field("psi", &self.psi).finish()
    }
}

impl RegionOmegaA {
    /// Checks that `psi` vanishes at 0 and increases strictly on a 1000-point grid of `(0, a]`.
    pub fn new(a: f64, psi: Psi, v: StateFunction) -> Result<Self, RegionError> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(RegionError::BadParameter(format!("a must be positive, got {a}")));
        }
        if psi.eval(0.0).abs() > 1e-12 {
            return Err(contract("psi", "psi(0) must vanish"));
        }
        let mut prev = 0.0;
        for i in 1..=1000 {
            let s = a * i as f64 / 1000.0;
            let cur = psi.eval(s);
            if !(cur > prev) {
                return Err(contract("psi", format!("not strictly increasing near V = {}", fmt12(s))));
            }
            prev = cur;
        }
        Ok(Self { a, psi, v })
    }

    pub fn top(&self) -> f64 {
        self.psi.eval(self.a)
    }

    pub fn contains(&self, x: &DVector<f64>, lambda: f64) -> bool {
        omega_membership(x, lambda, self)
    }

    /// Membership with every inequality relaxed by `slack`.
    pub fn contains_within(&self, x: &DVector<f64>, lambda: f64, slack: f64) -> bool {
        let v = (self.v)(x);
        v >= -slack && v <= self.a + slack && lambda <= self.top() + slack && lambda >= self.psi.eval(v) - slack
    }
}

pub fn omega_membership(x: &DVector<f64>, lambda: f64, region: &RegionOmegaA) -> bool {
    let v = (region.v)(x);
    (0.0..=region.a).contains(&v) && region.top() >= lambda && lambda >= region.psi.eval(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub index: usize,
    pub start: DVector<f64>,
    pub stayed: bool,
    pub first_violation: Option<(f64, DVector<f64>)>,
    /// Integrator failure message, if any; such samples count as not staying.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub outcomes: Vec<SampleOutcome>,
    pub stay_count: usize,
    pub horizon: f64,
    pub margin: f64,
}

impl InvarianceReport {
    pub fn escapes(&self) -> impl Iterator<Item = &SampleOutcome> + '_ {
        self.outcomes.iter().filter(|o| !o.stayed)
    }

    /// CSV with columns `sample,status,first_violation_time`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,status,first_violation_time\n");
        for o in &self.outcomes {
            let status = match (&o.failure, o.stayed) {
                (Some(_), _) => "failed",
                (None, true) => "stayed",
                (None, false) => "escaped",
            };
            let time = o.first_violation.as_ref().map(|(t, _)| fmt12(*t)).unwrap_or_default();
            let _ = writeln!(out, "{},{status},{time}", o.index);
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "samples = {}\nstay_count = {}\nescape_count = {}\nhorizon = {}\nmargin = {}\n",
            self.outcomes.len(),
            self.stay_count,
            self.outcomes.len() - self.stay_count,
            fmt12(self.horizon),
            fmt12(self.margin)
        )
    }
}

/// Largest `r` with `V(r d) <= a`, by bisection along the ray.
fn ray_extent(region: &RegionOmegaA, direction: &DVector<f64>) -> f64 {
    let mut hi = 1.0;
    let mut guard = 0;
    while (region.v)(&(direction * hi)) < region.a && guard < 200 {
        hi *= 2.0;
        guard += 1;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (region.v)(&(direction * mid)) <= region.a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Starts on and inside the boundary of the region: cycling through the lower
/// face `lambda = psi(V)`, the top face `lambda = psi(a)` and the interior.
pub fn boundary_starts(region: &RegionOmegaA, n: usize, count: usize, seed: u64) -> Vec<(DVector<f64>, f64)> {
    let mut rng = sampling::rng(seed);
    (0..count)
        .map(|i| {
            let d = sampling::unit_direction(&mut rng, n);
            let u: f64 = rand::Rng::random(&mut rng);
            let x = &d * (ray_extent(region, &d) * u);
            let low = region.psi.eval((region.v)(&x));
            let lambda = match i % 3 {
                0 => low,
                1 => region.top(),
                _ => low + (region.top() - low) * rand::Rng::random::<f64>(&mut rng),
            };
            (x, lambda)
        })
        .collect()
}

/// Integrates from seeded starts on and inside the region and checks
/// membership at every logged sample with slack `margin * (1 + |state|)`.
///
/// `margin` defaults to ten times the integrator tolerance.
pub fn verify_forward_invariance(
    system: &CascadeSystem,
    region: &RegionOmegaA,
    boundary_samples: usize,
    horizon: f64,
    margin: Option<f64>,
    config: &IntegratorConfig,
    seed: u64,
) -> Result<InvarianceReport, RegionError> {
    if !(horizon > 0.0) {
        return Err(RegionError::BadParameter(format!("horizon must be positive, got {horizon}")));
    }
    let margin = margin.unwrap_or(10.0 * config.tolerance());
    let n = system.n();
    let field = system.time_field();
    let outcomes: Vec<SampleOutcome> = boundary_starts(region, n, boundary_samples, seed)
        .into_iter()
        .enumerate()
        .map(|(index, (x, lambda))| {
            let mut start = DVector::zeros(n + 1);
            start.rows_mut(0, n).copy_from(&x);
            start[n] = lambda;
            let (traj, failure) = match integrate(|t, z| field(t, z), &start, 0.0, horizon, config, &[]) {
                Ok(traj) => (Some(traj), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let first_violation = traj.as_ref().and_then(|traj| {
                traj.times.iter().zip(&traj.states).find_map(|(t, z)| {
                    let (x, lambda) = CascadeSystem::split(z);
                    let slack = margin * (1.0 + z.norm());
                    (!region.contains_within(&x, lambda, slack)).then(|| (*t, z.clone()))
                })
            });
            SampleOutcome {
                index,
                start,
                stayed: failure.is_none() && first_violation.is_none(),
                first_violation,
                failure,
            }
        })
        .collect();
    let stay_count = outcomes.iter().filter(|o| o.stayed).count();
    Ok(InvarianceReport {
        outcomes,
        stay_count,
        horizon,
        margin,
    })
}

pub const MIN_TAIL_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitReport {
    /// Mean of `lambda` over the tail window.
    pub lambda_limit: f64,
    pub monotone: bool,
    /// Largest increase of `lambda` between consecutive samples.
    pub max_increase: f64,
    /// Whether the limit lies in `[0, psi(a)]` up to `monotone_tol`.
    pub limit_in_range: bool,
    /// Largest `|g(x(t), lambda_limit, t)|` over the tail.
    pub g_residual: f64,
    pub tail_samples: usize,
}

/// Checks that `lambda` (the last state component) is non-increasing up to
/// `monotone_tol` and estimates its limit from the last `tail_fraction` of the run.
pub fn verify_limit_properties(
    traj: &Trajectory,
    system: &CascadeSystem,
    psi_a: f64,
    tail_fraction: f64,
    monotone_tol: f64,
) -> Result<LimitReport, RegionError> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(RegionError::BadParameter(format!("tail_fraction must lie in (0, 1], got {tail_fraction}")));
    }
    let n = system.n();
    if traj.dim() != n + 1 {
        return Err(RegionError::BadParameter(format!(
            "trajectory has dimension {}, system expects {}",
            traj.dim(),
            n + 1
        )));
    }
    let t_start = traj.end_time() - tail_fraction * (traj.end_time() - traj.times[0]);
    let first = traj.times.partition_point(|&t| t < t_start);
    let tail = traj.len() - first;
    if tail < MIN_TAIL_SAMPLES {
        return Err(RegionError::ShortTrajectory {
            have: tail,
            need: MIN_TAIL_SAMPLES,
        });
    }
    let lambdas = traj.component(n);
    let max_increase = lambdas.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
    // offsets from the first tail value keep a constant tail exact
    let base = lambdas[first];
    let lambda_limit = base + lambdas[first..].iter().map(|l| l - base).sum::<f64>() / tail as f64;
    let g_residual = (first..traj.len())
        .map(|i| {
            let (x, _) = CascadeSystem::split(&traj.states[i]);
            system.g(&x, lambda_limit, traj.times[i]).abs()
        })
        .fold(0.0f64, f64::max);
    Ok(LimitReport {
        lambda_limit,
        monotone: max_increase <= monotone_tol,
        max_increase,
        limit_in_range: lambda_limit >= -monotone_tol && lambda_limit <= psi_a + monotone_tol,
        g_residual,
        tail_samples: tail,
    })
}
