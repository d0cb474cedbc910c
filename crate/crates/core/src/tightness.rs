//! The planar cascade `x1' = -tau1 x1 + c1 x2`, `x2' = -c2 |x1|`, whose origin
//! attracts a cone of initial conditions exactly when `c2 <= tau1^2 / (4 c1)`.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{dvector, DVector};
use thiserror::Error;

use crate::ode::{integrate, EventKind, EventSpec, IntegrationError, IntegratorConfig, Trajectory};
use crate::region::{ComparisonData, Monotonicity, Psi, RegionError, RegionOmegaA, ScalarFn};
use crate::report::fmt12;
use crate::system::CascadeSystem;

pub const DEFAULT_HORIZON: f64 = 500.0;
pub const DEFAULT_CONV_NORM: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TightnessError {
    #[error("parameters must be positive and finite: {0}")]
    BadParameter(String),
    #[error("bracket [{lo}, {hi}] does not separate outcomes: {lo_verdict} at the lower end, {hi_verdict} at the upper end")]
    Bracket {
        lo: f64,
        hi: f64,
        lo_verdict: Verdict,
        hi_verdict: Verdict,
    },
}

fn check_positive(pairs: &[(&str, f64)]) -> Result<(), TightnessError> {
    for (name, v) in pairs {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(TightnessError::BadParameter(format!("{name} = {v}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example1Params {
    pub tau1: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Example1Params {
    pub fn new(tau1: f64, c1: f64, c2: f64) -> Result<Self, TightnessError> {
        check_positive(&[("tau1", tau1), ("c1", c1), ("c2", c2)])?;
        Ok(Self { tau1, c1, c2 })
    }

    pub fn field(&self) -> impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + Clone + 'static {
        let Self { tau1, c1, c2 } = *self;
        move |_t, z| dvector![-tau1 * z[0] + c1 * z[1], -c2 * z[0].abs()]
    }

    pub fn cascade(&self) -> CascadeSystem {
        let Self { tau1, c1, c2 } = *self;
        CascadeSystem::new(1, move |x, l, _| x * -tau1 + dvector![c1 * l], move |x, _, _| -c2 * x[0].abs())
            .expect("origin is an equilibrium")
    }

    /// Comparison data with `V = x1^2`: `alpha(V) = -2 tau1 V`,
    /// `beta(V) = 2 c1 sqrt(V)`, `phi = id`, `delta(s) = c2 s`, `xi = 0`.
    pub fn comparison_data(&self) -> ComparisonData {
        let Self { tau1, c1, c2 } = *self;
        ComparisonData {
            v: Arc::new(|x: &DVector<f64>| x.norm_squared()),
            alpha_lower: ScalarFn::new("alpha_lower", Monotonicity::Increasing, |s| s * s),
            alpha_upper: ScalarFn::new("alpha_upper", Monotonicity::Increasing, |s| s * s),
            alpha: ScalarFn::new("alpha", Monotonicity::Unspecified, move |v| -2.0 * tau1 * v),
            beta: ScalarFn::new("beta", Monotonicity::NonDecreasing, move |v| 2.0 * c1 * v.max(0.0).sqrt()),
            phi: ScalarFn::new("phi", Monotonicity::Increasing, |s| s),
            delta: ScalarFn::new("delta", Monotonicity::Increasing, move |s| c2 * s),
            xi: ScalarFn::zero("xi"),
        }
    }
}

/// Largest `c2` for which the cone attracts: `tau1^2 / (4 c1)`.
pub fn example_threshold(tau1: f64, c1: f64) -> f64 {
    tau1 * tau1 / (4.0 * c1)
}

/// Sufficient bound from the earlier density-type argument: `tau1^2 / (16 c1)`.
pub fn comparison_bound(tau1: f64, c1: f64) -> f64 {
    tau1 * tau1 / (16.0 * c1)
}

pub fn comparison_ratio(tau1: f64, c1: f64) -> f64 {
    comparison_bound(tau1, c1) / example_threshold(tau1, c1)
}

/// Coefficient of `sqrt(V)` in the invariance condition for `psi(V) = p sqrt(V)`.
pub fn condition_coefficient(params: &Example1Params, p: f64) -> f64 {
    -p * params.tau1 + params.c1 * p * p + params.c2
}

/// The cone `x2 >= slope |x1|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleCone {
    pub slope: f64,
}

impl ExampleCone {
    pub fn contains(&self, x1: f64, x2: f64) -> bool {
        x2 >= self.slope * x1.abs()
    }

    /// The cone capped at `x2 <= cap`, as a region with `V = x1^2` and `psi(V) = slope sqrt(V)`.
    pub fn capped(&self, cap: f64) -> Result<RegionOmegaA, RegionError> {
        let a = (cap / self.slope).powi(2);
        RegionOmegaA::new(a, Psi::SqrtFamily(self.slope), Arc::new(|x: &DVector<f64>| x.norm_squared()))
    }
}

/// Cone with the slope `tau1 / (2 c1)` that maximizes the admissible `c2`.
pub fn example_cone(tau1: f64, c1: f64) -> ExampleCone {
    ExampleCone {
        slope: tau1 / (2.0 * c1),
    }
}

/// Roots of `s^2 + tau1 s + c1 c2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AuxRoots {
    Real(f64, f64),
    Complex { re: f64, im: f64 },
}

impl AuxRoots {
    pub fn is_real(&self) -> bool {
        matches!(self, AuxRoots::Real(..))
    }
}

pub fn aux_characteristic_roots(tau1: f64, c1: f64, c2: f64) -> AuxRoots {
    let disc = tau1 * tau1 - 4.0 * c1 * c2;
    if disc >= 0.0 {
        let r = disc.sqrt();
        AuxRoots::Real((-tau1 - r) / 2.0, (-tau1 + r) / 2.0)
    } else {
        AuxRoots::Complex {
            re: -tau1 / 2.0,
            im: (-disc).sqrt() / 2.0,
        }
    }
}

/// Adaptive integration with a purely relative error control in practice.
///
/// The field is positively homogeneous, and just above the threshold the
/// decisive sign change of `x2` happens at norms far below any fixed absolute
/// tolerance.
pub fn example_integrator() -> IntegratorConfig {
    IntegratorConfig::rk45(1e-9, 1e-300)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Converges,
    Escapes,
    Undecided,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Converges => "converges",
            Verdict::Escapes => "escapes",
            Verdict::Undecided => "undecided",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub verdict: Verdict,
    pub norm_min: f64,
    /// Sign changes of `x2` plus an initial negative `x2`, if any.
    pub alternations: usize,
    pub decision_time: f64,
    pub diagnostic: Option<String>,
}

/// Integrates the example over `[0, horizon]`, recording sign changes of `x2`,
/// a negative `x2` and the norm dropping below `conv_norm`, and halting once
/// the norm exceeds `1e3 * max(1, |x0|)`.
pub fn simulate_example(
    params: &Example1Params,
    x0: &DVector<f64>,
    config: &IntegratorConfig,
    horizon: f64,
    conv_norm: f64,
) -> Result<Trajectory, IntegrationError> {
    let events = [
        EventSpec::record(EventKind::SignAlternation { component: 1 }),
        EventSpec::record(EventKind::ComponentNegative { component: 1 }),
        EventSpec::record(EventKind::NormBelow { threshold: conv_norm }),
        EventSpec::halt(EventKind::BallEscape {
            center: DVector::zeros(2),
            radius: 1e3 * x0.norm().max(1.0),
        }),
    ];
    integrate(params.field(), x0, 0.0, horizon, config, &events)
}

/// Converges: the norm fell below `conv_norm` and `x2` never changed sign or
/// went negative. Escapes: `x2` changed sign or went negative and the norm
/// later exceeded `10 * conv_norm`. Undecided otherwise.
pub fn classify_trajectory(traj: &Trajectory, conv_norm: f64) -> ClassificationResult {
    let norms = traj.norms();
    let norm_min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sign_events: Vec<f64> = traj
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::SignAlternation { .. } | EventKind::ComponentNegative { .. }))
        .map(|e| e.time)
        .collect();
    sign_events.sort_by(f64::total_cmp);
    let alternations = traj.events_of("sign-alternation").count()
        + usize::from(traj.states[0][1] < 0.0);
    let below = traj.events_of("norm-below").next().map(|e| e.time);

    let (verdict, decision_time) = match (sign_events.first(), below) {
        (None, Some(t)) => (Verdict::Converges, t),
        (Some(&t_sign), _) => {
            let growth = traj
                .times
                .iter()
                .zip(&norms)
                .find(|(t, n)| **t >= t_sign && **n > 10.0 * conv_norm)
                .map(|(t, _)| *t);
            match growth {
                Some(t) => (Verdict::Escapes, t),
                None => (Verdict::Undecided, traj.end_time()),
            }
        }
        (None, None) => (Verdict::Undecided, traj.end_time()),
    };
    ClassificationResult {
        verdict,
        norm_min,
        alternations,
        decision_time,
        diagnostic: None,
    }
}

pub fn classify_by_simulation(
    params: &Example1Params,
    x0: &DVector<f64>,
    config: &IntegratorConfig,
    horizon: f64,
    conv_norm: f64,
) -> ClassificationResult {
    match simulate_example(params, x0, config, horizon, conv_norm) {
        Ok(traj) => classify_trajectory(&traj, conv_norm),
        Err(e) => ClassificationResult {
            verdict: Verdict::Undecided,
            norm_min: f64::NAN,
            alternations: 0,
            decision_time: e.last_valid().map(|(t, _)| t).unwrap_or(0.0),
            diagnostic: Some(e.to_string()),
        },
    }
}

/// Classification used by the threshold search: an undecided run is repeated
/// once with twice the horizon and then counted as an escape.
fn decisive_verdict(
    params: &Example1Params,
    x0: &DVector<f64>,
    config: &IntegratorConfig,
    horizon: f64,
    conv_norm: f64,
) -> Verdict {
    match classify_by_simulation(params, x0, config, horizon, conv_norm).verdict {
        Verdict::Undecided => match classify_by_simulation(params, x0, config, 2.0 * horizon, conv_norm).verdict {
            Verdict::Converges => Verdict::Converges,
            _ => Verdict::Escapes,
        },
        v => v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSearch {
    pub horizon: f64,
    pub conv_norm: f64,
}

impl Default for ThresholdSearch {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            conv_norm: DEFAULT_CONV_NORM,
        }
    }
}

/// Bisection on `c2` over `[0.5, 1.5]` times the analytic threshold, returning
/// the midpoint of the final bracket.
pub fn empirical_threshold(
    tau1: f64,
    c1: f64,
    x0: &DVector<f64>,
    bisect_tol: f64,
    config: &IntegratorConfig,
    search: &ThresholdSearch,
) -> Result<f64, TightnessError> {
    check_positive(&[("tau1", tau1), ("c1", c1), ("bisect_tol", bisect_tol)])?;
    let analytic = example_threshold(tau1, c1);
    let (mut lo, mut hi) = (0.5 * analytic, 1.5 * analytic);
    if bisect_tol >= hi - lo {
        return Ok(0.5 * (lo + hi));
    }
    let verdict_at = |c2: f64| {
        let params = Example1Params { tau1, c1, c2 };
        decisive_verdict(&params, x0, config, search.horizon, search.conv_norm)
    };
    let (lo_verdict, hi_verdict) = (verdict_at(lo), verdict_at(hi));
    if lo_verdict != Verdict::Converges || hi_verdict != Verdict::Escapes {
        return Err(TightnessError::Bracket {
            lo,
            hi,
            lo_verdict,
            hi_verdict,
        });
    }
    while hi - lo > bisect_tol {
        let mid = 0.5 * (lo + hi);
        if verdict_at(mid) == Verdict::Converges {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `count` evenly spaced starts on the line `x2 = height` with `x1` in
/// `[-width, width]`, keeping those inside the cone.
pub fn line_starts(cone: &ExampleCone, height: f64, width: f64, count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|i| {
            let x1 = if count == 1 { 0.0 } else { -width + 2.0 * width * i as f64 / (count - 1) as f64 };
            dvector![x1, height]
        })
        .filter(|x| cone.contains(x[0], x[1]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub x0: DVector<f64>,
    pub c2: f64,
    pub result: ClassificationResult,
    pub trajectory: Option<Trajectory>,
}

/// Simulates and classifies every start, keeping the trajectories for plotting.
pub fn sweep(
    params: &Example1Params,
    starts: &[DVector<f64>],
    config: &IntegratorConfig,
    horizon: f64,
    conv_norm: f64,
) -> Vec<SweepRow> {
    starts
        .iter()
        .map(|x0| match simulate_example(params, x0, config, horizon, conv_norm) {
            Ok(traj) => SweepRow {
                x0: x0.clone(),
                c2: params.c2,
                result: classify_trajectory(&traj, conv_norm),
                trajectory: Some(traj),
            },
            Err(_) => SweepRow {
                x0: x0.clone(),
                c2: params.c2,
                result: classify_by_simulation(params, x0, config, horizon, conv_norm),
                trajectory: None,
            },
        })
        .collect()
}

/// CSV with columns `x1_0,x2_0,c2,verdict,alternations,decision_time`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("x1_0,x2_0,c2,verdict,alternations,decision_time\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt12(r.x0[0]),
            fmt12(r.x0[1]),
            fmt12(r.c2),
            r.result.verdict,
            r.result.alternations,
            fmt12(r.result.decision_time)
        );
    }
    out
}
