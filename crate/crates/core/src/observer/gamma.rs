use nalgebra::DVector;

use super::{simulate_observer, ObserverError, ObserverSystem};
use crate::ode::IntegratorConfig;
use crate::report::KeyValueReport;

const RELATIVE_TOL: f64 = 1e-3;
const MAX_HALVINGS: usize = 40;
/// Fractions of the result re-checked to expose a non-monotone predicate.
const PROBE_FRACTIONS: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCriteria {
    pub horizon: f64,
    /// Bound on the sup norm of `(x1, x2)` over the horizon.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSearchReport {
    pub gamma_star: f64,
    pub gamma_max: f64,
    /// Every evaluated `gamma` with its verdict, in evaluation order.
    pub probes: Vec<(f64, bool)>,
    /// A passing `gamma` was seen above a failing one.
    pub non_monotone: bool,
}

impl GammaSearchReport {
    pub const ASSUMPTION: &'static str = "pass/fail is monotone in gamma";

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.num("gamma_star", self.gamma_star)
            .num("gamma_max", self.gamma_max)
            .text("probes", self.probes.len().to_string())
            .text("assumption", Self::ASSUMPTION)
            .text("non_monotone", self.non_monotone.to_string());
        r
    }
}

fn passes(
    template: &ObserverSystem,
    gamma: f64,
    x0: &DVector<f64>,
    criteria: &GammaCriteria,
    config: &IntegratorConfig,
) -> Result<bool, ObserverError> {
    let system = template.with_gamma(gamma)?;
    let n = system.k() + system.m();
    // Blow-up and step exhaustion count as failure of the boundedness criterion.
    let Ok(traj) = simulate_observer(&system, x0, config, criteria.horizon) else {
        return Ok(false);
    };
    Ok(traj.end_time() >= criteria.horizon
        && traj
            .states
            .iter()
            .all(|s| s.rows(0, n).norm() <= criteria.bound && s[n] > 0.0))
}

/// Largest `gamma` in `(0, gamma_max]` whose run stays within `criteria.bound`
/// with `lambda > 0`, by bisection to relative tolerance `1e-3`.
pub fn gamma_search(
    template: &ObserverSystem,
    x0: &DVector<f64>,
    gamma_max: f64,
    criteria: &GammaCriteria,
    config: &IntegratorConfig,
) -> Result<GammaSearchReport, ObserverError> {
    if !(gamma_max > 0.0 && gamma_max.is_finite()) || !(criteria.horizon > 0.0) {
        return Err(ObserverError::Invalid(format!(
            "need gamma_max > 0 and horizon > 0, got {gamma_max} and {}",
            criteria.horizon
        )));
    }
    if x0.norm() > criteria.bound {
        return Err(ObserverError::SearchFailure {
            gamma_max,
            reason: format!("|x0| = {} already exceeds the bound {}", x0.norm(), criteria.bound),
        });
    }
    if template.lambda0() <= 0.0 {
        return Err(ObserverError::SearchFailure {
            gamma_max,
            reason: "lambda0 must be positive".into(),
        });
    }
    let mut probes = Vec::new();
    let probe = |g: f64, probes: &mut Vec<(f64, bool)>| -> Result<bool, ObserverError> {
        let ok = passes(template, g, x0, criteria, config)?;
        probes.push((g, ok));
        Ok(ok)
    };

    let gamma_star = if probe(gamma_max, &mut probes)? {
        gamma_max
    } else {
        let mut lo = None;
        let mut g = gamma_max;
        for _ in 0..MAX_HALVINGS {
            g *= 0.5;
            if probe(g, &mut probes)? {
                lo = Some(g);
                break;
            }
        }
        let Some(mut lo) = lo else {
            return Err(ObserverError::SearchFailure {
                gamma_max,
                reason: format!("no passing gamma down to {g}"),
            });
        };
        let mut hi = 2.0 * lo;
        while hi - lo > RELATIVE_TOL * lo {
            let mid = 0.5 * (lo + hi);
            if probe(mid, &mut probes)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    for f in PROBE_FRACTIONS {
        probe(f * gamma_star, &mut probes)?;
    }
    let lowest_fail = probes.iter().filter(|p| !p.1).map(|p| p.0).fold(f64::INFINITY, f64::min);
    let non_monotone = probes.iter().any(|p| p.1 && p.0 > lowest_fail);
    Ok(GammaSearchReport {
        gamma_star,
        gamma_max,
        probes,
        non_monotone,
    })
}
