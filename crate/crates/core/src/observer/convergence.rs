use nalgebra::{DMatrix, DVector};

use super::{extended_regressor, ObserverError, ObserverSystem};
use crate::ode::Trajectory;
use crate::report::KeyValueReport;

/// Samples required past the earliest anchor and after the transient.
pub const MIN_TAIL_SAMPLES: usize = 100;
/// Fraction of the horizon treated as the tail when judging convergence of
/// an L2 norm, and the share of the squared norm it may carry.
const TAIL_WINDOW: f64 = 0.1;
const TAIL_SHARE: f64 = 0.01;

/// Suffix sup-norm and suffix L2 norm (trapezoid on the logged grid) of a
/// sampled signal given by its pointwise norms.
fn tails(times: &[f64], norms: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = norms.len();
    let mut sup = vec![0.0; n];
    let mut sq = vec![0.0; n];
    let mut running = 0.0f64;
    for i in (0..n).rev() {
        running = running.max(norms[i]);
        sup[i] = running;
        if i + 1 < n {
            let dt = times[i + 1] - times[i];
            sq[i] = sq[i + 1] + 0.5 * dt * (norms[i] * norms[i] + norms[i + 1] * norms[i + 1]);
        }
    }
    (sup, sq.into_iter().map(f64::sqrt).collect())
}

/// Whether the squared L2 norm over the final part of the horizon is a
/// negligible share of the whole.
fn tail_converges(times: &[f64], l2: &[f64]) -> bool {
    let total = l2[0] * l2[0];
    if total == 0.0 {
        return true;
    }
    let cut = times[times.len() - 1] - TAIL_WINDOW * (times[times.len() - 1] - times[0]);
    let start = times.partition_point(|&t| t < cut);
    let last = l2[start.min(l2.len() - 1)];
    last * last <= TAIL_SHARE * total
}

fn split_norms(traj: &Trajectory, k: usize) -> (Vec<f64>, Vec<f64>) {
    traj.states
        .iter()
        .map(|s| (s.rows(0, k).norm(), s.rows(k, s.len() - k).norm()))
        .unzip()
}

/// Smallest constants satisfying the four tail bounds on the logged grid,
/// each normalized by `|x1(t)| + |q(t)|` with `q` the state past index `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct C1C4Report {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub anchors: usize,
    pub x1_tail_converges: bool,
    pub q_tail_converges: bool,
    pub all_hold: bool,
}

impl C1C4Report {
    /// Constant for the full state implied by the four bounds.
    pub fn lemma_constant(&self) -> f64 {
        std::f64::consts::SQRT_2 * (self.c1 + self.c2).max(self.c3.hypot(self.c4))
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.num("c1", self.c1)
            .num("c2", self.c2)
            .num("c3", self.c3)
            .num("c4", self.c4)
            .text("anchors", self.anchors.to_string())
            .text("x1_tail_converges", self.x1_tail_converges.to_string())
            .text("q_tail_converges", self.q_tail_converges.to_string())
            .text("all_hold", self.all_hold.to_string());
        r
    }
}

pub fn check_c1_c4(traj: &Trajectory, k: usize) -> Result<C1C4Report, ObserverError> {
    let n = traj.len();
    if n <= MIN_TAIL_SAMPLES {
        return Err(ObserverError::InsufficientData(format!(
            "{n} samples, need more than {MIN_TAIL_SAMPLES}"
        )));
    }
    if k == 0 || k >= traj.dim() {
        return Err(ObserverError::Invalid(format!("split index {k} outside 1..{}", traj.dim())));
    }
    let (x1, q) = split_norms(traj, k);
    let (x1_sup, x1_l2) = tails(&traj.times, &x1);
    let (q_sup, q_l2) = tails(&traj.times, &q);
    let anchors = n - MIN_TAIL_SAMPLES;
    let mut c = [0.0f64; 4];
    for i in 0..anchors {
        let scale = x1[i] + q[i];
        for (slot, tail) in c.iter_mut().zip([x1_sup[i], q_sup[i], x1_l2[i], q_l2[i]]) {
            let ratio = if scale > 0.0 {
                tail / scale
            } else if tail > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            *slot = slot.max(ratio);
        }
    }
    let x1_tail_converges = tail_converges(&traj.times, &x1_l2);
    let q_tail_converges = tail_converges(&traj.times, &q_l2);
    Ok(C1C4Report {
        c1: c[0],
        c2: c[1],
        c3: c[2],
        c4: c[3],
        anchors,
        x1_tail_converges,
        q_tail_converges,
        all_hold: c.iter().all(|x| x.is_finite()) && x1_tail_converges && q_tail_converges,
    })
}

/// Whether `|x(t)| <= c e^(1/2) e^(-(t - t1) / (2 c^2)) |x(t1)|` for every
/// logged `t >= t1`, with `t1` running over every 10th sample.
pub fn lemma1_bound_check(traj: &Trajectory, c: f64) -> bool {
    if !(c > 0.0 && c.is_finite()) {
        return false;
    }
    let norms = traj.norms();
    let slack = 1.0 + 1e-9;
    let rate = 1.0 / (2.0 * c * c);
    let lead = c * 0.5f64.exp() * slack;
    (0..norms.len()).step_by(10).all(|i| {
        let t1 = traj.times[i];
        (i..norms.len()).all(|j| norms[j] <= lead * (-(traj.times[j] - t1) * rate).exp() * norms[i])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpRateReport {
    pub fitted_rate: f64,
    pub fit_quality: f64,
    /// Smallest `c` with both tail norms of the state bounded by `c |x(t)|` on the logged grid.
    pub c_fit: f64,
    pub lemma1_holds: bool,
    pub samples: usize,
}

impl ExpRateReport {
    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.num("fitted_rate", self.fitted_rate)
            .num("fit_quality", self.fit_quality)
            .num("c_fit", self.c_fit)
            .text("lemma1_holds", self.lemma1_holds.to_string())
            .text("samples", self.samples.to_string());
        r
    }
}

/// Least-squares fit of `log |x(t)|` against `t` past `t0 + transient_skip`.
pub fn fit_exponential_rate(traj: &Trajectory, transient_skip: f64) -> Result<ExpRateReport, ObserverError> {
    let norms = traj.norms();
    let cut = traj.times[0] + transient_skip;
    let (ts, logs): (Vec<f64>, Vec<f64>) = traj
        .times
        .iter()
        .zip(&norms)
        .filter(|(&t, &x)| t >= cut && x > 0.0)
        .map(|(&t, &x)| (t, x.ln()))
        .unzip();
    if ts.len() < MIN_TAIL_SAMPLES {
        return Err(ObserverError::InsufficientData(format!(
            "{} positive-norm samples after the transient, need {MIN_TAIL_SAMPLES}",
            ts.len()
        )));
    }
    let count = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / count;
    let y_mean = logs.iter().sum::<f64>() / count;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in ts.iter().zip(&logs) {
        sxy += (t - t_mean) * (y - y_mean);
        sxx += (t - t_mean) * (t - t_mean);
        syy += (y - y_mean) * (y - y_mean);
    }
    let slope = sxy / sxx;
    let residual: f64 = ts
        .iter()
        .zip(&logs)
        .map(|(t, y)| {
            let e = y - (y_mean + slope * (t - t_mean));
            e * e
        })
        .sum();
    let fit_quality = if syy > 0.0 { (1.0 - residual / syy).clamp(0.0, 1.0) } else { 1.0 };

    let (sup, l2) = tails(&traj.times, &norms);
    let c_fit = norms
        .iter()
        .zip(sup.iter().zip(&l2))
        .filter(|(&x, _)| x > 0.0)
        .map(|(&x, (&s, &q))| s.max(q) / x)
        .fold(0.0f64, f64::max);
    Ok(ExpRateReport {
        fitted_rate: -slope,
        fit_quality,
        c_fit,
        lemma1_holds: lemma1_bound_check(traj, c_fit),
        samples: ts.len(),
    })
}

/// `|q - phibar(t) b^T x1|` at every logged sample, with `q = (x2, lambda)`.
pub fn auxiliary_z_norms(system: &ObserverSystem, traj: &Trajectory) -> Vec<f64> {
    let (k, m) = (system.k(), system.m());
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| {
            let lambda = s[k + m];
            let regressor = extended_regressor(system, move |_| lambda)(t);
            let drive = system.params().b.dot(&s.rows(0, k));
            let q: DVector<f64> = s.rows(k, m + 1).clone_owned();
            (q - regressor * drive).norm()
        })
        .collect()
}

/// Largest increase of the observer Lyapunov function between consecutive samples.
pub fn lyapunov_increase(system: &ObserverSystem, p: &DMatrix<f64>, traj: &Trajectory) -> f64 {
    let values: Vec<f64> = traj.states.iter().map(|s| system.lyapunov_function(p, s)).collect();
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::IntegratorConfig;
    use crate::observer::{construct_mky, simulate_observer};
    use nalgebra::dvector;

    fn synthetic(f: impl Fn(f64) -> DVector<f64>, tf: f64, n: usize) -> Trajectory {
        let times: Vec<f64> = (0..n).map(|i| tf * i as f64 / (n - 1) as f64).collect();
        let states = times.iter().map(|&t| f(t)).collect();
        Trajectory::from_samples(times, states)
    }

    #[test]
    fn exponential_tails_match_closed_form() {
        let traj = synthetic(|t| dvector![1.0, 1.0, 1.0] * (-t).exp(), 20.0, 20001);
        let (_, l2) = tails(&traj.times, &traj.norms());
        for i in [0usize, 5000, 10000] {
            let t = traj.times[i];
            let exact = (-t).exp() * (1.5f64).sqrt() * (1.0 - (-2.0 * (20.0 - t)).exp()).sqrt();
            assert!((l2[i] - exact).abs() < 1e-6 * exact, "t={t}");
        }
        let report = check_c1_c4(&traj, 1).unwrap();
        assert!(report.all_hold);
        // sup tails are attained at the anchor: x1 share 1/(1+sqrt 2), q share sqrt 2/(1+sqrt 2)
        let s2 = std::f64::consts::SQRT_2;
        assert!((report.c1 - 1.0 / (1.0 + s2)).abs() < 1e-9);
        assert!((report.c2 - s2 / (1.0 + s2)).abs() < 1e-9);
        assert!((report.c3 - (0.5f64).sqrt() / (1.0 + s2)).abs() < 1e-6);
    }

    #[test]
    fn constant_state_has_divergent_tail() {
        let traj = synthetic(|_| dvector![1.0, 2.0], 50.0, 1000);
        let report = check_c1_c4(&traj, 1).unwrap();
        assert!(!report.all_hold);
        assert!(!report.x1_tail_converges);
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let traj = synthetic(|t| dvector![(-t).exp(), 0.0], 1.0, 50);
        assert!(matches!(check_c1_c4(&traj, 1), Err(ObserverError::InsufficientData(_))));
        assert!(fit_exponential_rate(&traj, 0.0).is_err());
    }

    #[test]
    fn lemma_bound_examples() {
        let decay = synthetic(|t| dvector![(-t).exp()], 30.0, 3001);
        assert!(lemma1_bound_check(&decay, 1.0));
        let flat = synthetic(|_| dvector![1.0], 100.0, 1001);
        assert!(!lemma1_bound_check(&flat, 3.0));
        assert!(!lemma1_bound_check(&decay, 0.0));
    }

    #[test]
    fn rate_fit_examples() {
        let pure = synthetic(|t| dvector![(-0.5 * t).exp()], 40.0, 2001);
        let r = fit_exponential_rate(&pure, 0.0).unwrap();
        assert!((r.fitted_rate - 0.5).abs() < 1e-6);
        assert!(r.fit_quality > 0.9999);
        assert!(r.lemma1_holds);

        let mut previous = 0.0;
        for tf in [20.0, 80.0, 320.0] {
            let skewed = synthetic(|t| dvector![(t + 1e-3) * (-t).exp()], tf, 4001);
            let r = fit_exponential_rate(&skewed, 1.0).unwrap();
            assert!(r.fit_quality < 1.0);
            assert!(r.fitted_rate > previous && r.fitted_rate < 1.0);
            previous = r.fitted_rate;
        }
        assert!(previous > 0.98);
    }

    #[test]
    fn z_vanishes_when_the_state_does() {
        let sys = ObserverSystem::scalar_example(0.05, 0.0, 0.0).unwrap();
        let traj = simulate_observer(&sys, &dvector![0.0, 0.0], &IntegratorConfig::default(), 5.0).unwrap();
        assert!(auxiliary_z_norms(&sys, &traj).iter().all(|&z| z == 0.0));
    }

    #[test]
    fn lyapunov_function_does_not_grow() {
        let sys = ObserverSystem::scalar_example(0.05, 1.0, 0.0).unwrap();
        let (p, _, _) = construct_mky(&sys.params().a, &sys.params().b).unwrap();
        let traj = simulate_observer(&sys, &dvector![1.0, 1.0], &IntegratorConfig::default(), 100.0).unwrap();
        assert!(lyapunov_increase(&sys, &p, &traj) <= 10.0 * 1e-12);
    }
}
