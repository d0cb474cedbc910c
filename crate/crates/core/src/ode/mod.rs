//! Deterministic explicit Runge-Kutta integration with event detection.
//!
//! Two methods are provided: classical fixed-step RK4 and the adaptive
//! Dormand-Prince 5(4) pair. Events are checked on accepted steps and located
//! by bisection, re-stepping from the start of the step with a shortened step
//! so the located state has the method's full local accuracy.

mod events;
mod trajectory;

pub use events::{EventAction, EventKind, EventRecord, EventSpec};
pub use trajectory::{detect_sign_alternations, Trajectory};

use nalgebra::DVector;
use thiserror::Error;

use events::Monitor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4 { step: f64 },
    Rk45 { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::rk45(1e-9, 1e-12)
    }
}

impl IntegratorConfig {
    pub const DEFAULT_MAX_STEPS: usize = 5_000_000;

    pub fn rk4(step: f64) -> Self {
        Self {
            method: Method::Rk4 { step },
            max_steps: Self::DEFAULT_MAX_STEPS,
        }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        Self {
            method: Method::Rk45 { rtol, atol },
            max_steps: Self::DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        if self.max_steps == 0 {
            return Err(IntegrationError::InvalidConfig("max_steps must be positive".into()));
        }
        match self.method {
            Method::Rk4 { step } if !(step > 0.0 && step.is_finite()) => {
                Err(IntegrationError::InvalidConfig(format!("step must be positive, got {step}")))
            }
            Method::Rk45 { rtol, atol } if !(rtol > 0.0 && rtol < 1.0 && atol > 0.0 && atol < 1.0) => Err(
                IntegrationError::InvalidConfig(format!("need 0 < rtol, atol < 1, got rtol={rtol}, atol={atol}")),
            ),
            _ => Ok(()),
        }
    }

    /// Representative tolerance: the fixed step's local error scale or `max(rtol, atol)`.
    pub fn tolerance(&self) -> f64 {
        match self.method {
            Method::Rk4 { step } => step.powi(4),
            Method::Rk45 { rtol, atol } => rtol.max(atol),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid time span [{t0}, {tf}]")]
    BadSpan { t0: f64, tf: f64 },
    #[error("invalid event: {0}")]
    BadEvent(String),
    #[error("maximum number of steps exceeded at t = {t}")]
    MaxSteps { t: f64, state: DVector<f64> },
    #[error("step size underflow at t = {t} (stiff or singular field)")]
    StepUnderflow { t: f64, state: DVector<f64> },
    #[error("non-finite state after t = {t}")]
    NonFinite { t: f64, state: DVector<f64> },
}

impl IntegrationError {
    /// Last valid `(t, state)` for runtime failures.
    pub fn last_valid(&self) -> Option<(f64, &DVector<f64>)> {
        match self {
            IntegrationError::MaxSteps { t, state }
            | IntegrationError::StepUnderflow { t, state }
            | IntegrationError::NonFinite { t, state } => Some((*t, state)),
            _ => None,
        }
    }
}

// Dormand-Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dopri_step<F>(field: &F, t: f64, y: &DVector<f64>, h: f64) -> (DVector<f64>, DVector<f64>)
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let mut stage = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if A[s][j] != 0.0 {
                stage.axpy(h * A[s][j], kj, 1.0);
            }
        }
        k.push(field(t + C[s] * h, &stage));
    }
    let mut y5 = y.clone();
    let mut err = DVector::zeros(y.len());
    for s in 0..7 {
        if B5[s] != 0.0 {
            y5.axpy(h * B5[s], &k[s], 1.0);
        }
        err.axpy(h * (B5[s] - B4[s]), &k[s], 1.0);
    }
    (y5, err)
}

fn rk4_step<F>(field: &F, t: f64, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = field(t, y);
    let k2 = field(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = field(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = field(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn error_norm(err: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, rtol: f64, atol: f64) -> f64 {
    let m = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(e, (a, b))| {
            let scale = atol + rtol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / m).sqrt()
}

fn initial_step<F>(field: &F, t0: f64, y0: &DVector<f64>, rtol: f64, atol: f64, span: f64) -> f64
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let scale = y0.map(|v| atol + rtol * v.abs());
    let f0 = field(t0, y0);
    let rms = |v: &DVector<f64>| (v.component_div(&scale).norm_squared() / v.len().max(1) as f64).sqrt();
    let d0 = rms(y0);
    let d1 = rms(&f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1 = y0 + &f0 * h0;
    let f1 = field(t0 + h0, &y1);
    let d2 = rms(&(f1 - &f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    // An exactly zero component with a tiny atol makes the estimate collapse;
    // the floor lets step rejection find the right size instead.
    (100.0 * h0).min(h1).max(1e-6 * span).min(span)
}

/// Integrates `x' = field(t, x)` from `t0` to `tf`.
///
/// One sample is logged per accepted step. Events are located by bisection to
/// a time accuracy of `1e-9 * (tf - t0)`; halting events truncate the
/// trajectory at the event time.
pub fn integrate<F>(
    field: F,
    x0: &DVector<f64>,
    t0: f64,
    tf: f64,
    config: &IntegratorConfig,
    events: &[EventSpec],
) -> Result<Trajectory, IntegrationError>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    config.validate()?;
    if !(tf > t0) || !t0.is_finite() || !tf.is_finite() {
        return Err(IntegrationError::BadSpan { t0, tf });
    }
    for spec in events {
        spec.validate(x0.len()).map_err(IntegrationError::BadEvent)?;
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFinite { t: t0, state: x0.clone() });
    }

    let span = tf - t0;
    let event_tol = 1e-9 * span;
    let mut traj = Trajectory::new(t0, x0.clone());
    let mut monitors: Vec<Monitor> = events.iter().map(|spec| Monitor::new(spec.clone(), x0)).collect();

    for monitor in monitors.iter_mut() {
        if monitor.fires_initially(x0) {
            traj.events.push(EventRecord::new(t0, monitor.spec.kind.clone(), x0.clone()));
            if monitor.spec.action == EventAction::Halt {
                return Ok(traj);
            }
        }
    }

    let mut t = t0;
    let mut y = x0.clone();
    let mut steps = 0usize;

    match config.method {
        Method::Rk4 { step } => {
            let n = ((span / step) - 1e-12).ceil().max(1.0) as usize;
            for i in 1..=n {
                if steps >= config.max_steps {
                    return Err(IntegrationError::MaxSteps { t, state: y });
                }
                steps += 1;
                let t_next = if i == n { tf } else { t0 + i as f64 * step };
                let h = t_next - t;
                let y_next = rk4_step(&field, t, &y, h);
                if y_next.iter().any(|v| !v.is_finite()) {
                    return Err(IntegrationError::NonFinite { t, state: y });
                }
                let restep = |theta: f64| rk4_step(&field, t, &y, theta * h);
                if handle_events(&mut monitors, &mut traj, t, h, &y_next, event_tol, restep) {
                    return Ok(traj);
                }
                t = t_next;
                y = y_next;
                traj.push(t, y.clone());
            }
        }
        Method::Rk45 { rtol, atol } => {
            let mut h = initial_step(&field, t0, x0, rtol, atol, span);
            while t < tf {
                if steps >= config.max_steps {
                    return Err(IntegrationError::MaxSteps { t, state: y });
                }
                steps += 1;
                let last = t + h >= tf || (tf - (t + h)) < 1e-12 * span;
                if last {
                    h = tf - t;
                }
                if h <= 10.0 * f64::EPSILON * t.abs().max(span) {
                    return Err(IntegrationError::StepUnderflow { t, state: y });
                }
                let (y_next, err) = dopri_step(&field, t, &y, h);
                let finite = y_next.iter().all(|v| v.is_finite());
                let e = if finite {
                    error_norm(&err, &y, &y_next, rtol, atol)
                } else {
                    f64::INFINITY
                };
                if !e.is_finite() && finite {
                    return Err(IntegrationError::NonFinite { t, state: y });
                }
                if e <= 1.0 {
                    let t_next = if last { tf } else { t + h };
                    let restep = |theta: f64| dopri_step(&field, t, &y, theta * h).0;
                    if handle_events(&mut monitors, &mut traj, t, h, &y_next, event_tol, restep) {
                        return Ok(traj);
                    }
                    t = t_next;
                    y = y_next;
                    traj.push(t, y.clone());
                    let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                    h *= factor;
                } else {
                    let factor = if e.is_finite() { (0.9 * e.powf(-0.2)).clamp(0.2, 1.0) } else { 0.2 };
                    h *= factor;
                }
            }
        }
    }
    Ok(traj)
}

/// Checks all monitors over an accepted step of length `h` from `t`.
/// Returns true when a halting event truncated the trajectory.
fn handle_events<R>(
    monitors: &mut [Monitor],
    traj: &mut Trajectory,
    t: f64,
    h: f64,
    y_end: &DVector<f64>,
    event_tol: f64,
    restep: R,
) -> bool
where
    R: Fn(f64) -> DVector<f64>,
{
    let mut hits: Vec<(f64, usize, DVector<f64>)> = Vec::new();
    for (idx, monitor) in monitors.iter().enumerate() {
        if monitor.triggered(y_end) {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut state = y_end.clone();
            while (hi - lo) * h > event_tol {
                let mid = 0.5 * (lo + hi);
                let probe = restep(mid);
                if monitor.triggered(&probe) {
                    hi = mid;
                    state = probe;
                } else {
                    lo = mid;
                }
            }
            hits.push((hi, idx, state));
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (theta, idx, state) in hits {
        let monitor = &mut monitors[idx];
        let time = t + theta * h;
        traj.events.push(EventRecord::new(time, monitor.spec.kind.clone(), state.clone()));
        monitor.after_fire(&state);
        if monitor.spec.action == EventAction::Halt {
            if theta < 1.0 {
                traj.push(time, state);
            } else {
                traj.push(t + h, y_end.clone());
            }
            return true;
        }
    }
    for monitor in monitors.iter_mut() {
        monitor.observe(y_end);
    }
    false
}
