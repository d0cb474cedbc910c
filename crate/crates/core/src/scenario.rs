//! Flat `section.key = value` scenario files.
//!
//! ```text
//! # cascade example just above its threshold
//! system.name = example1
//! system.params.tau1 = 1
//! system.params.c1 = 1
//! system.params.c2 = 11/40
//! integrator.method = rk45
//! integrator.rtol = 1e-9
//! events.sign_alternation = 2
//! events.norm_below = 1e-3
//! events.halt = norm_below
//! output.csv = run.csv
//! run.x0 = 0, 2; 1, 2
//! run.tf = 500
//! ```
//!
//! Components in `events.*` are 1-based. Numbers may be written as `p/q`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::observer::{ObserverError, ObserverSystem};
use crate::ode::{EventKind, EventSpec, IntegratorConfig, Method};
use crate::system::{AutonomousSystem, Smoothness, SystemError, TimeField};
use crate::tightness::{example_integrator, Example1Params};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: unknown system `{name}`")]
    UnknownSystem { line: usize, name: String },
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("line {line}: `{key}`: malformed number `{value}`")]
    MalformedNumber { line: usize, key: String, value: String },
    #[error("line {line}: `{key}`: {message}")]
    Invalid { line: usize, key: String, message: String },
}

/// Built-in systems.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    /// `x1' = -tau1 x1 + c1 x2`, `x2' = -c2 |x1|`.
    Example1(Example1Params),
    /// `x' = a x + b lambda`, `lambda' = qxx x^2 + qxl x lambda + qll lambda^2`.
    Quadratic { a: f64, b: f64, qxx: f64, qxl: f64, qll: f64 },
    /// Scalar observer with `v(t, lambda) = lambda sin(t + phase)`.
    Observer { gamma: f64, lambda0: f64, phase: f64 },
    /// `z' = J z`.
    Linear(DMatrix<f64>),
}

impl SystemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::Example1(_) => "example1",
            SystemSpec::Quadratic { .. } => "quadratic",
            SystemSpec::Observer { .. } => "observer",
            SystemSpec::Linear(_) => "linear",
        }
    }

    /// Dimension of the integrated state.
    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Example1(_) | SystemSpec::Quadratic { .. } => 2,
            SystemSpec::Observer { .. } => 3,
            SystemSpec::Linear(m) => m.nrows(),
        }
    }

    /// Dimension of the initial state a run takes (`lambda0` is a parameter of the observer).
    pub fn start_dim(&self) -> usize {
        match self {
            SystemSpec::Observer { .. } => 2,
            _ => self.dim(),
        }
    }

    pub fn time_field(&self) -> Result<TimeField, ObserverError> {
        Ok(match self {
            SystemSpec::Example1(p) => Arc::new(p.field()),
            SystemSpec::Observer { .. } => {
                let sys = self.observer().expect("observer spec")?;
                Arc::new(move |t, z| sys.rhs(t, z))
            }
            _ => self.autonomous().expect("autonomous spec").map_err(|e| ObserverError::Invalid(e.to_string()))?.time_field(),
        })
    }

    /// The system as an autonomous field; `None` for the time-varying observer.
    pub fn autonomous(&self) -> Option<Result<AutonomousSystem, SystemError>> {
        match *self {
            SystemSpec::Example1(p) => Some(
                AutonomousSystem::new(2, Smoothness::C1AtOrigin, move |z| p.field()(0.0, z))
                    .map(|s| s.with_kink(|z| z[0].abs())),
            ),
            SystemSpec::Quadratic { a, b, qxx, qxl, qll } => Some(AutonomousSystem::new(2, Smoothness::C2AtOrigin, move |z| {
                let (x, l) = (z[0], z[1]);
                DVector::from_vec(vec![a * x + b * l, qxx * x * x + qxl * x * l + qll * l * l])
            })),
            SystemSpec::Linear(ref m) => Some(AutonomousSystem::linear(m.clone())),
            SystemSpec::Observer { .. } => None,
        }
    }

    pub fn observer(&self) -> Option<Result<ObserverSystem, ObserverError>> {
        match *self {
            SystemSpec::Observer { gamma, lambda0, phase } => Some(ObserverSystem::scalar_example(gamma, lambda0, phase)),
            _ => None,
        }
    }

    pub fn example1(&self) -> Option<Example1Params> {
        match *self {
            SystemSpec::Example1(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: SystemSpec,
    pub integrator: IntegratorConfig,
    pub events: Vec<EventSpec>,
    pub output: OutputPaths,
    /// Initial states from `run.x0`, separated by `;`.
    pub starts: Vec<DVector<f64>>,
    pub t0: f64,
    /// End time from `run.tf`; each command has its own default.
    pub tf: Option<f64>,
    /// Remaining numeric `run.*` settings read by individual commands.
    pub run: BTreeMap<String, f64>,
}

impl Scenario {
    pub fn run_value(&self, key: &str, default: f64) -> f64 {
        self.run.get(key).copied().unwrap_or(default)
    }

    pub fn tf_or(&self, default: f64) -> f64 {
        self.tf.unwrap_or(self.t0 + default)
    }
}

/// Settings accepted under `run.` besides `x0`, `t0` and `tf`.
pub const RUN_KEYS: &[&str] = &[
    "samples",
    "seed",
    "p",
    "a",
    "grid",
    "window",
    "scan_step",
    "transient_skip",
    "height",
    "width",
    "count",
    "conv_norm",
    "bisect_tol",
    "gamma_max",
    "bound",
    "radius",
];

struct Entry {
    line: usize,
    value: String,
}

fn number(key: &str, e: &Entry) -> Result<f64, ScenarioError> {
    parse_number(&e.value).ok_or_else(|| ScenarioError::MalformedNumber {
        line: e.line,
        key: key.to_string(),
        value: e.value.clone(),
    })
}

/// A decimal literal or a fraction `p/q` of two.
pub fn parse_number(text: &str) -> Option<f64> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((p, q)) => p.trim().parse::<f64>().ok()? / q.trim().parse::<f64>().ok()?,
        None => text.parse::<f64>().ok()?,
    };
    value.is_finite().then_some(value)
}

fn vector(key: &str, e: &Entry, text: &str) -> Result<DVector<f64>, ScenarioError> {
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(parse_number)
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| ScenarioError::MalformedNumber {
            line: e.line,
            key: key.to_string(),
            value: text.trim().to_string(),
        })?;
    Ok(DVector::from_vec(values))
}

fn rows(key: &str, e: &Entry) -> Result<Vec<DVector<f64>>, ScenarioError> {
    e.value.split(';').map(|r| vector(key, e, r)).collect()
}

fn invalid(key: &str, e: &Entry, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        line: e.line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn components(key: &str, e: &Entry, dim: usize) -> Result<Vec<usize>, ScenarioError> {
    e.value
        .split(',')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(c) if (1..=dim).contains(&c) => Ok(c - 1),
            _ => Err(invalid(key, e, format!("components are 1-based indices up to {dim}, got `{}`", s.trim()))),
        })
        .collect()
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    let mut order = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(ScenarioError::Syntax { line })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(ScenarioError::Syntax { line });
        }
        if entries.contains_key(&key) {
            return Err(ScenarioError::Duplicate { line, key });
        }
        order.push(key.clone());
        entries.insert(
            key,
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }

    let system = parse_system(&entries)?;
    let dim = system.dim();
    let integrator = parse_integrator(&entries, &system)?;

    let mut events = Vec::new();
    let halting: Vec<String> = match entries.get("events.halt") {
        Some(e) => e.value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => Vec::new(),
    };
    let mut starts = Vec::new();
    let mut t0 = 0.0;
    let mut tf = None;
    let mut run = BTreeMap::new();
    let mut output = OutputPaths::default();
    let mut seen_events = Vec::new();

    for key in &order {
        let e = &entries[key];
        let (section, rest) = key.split_once('.').unwrap_or((key.as_str(), ""));
        match section {
            "system" | "integrator" => {}
            "events" => {
                if rest == "halt" {
                    continue;
                }
                let halt = halting.iter().any(|h| h == rest);
                let wrap = |kind| if halt { EventSpec::halt(kind) } else { EventSpec::record(kind) };
                match rest {
                    "sign_alternation" => {
                        for c in components(key, e, dim)? {
                            events.push(wrap(EventKind::SignAlternation { component: c }));
                        }
                    }
                    "component_negative" => {
                        for c in components(key, e, dim)? {
                            events.push(wrap(EventKind::ComponentNegative { component: c }));
                        }
                    }
                    "norm_below" => events.push(wrap(EventKind::NormBelow {
                        threshold: number(key, e)?,
                    })),
                    "ball_escape" => events.push(wrap(EventKind::BallEscape {
                        center: DVector::zeros(dim),
                        radius: number(key, e)?,
                    })),
                    _ => {
                        return Err(ScenarioError::UnknownKey {
                            line: e.line,
                            key: key.clone(),
                        })
                    }
                }
                seen_events.push(rest.to_string());
            }
            "output" => match rest {
                "csv" => output.csv = Some(PathBuf::from(&e.value)),
                "svg" => output.svg = Some(PathBuf::from(&e.value)),
                _ => {
                    return Err(ScenarioError::UnknownKey {
                        line: e.line,
                        key: key.clone(),
                    })
                }
            },
            "run" => match rest {
                "x0" => {
                    starts = rows(key, e)?;
                    if let Some(bad) = starts.iter().find(|s| s.len() != system.start_dim()) {
                        return Err(invalid(
                            key,
                            e,
                            format!("initial states need {} entries, got {}", system.start_dim(), bad.len()),
                        ));
                    }
                }
                "t0" => t0 = number(key, e)?,
                "tf" => tf = Some(number(key, e)?),
                k if RUN_KEYS.contains(&k) => {
                    run.insert(k.to_string(), number(key, e)?);
                }
                _ => {
                    return Err(ScenarioError::UnknownKey {
                        line: e.line,
                        key: key.clone(),
                    })
                }
            },
            _ => {
                return Err(ScenarioError::UnknownKey {
                    line: e.line,
                    key: key.clone(),
                })
            }
        }
    }
    if let Some(e) = entries.get("events.halt") {
        if let Some(h) = halting.iter().find(|h| !seen_events.contains(h)) {
            return Err(invalid("events.halt", e, format!("`{h}` is not a configured event")));
        }
    }
    for spec in &events {
        spec.validate(dim).map_err(|message| ScenarioError::Invalid {
            line: 0,
            key: "events".into(),
            message,
        })?;
    }
    if tf.is_some_and(|tf| !(tf > t0)) {
        return Err(ScenarioError::Invalid {
            line: entries.get("run.tf").map_or(0, |e| e.line),
            key: "run.tf".into(),
            message: format!("must exceed run.t0 = {t0}"),
        });
    }
    Ok(Scenario {
        system,
        integrator,
        events,
        output,
        starts,
        t0,
        tf,
        run,
    })
}

fn parse_system(entries: &BTreeMap<String, Entry>) -> Result<SystemSpec, ScenarioError> {
    let name_entry = entries.get("system.name").ok_or(ScenarioError::Missing {
        key: "system.name".into(),
    })?;
    let name = name_entry.value.as_str();
    let allowed: &[&str] = match name {
        "example1" => &["tau1", "c1", "c2"],
        "quadratic" => &["a", "b", "qxx", "qxl", "qll"],
        "observer" => &["gamma", "lambda0", "phase"],
        "linear" => &[],
        _ => {
            return Err(ScenarioError::UnknownSystem {
                line: name_entry.line,
                name: name.to_string(),
            })
        }
    };
    let mut params = BTreeMap::new();
    for (key, e) in entries.range("system.".to_string()..) {
        let Some(rest) = key.strip_prefix("system.") else { break };
        match rest.strip_prefix("params.") {
            Some(p) if allowed.contains(&p) => {
                params.insert(p, number(key, e)?);
            }
            Some(_) => {
                return Err(ScenarioError::UnknownKey {
                    line: e.line,
                    key: key.clone(),
                })
            }
            None if rest == "name" || (rest == "matrix" && name == "linear") => {}
            None => {
                return Err(ScenarioError::UnknownKey {
                    line: e.line,
                    key: key.clone(),
                })
            }
        }
    }
    let required = |p: &str| {
        params.get(p).copied().ok_or(ScenarioError::Missing {
            key: format!("system.params.{p}"),
        })
    };
    let optional = |p: &str, default: f64| params.get(p).copied().unwrap_or(default);
    let positive = |p: &str, value: f64| {
        if value > 0.0 {
            Ok(value)
        } else {
            let e = &entries[&format!("system.params.{p}")];
            Err(invalid(&format!("system.params.{p}"), e, "must be positive"))
        }
    };
    Ok(match name {
        "example1" => SystemSpec::Example1(Example1Params {
            tau1: positive("tau1", required("tau1")?)?,
            c1: positive("c1", required("c1")?)?,
            c2: positive("c2", required("c2")?)?,
        }),
        "quadratic" => SystemSpec::Quadratic {
            a: optional("a", -1.0),
            b: optional("b", 1.0),
            qxx: optional("qxx", -1.0),
            qxl: optional("qxl", 0.0),
            qll: optional("qll", -1.0),
        },
        "observer" => SystemSpec::Observer {
            gamma: positive("gamma", required("gamma")?)?,
            lambda0: positive("lambda0", required("lambda0")?)?,
            phase: optional("phase", 0.0),
        },
        _ => {
            let e = entries.get("system.matrix").ok_or(ScenarioError::Missing {
                key: "system.matrix".into(),
            })?;
            let r = rows("system.matrix", e)?;
            let n = r.len();
            if r.iter().any(|row| row.len() != n) {
                return Err(invalid("system.matrix", e, format!("matrix must be square, got {n} rows")));
            }
            SystemSpec::Linear(DMatrix::from_fn(n, n, |i, j| r[i][j]))
        }
    })
}

fn parse_integrator(entries: &BTreeMap<String, Entry>, system: &SystemSpec) -> Result<IntegratorConfig, ScenarioError> {
    let default = match system {
        SystemSpec::Example1(_) => example_integrator(),
        _ => IntegratorConfig::default(),
    };
    let get = |k: &str| entries.get(&format!("integrator.{k}")).map(|e| number(&format!("integrator.{k}"), e)).transpose();
    for (key, e) in entries.range("integrator.".to_string()..) {
        let Some(rest) = key.strip_prefix("integrator.") else { break };
        if !["method", "step", "rtol", "atol", "max_steps"].contains(&rest) {
            return Err(ScenarioError::UnknownKey {
                line: e.line,
                key: key.clone(),
            });
        }
    }
    let mut config = match entries.get("integrator.method") {
        None => default,
        Some(e) => match e.value.as_str() {
            "rk4" => IntegratorConfig::rk4(get("step")?.ok_or(ScenarioError::Missing {
                key: "integrator.step".into(),
            })?),
            "rk45" => {
                let (rtol, atol) = match default.method {
                    Method::Rk45 { rtol, atol } => (rtol, atol),
                    Method::Rk4 { .. } => (1e-9, 1e-12),
                };
                IntegratorConfig::rk45(get("rtol")?.unwrap_or(rtol), get("atol")?.unwrap_or(atol))
            }
            other => return Err(invalid("integrator.method", e, format!("expected rk4 or rk45, got `{other}`"))),
        },
    };
    if let Some(steps) = get("max_steps")? {
        config = config.with_max_steps(steps as usize);
    }
    config.validate().map_err(|err| ScenarioError::Invalid {
        line: entries.get("integrator.method").map_or(0, |e| e.line),
        key: "integrator".into(),
        message: err.to_string(),
    })?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_builtin() {
        let s = parse_scenario(
            "system.name = example1\nsystem.params.tau1 = 1\nsystem.params.c1 = 1\nsystem.params.c2 = 0.25\nrun.x0 = 0, 2; -1 2\n",
        )
        .unwrap();
        assert_eq!(s.system, SystemSpec::Example1(Example1Params { tau1: 1.0, c1: 1.0, c2: 0.25 }));
        assert_eq!(s.integrator, example_integrator());
        assert_eq!(s.starts.len(), 2);
        assert_eq!(s.starts[1][0], -1.0);
        assert_eq!(s.tf, None);
    }

    #[test]
    fn missing_parameter_names_the_key() {
        let err = parse_scenario("system.name = example1\n").unwrap_err();
        assert_eq!(err, ScenarioError::Missing { key: "system.params.tau1".into() });
    }

    #[test]
    fn observer_builtin() {
        let s = parse_scenario("system.name = observer\nsystem.params.gamma = 0.1\nsystem.params.lambda0 = 1\n").unwrap();
        assert_eq!(s.system, SystemSpec::Observer { gamma: 0.1, lambda0: 1.0, phase: 0.0 });
        assert_eq!(s.system.dim(), 3);
        assert!(s.system.observer().unwrap().is_ok());
    }

    #[test]
    fn errors_carry_line_and_key() {
        let err = parse_scenario("# header\nsystem.name = nope\n").unwrap_err();
        assert_eq!(err, ScenarioError::UnknownSystem { line: 2, name: "nope".into() });
        let err = parse_scenario("system.name = quadratic\nsystem.params.qxx = abc\n").unwrap_err();
        assert!(matches!(err, ScenarioError::MalformedNumber { line: 2, .. }));
        let err = parse_scenario("system.name = quadratic\nsystem.params.zzz = 1\n").unwrap_err();
        assert!(matches!(err, ScenarioError::UnknownKey { line: 2, .. }));
        let err = parse_scenario("system.name = quadratic\nrun.bogus = 1\n").unwrap_err();
        assert!(matches!(err, ScenarioError::UnknownKey { line: 2, .. }));
        assert_eq!(parse_scenario("system.name quadratic").unwrap_err(), ScenarioError::Syntax { line: 1 });
    }

    #[test]
    fn events_and_integrator() {
        let s = parse_scenario(
            "system.name = example1\nsystem.params.tau1 = 1\nsystem.params.c1 = 1\nsystem.params.c2 = 11/40\n\
             integrator.method = rk4\nintegrator.step = 0.01\n\
             events.sign_alternation = 2\nevents.norm_below = 1e-3\nevents.halt = norm_below\n",
        )
        .unwrap();
        assert_eq!(s.system.example1().unwrap().c2, 11.0 / 40.0);
        assert_eq!(s.integrator, IntegratorConfig::rk4(0.01));
        assert_eq!(
            s.events,
            vec![
                EventSpec::record(EventKind::SignAlternation { component: 1 }),
                EventSpec::halt(EventKind::NormBelow { threshold: 1e-3 }),
            ]
        );
        let err = parse_scenario("system.name = quadratic\nevents.sign_alternation = 3\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { line: 2, .. }));
    }

    #[test]
    fn linear_matrix() {
        let s = parse_scenario("system.name = linear\nsystem.matrix = -1 1; 0 -2\n").unwrap();
        assert_eq!(s.system, SystemSpec::Linear(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0])));
        assert!(parse_scenario("system.name = linear\nsystem.matrix = 1 2 3; 4 5 6\n").is_err());
    }
}
