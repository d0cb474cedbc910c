use std::fmt;

use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// The component takes a strict sign opposite to its last strict sign.
    SignAlternation { component: usize },
    /// The state leaves the closed ball.
    BallEscape { center: DVector<f64>, radius: f64 },
    /// The Euclidean norm of the state drops below the threshold.
    NormBelow { threshold: f64 },
    /// The component becomes strictly negative.
    ComponentNegative { component: usize },
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::SignAlternation { .. } => "sign-alternation",
            EventKind::BallEscape { .. } => "ball-escape",
            EventKind::NormBelow { .. } => "norm-below",
            EventKind::ComponentNegative { .. } => "component-negative",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::SignAlternation { component } | EventKind::ComponentNegative { component } => {
                write!(f, "{}:x{}", self.label(), component + 1)
            }
            _ => write!(f, "{}", self.label()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventAction {
    Record,
    Halt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub kind: EventKind,
    pub action: EventAction,
}

impl EventSpec {
    pub fn record(kind: EventKind) -> Self {
        Self {
            kind,
            action: EventAction::Record,
        }
    }

    pub fn halt(kind: EventKind) -> Self {
        Self {
            kind,
            action: EventAction::Halt,
        }
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<(), String> {
        match &self.kind {
            EventKind::SignAlternation { component } | EventKind::ComponentNegative { component } => {
                if *component >= dim {
                    return Err(format!("component {component} out of range for dimension {dim}"));
                }
            }
            EventKind::BallEscape { center, radius } => {
                if center.len() != dim {
                    return Err(format!("ball center has dimension {}, state has {dim}", center.len()));
                }
                if !(*radius > 0.0) {
                    return Err(format!("ball radius must be positive, got {radius}"));
                }
            }
            EventKind::NormBelow { threshold } => {
                if !(*threshold > 0.0) {
                    return Err(format!("norm threshold must be positive, got {threshold}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub state: DVector<f64>,
}

impl EventRecord {
    pub(crate) fn new(time: f64, kind: EventKind, state: DVector<f64>) -> Self {
        Self { time, kind, state }
    }
}

/// Runtime state of one event during an integration.
pub(crate) struct Monitor {
    pub spec: EventSpec,
    last_sign: f64,
    latched: bool,
}

fn strict_sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Monitor {
    pub fn new(spec: EventSpec, x0: &DVector<f64>) -> Self {
        let last_sign = match spec.kind {
            EventKind::SignAlternation { component } => strict_sign(x0[component]),
            _ => 0.0,
        };
        let mut monitor = Self {
            spec,
            last_sign,
            latched: false,
        };
        monitor.latched = monitor.fires_initially(x0);
        monitor
    }

    fn condition(&self, state: &DVector<f64>) -> bool {
        match &self.spec.kind {
            EventKind::SignAlternation { component } => self.last_sign * state[*component] < 0.0,
            EventKind::BallEscape { center, radius } => (state - center).norm() > *radius,
            EventKind::NormBelow { threshold } => state.norm() < *threshold,
            EventKind::ComponentNegative { component } => state[*component] < 0.0,
        }
    }

    /// Level conditions that already hold at the initial state fire at `t0`.
    pub fn fires_initially(&self, x0: &DVector<f64>) -> bool {
        !matches!(self.spec.kind, EventKind::SignAlternation { .. }) && self.condition(x0)
    }

    /// Edge trigger used on step endpoints: true when the condition switches on
    /// somewhere inside the step. The condition is false at the step start by
    /// construction (either it was false, or it fired and was re-armed).
    pub fn triggered(&self, state: &DVector<f64>) -> bool {
        self.condition(state) && self.armed()
    }

    fn armed(&self) -> bool {
        !self.latched
    }

    pub fn after_fire(&mut self, state: &DVector<f64>) {
        match self.spec.kind {
            EventKind::SignAlternation { component } => self.last_sign = strict_sign(state[component]),
            _ => self.latched = true,
        }
    }

    /// Updates memory with an accepted step endpoint.
    pub fn observe(&mut self, state: &DVector<f64>) {
        match self.spec.kind {
            EventKind::SignAlternation { component } => {
                let s = strict_sign(state[component]);
                if s != 0.0 {
                    self.last_sign = s;
                }
            }
            _ => {
                if !self.condition(state) {
                    self.latched = false;
                }
            }
        }
    }
}
