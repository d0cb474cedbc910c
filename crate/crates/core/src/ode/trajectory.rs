use std::fmt::Write as _;

use nalgebra::DVector;

use super::events::EventRecord;
use crate::report::fmt12;

/// Samples at accepted steps plus the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub events: Vec<EventRecord>,
}

impl Trajectory {
    pub fn new(t0: f64, x0: DVector<f64>) -> Self {
        Self {
            times: vec![t0],
            states: vec![x0],
            events: Vec::new(),
        }
    }

    /// Builds a trajectory from samples. Panics if times are not strictly
    /// increasing or lengths differ.
    pub fn from_samples(times: Vec<f64>, states: Vec<DVector<f64>>) -> Self {
        assert_eq!(times.len(), states.len(), "times and states differ in length");
        assert!(!times.is_empty(), "empty trajectory");
        assert!(times.windows(2).all(|w| w[1] > w[0]), "times must be strictly increasing");
        Self {
            times,
            states,
            events: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, t: f64, state: DVector<f64>) {
        debug_assert!(t > *self.times.last().unwrap());
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    pub fn component(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[index]).collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.norm()).collect()
    }

    pub fn events_of(&self, label: &str) -> impl Iterator<Item = &EventRecord> + '_ {
        let label = label.to_owned();
        self.events.iter().filter(move |e| e.kind.label() == label)
    }

    /// Piecewise-linear interpolation, clamped to the logged time range.
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.end_time() {
            return self.last_state().clone();
        }
        let i = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        &self.states[i - 1] * (1.0 - w) + &self.states[i] * w
    }

    /// CSV with header `t,x1,...,xm`, one row per sample, then one
    /// `# event,<time>,<kind>` comment line per event.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.dim() {
            let _ = write!(out, ",x{i}");
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&fmt12(*t));
            for v in s.iter() {
                out.push(',');
                out.push_str(&fmt12(*v));
            }
            out.push('\n');
        }
        for e in &self.events {
            let _ = writeln!(out, "# event,{},{}", fmt12(e.time), e.kind);
        }
        out
    }
}

/// Number of strict sign changes of one component across the logged samples.
/// Values with magnitude below `1e-12` count as zero and never start a change.
pub fn detect_sign_alternations(traj: &Trajectory, component: usize) -> usize {
    const ZERO_BAND: f64 = 1e-12;
    let mut last = 0.0f64;
    let mut count = 0;
    for s in &traj.states {
        let v = s[component];
        if v.abs() < ZERO_BAND {
            continue;
        }
        let sign = v.signum();
        if last != 0.0 && sign != last {
            count += 1;
        }
        last = sign;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use std::f64::consts::PI;

    fn scalar(times: &[f64], f: impl Fn(f64) -> f64) -> Trajectory {
        Trajectory::from_samples(times.to_vec(), times.iter().map(|&t| dvector![f(t)]).collect())
    }

    #[test]
    fn sign_alternations() {
        let grid: Vec<f64> = (0..=4000).map(|i| 4.0 * PI * i as f64 / 4000.0 + 1e-3).collect();
        assert_eq!(detect_sign_alternations(&scalar(&grid, |_| 2.0), 0), 0);
        // zeros of sin on (0, 4pi + eps]: pi, 2pi, 3pi, 4pi
        assert_eq!(detect_sign_alternations(&scalar(&grid, f64::sin), 0), 4);
        let jitter = scalar(&[0.0, 1.0, 2.0, 3.0], |t| [1.0, -1e-13, 1e-13, -1.0][t as usize]);
        assert_eq!(detect_sign_alternations(&jitter, 0), 1);
    }

    #[test]
    fn csv_layout() {
        let mut traj = scalar(&[0.0, 0.5], |t| 1.0 - t);
        traj.events.push(EventRecord::new(
            0.25,
            super::super::EventKind::NormBelow { threshold: 0.8 },
            dvector![0.75],
        ));
        let csv = traj.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x1");
        assert_eq!(lines[1], "0,1");
        assert_eq!(lines[2], "0.5,0.5");
        assert_eq!(lines[3], "# event,0.25,norm-below");
    }

    #[test]
    fn interpolation_is_linear_between_samples() {
        let traj = scalar(&[0.0, 1.0, 3.0], |t| t * t);
        assert_eq!(traj.interpolate(2.0)[0], 5.0);
        assert_eq!(traj.interpolate(-1.0)[0], 0.0);
        assert_eq!(traj.interpolate(9.0)[0], 9.0);
    }
}
