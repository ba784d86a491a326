//! Discrete behaviour layered on the continuous flow: state clamps applied
//! after every accepted step and a controller sampled on a fixed time grid.

use std::fmt;

use crate::error::{Error, Result};

/// Projects one state component into `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampSpec {
    pub component: usize,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl ClampSpec {
    pub fn new(component: usize, lower: Option<f64>, upper: Option<f64>) -> Result<Self> {
        if let (Some(lo), Some(hi)) = (lower, upper) {
            if !(lo < hi) {
                return Err(Error::InvalidProblem(format!(
                    "clamp on component {component}: lower {lo} must be below upper {hi}"
                )));
            }
        }
        Ok(Self { component, lower, upper })
    }

    pub fn lower(component: usize, lower: f64) -> Self {
        Self { component, lower: Some(lower), upper: None }
    }

    pub fn upper(component: usize, upper: f64) -> Self {
        Self { component, lower: None, upper: Some(upper) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampFired {
    pub component: usize,
    pub bound: Bound,
    pub before: f64,
    pub after: f64,
}

/// Applies every clamp in order and reports the ones that moved the state.
/// A component sitting exactly on its bound is left alone.
pub fn apply_clamps(y: &mut [f64], clamps: &[ClampSpec]) -> Vec<ClampFired> {
    let mut fired = Vec::new();
    for c in clamps {
        let v = y[c.component];
        if let Some(lo) = c.lower {
            if v < lo {
                y[c.component] = lo;
                fired.push(ClampFired { component: c.component, bound: Bound::Lower, before: v, after: lo });
                continue;
            }
        }
        if let Some(hi) = c.upper {
            if v > hi {
                y[c.component] = hi;
                fired.push(ClampFired { component: c.component, bound: Bound::Upper, before: v, after: hi });
            }
        }
    }
    fired
}

/// Discrete state whose scalar output is recorded alongside the trajectory.
pub trait ControllerOutput {
    fn output(&self) -> f64;
}

impl ControllerOutput for () {
    fn output(&self) -> f64 {
        0.0
    }
}

impl ControllerOutput for f64 {
    fn output(&self) -> f64 {
        *self
    }
}

type Affect<'a, D> = Box<dyn FnMut(f64, &[f64], &mut D) + 'a>;

/// A controller run on a fixed grid of sample times.
pub struct SampledCallback<'a, D> {
    times: Vec<f64>,
    affect: Affect<'a, D>,
}

impl<'a, D> SampledCallback<'a, D> {
    pub fn new(times: Vec<f64>, affect: impl FnMut(f64, &[f64], &mut D) + 'a) -> Result<Self> {
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidProblem("sample times must be strictly increasing".into()));
        }
        Ok(Self { times, affect: Box::new(affect) })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Exact membership: the integrator lands on sample times bitwise.
    pub fn is_sample_time(&self, t: f64) -> bool {
        self.times.binary_search_by(|s| s.total_cmp(&t)).is_ok()
    }
}

impl<D> fmt::Debug for SampledCallback<'_, D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledCallback").field("samples", &self.times.len()).finish()
    }
}

/// Runs the callback when `t` is one of its sample times. Returns whether it ran.
pub fn run_sampled_callback<D>(cb: &mut SampledCallback<'_, D>, t: f64, y: &[f64], state: &mut D) -> bool {
    if !cb.is_sample_time(t) {
        return false;
    }
    (cb.affect)(t, y, state);
    true
}

/// Uniform sample grid `t0, t0 + dt, ...` ending exactly at `tf`.
///
/// Points are computed as `t0 + k * dt` rather than by accumulation. The last
/// point is replaced by `tf` when it falls within rounding distance of it.
pub fn sample_grid(t0: f64, tf: f64, dt: f64) -> Vec<f64> {
    let n = ((tf - t0) / dt + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * dt).collect();
    let last = *out.last().unwrap();
    if (tf - last).abs() <= 1e-9 * dt {
        *out.last_mut().unwrap() = tf;
    } else if last < tf {
        out.push(tf);
    }
    out
}

/// Hooks run by the DDE driver after each accepted step, clamps first.
pub struct EventHooks<'a, D> {
    pub clamps: Vec<ClampSpec>,
    pub callback: Option<SampledCallback<'a, D>>,
    /// Component names used in the event log.
    pub labels: Vec<String>,
}

impl<D> Default for EventHooks<'_, D> {
    fn default() -> Self {
        Self { clamps: Vec::new(), callback: None, labels: Vec::new() }
    }
}

impl<D> EventHooks<'_, D> {
    pub fn label(&self, component: usize) -> String {
        self.labels.get(component).cloned().unwrap_or_else(|| format!("y{component}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Clamp,
    Control,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Clamp => "clamp",
            EventKind::Control => "control",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub component: String,
    pub detail: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_below_one_is_reset() {
        let mut y = [0.4, 10.0, 10.0];
        let fired = apply_clamps(&mut y, &[ClampSpec::lower(0, 1.0)]);
        assert_eq!(y[0], 1.0);
        assert_eq!(fired, vec![ClampFired { component: 0, bound: Bound::Lower, before: 0.4, after: 1.0 }]);
    }

    #[test]
    fn queue_above_capacity_is_reset() {
        let mut y = [5.0, 305.0, 10.0];
        let fired = apply_clamps(&mut y, &[ClampSpec::upper(1, 300.0)]);
        assert_eq!(y[1], 300.0);
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].bound, Bound::Upper);
    }

    #[test]
    fn in_bounds_state_untouched() {
        let mut y = [1.0, 300.0, 0.0];
        let clamps = [ClampSpec::new(0, Some(1.0), Some(32.0)).unwrap(), ClampSpec::new(1, Some(0.0), Some(300.0)).unwrap()];
        assert!(apply_clamps(&mut y, &clamps).is_empty());
        assert_eq!(y, [1.0, 300.0, 0.0]);
    }

    #[test]
    fn inverted_bounds_rejected() {
        assert!(ClampSpec::new(0, Some(2.0), Some(1.0)).is_err());
    }

    #[test]
    fn callback_only_on_grid() {
        let mut cb = SampledCallback::new(sample_grid(0.0, 1.0, 0.25), |_t, y: &[f64], p: &mut f64| *p = y[0]).unwrap();
        let mut p = -1.0;
        assert!(!run_sampled_callback(&mut cb, 0.3, &[7.0], &mut p));
        assert_eq!(p, -1.0);
        assert!(run_sampled_callback(&mut cb, 0.5, &[7.0], &mut p));
        assert_eq!(p, 7.0);
    }

    #[test]
    fn grid_has_expected_length_and_ends_on_tf() {
        let g = sample_grid(0.0, 30.0, 0.01);
        assert_eq!(g.len(), 3001);
        assert_eq!(*g.last().unwrap(), 30.0);
        assert_eq!(sample_grid(0.0, 1.0, 1.0), vec![0.0, 1.0]);
        assert_eq!(sample_grid(0.0, 1.0, 0.3).last(), Some(&1.0));
    }

    proptest! {
        #[test]
        fn clamps_are_idempotent(y in prop::collection::vec(-500.0f64..500.0, 3)) {
            let clamps = [
                ClampSpec::new(0, Some(1.0), Some(32.0)).unwrap(),
                ClampSpec::new(1, Some(0.0), Some(300.0)).unwrap(),
                ClampSpec::upper(2, 300.0),
            ];
            let mut once = y.clone();
            apply_clamps(&mut once, &clamps);
            let mut twice = once.clone();
            let fired = apply_clamps(&mut twice, &clamps);
            prop_assert!(fired.is_empty());
            prop_assert_eq!(once, twice);
        }
    }
}
