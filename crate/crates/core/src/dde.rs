//! Method-of-steps driver for delay equations with constant lags.
//!
//! Every step is capped at the smallest lag, so each delayed lookup made by
//! a Runge-Kutta stage falls at or before the history frontier and the
//! scheme stays explicit. Derivative discontinuities inherited from the
//! start point are made mandatory stops.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::events::{apply_clamps, run_sampled_callback, Bound, ControllerOutput, Event, EventHooks, EventKind};
use crate::history::{HistoryBuffer, Prehistory};
use crate::solver::{merge_stops, time_eq, Integrator, SolverConfig, ORDER, TIME_EPS};

/// Read access to the solution history from inside a right-hand side.
///
/// Lookups cannot fail from the caller's point of view; an out-of-order
/// query is recorded, reported as NaN, and surfaced by the driver.
pub struct Past<'a> {
    history: &'a HistoryBuffer,
    step_start: f64,
    violation: RefCell<Option<Error>>,
}

impl<'a> Past<'a> {
    /// `step_start` is the left end of the step being attempted.
    pub fn new(history: &'a HistoryBuffer, step_start: f64) -> Self {
        Self { history, step_start, violation: RefCell::new(None) }
    }

    /// Left end of the current step. Piecewise-constant delayed inputs whose
    /// jumps are mandatory stops can be read here without picking up the
    /// next value at the step's right end.
    pub fn step_start(&self) -> f64 {
        self.step_start
    }

    pub fn at(&self, t: f64, component: usize) -> f64 {
        match self.history.eval(t, component) {
            Ok(v) => v,
            Err(e) => {
                self.violation.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    }

    pub fn state_at(&self, t: f64, out: &mut [f64]) {
        if let Err(e) = self.history.eval_state(t, out) {
            self.violation.borrow_mut().get_or_insert(e);
            out.fill(f64::NAN);
        }
    }

    fn take_violation(&self) -> Option<Error> {
        self.violation.borrow_mut().take()
    }
}

/// A delay problem `y'(t) = f(t, y(t), y(t - lag_1), ...)` on `[t0, tf]`.
///
/// The right-hand side also receives the discrete controller state `D`,
/// which is constant during a step.
pub struct DdeProblem<F> {
    pub rhs: F,
    pub y0: Vec<f64>,
    pub t0: f64,
    pub tf: f64,
    pub lags: Vec<f64>,
    pub prehistory: Prehistory,
}

impl<F> DdeProblem<F> {
    pub fn new(rhs: F, y0: Vec<f64>, t_span: (f64, f64), lags: Vec<f64>, prehistory: Prehistory) -> Result<Self> {
        let (t0, tf) = t_span;
        if !(t0 < tf) {
            return Err(Error::InvalidProblem(format!("t0 = {t0} must be below tf = {tf}")));
        }
        if lags.is_empty() || lags.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidProblem("lags must be a non-empty set of positive values".into()));
        }
        Ok(Self { rhs, y0, t0, tf, lags, prehistory })
    }

    pub fn min_lag(&self) -> f64 {
        self.lags.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Times `t0 + k * lag`, `1 <= k <= order + 1`, not beyond `tf`, merged over
/// all lags.
pub fn propagate_discontinuities(t0: f64, lags: &[f64], order: usize, tf: f64) -> Vec<f64> {
    let per_lag: Vec<Vec<f64>> = lags
        .iter()
        .map(|&lag| {
            (1..=order + 1)
                .map(|k| t0 + k as f64 * lag)
                .filter(|&t| t <= tf || time_eq(t, tf))
                .collect()
        })
        .collect();
    let refs: Vec<&[f64]> = per_lag.iter().map(Vec::as_slice).collect();
    merge_stops(&refs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub y: Vec<f64>,
    /// Controller output held at this instant.
    pub p: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub history: HistoryBuffer,
    pub labels: Vec<String>,
}

impl Trajectory {
    pub fn t0(&self) -> f64 {
        self.samples[0].t
    }

    pub fn tf(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// `(t, value)` pairs of one state component at every stored sample.
    pub fn series(&self, component: usize) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.y[component])).collect()
    }

    pub fn output_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.p)).collect()
    }

    fn sample_index(&self, t: f64) -> Option<usize> {
        self.samples.binary_search_by(|s| s.t.total_cmp(&t)).ok()
    }

    /// State at any `t` in the span. Stored sample instants return the
    /// recorded (post-event) state; other instants use dense output.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        if let Some(i) = self.sample_index(t) {
            return Ok(self.samples[i].y.clone());
        }
        if t < self.t0() || t > self.tf() {
            return Err(Error::OutOfRange { t, start: self.t0(), end: self.tf() });
        }
        let mut out = vec![0.0; self.samples[0].y.len()];
        self.history.eval_state(t, &mut out)?;
        Ok(out)
    }

    /// Zero-order-hold controller output at `t`.
    pub fn output_at(&self, t: f64) -> f64 {
        let idx = self.samples.partition_point(|s| s.t <= t);
        self.samples[idx.saturating_sub(1)].p
    }
}

fn fmt_bound(b: Bound) -> &'static str {
    match b {
        Bound::Lower => "lower",
        Bound::Upper => "upper",
    }
}

/// Integrates the problem from `t0` to `tf`.
///
/// After every accepted step the clamps run, then the sampled callback when
/// the step ended on one of its sample times. The same hooks run once at
/// `t0` before the first step.
pub fn solve_dde<F, D>(
    problem: &DdeProblem<F>,
    config: &SolverConfig,
    hooks: &mut EventHooks<'_, D>,
    state: &mut D,
) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &Past<'_>, &D, &mut [f64]),
    D: ControllerOutput,
{
    let (t0, tf) = (problem.t0, problem.tf);
    config.validate(t0, tf)?;
    let min_lag = problem.min_lag();
    let discontinuities = propagate_discontinuities(t0, &problem.lags, ORDER, tf);
    let sample_times: &[f64] = hooks.callback.as_ref().map_or(&[], |cb| cb.times());
    let stops = merge_stops(&[&config.tstops, sample_times, &discontinuities]);

    let mut samples = Vec::new();
    let mut events = Vec::new();

    let mut y = problem.y0.clone();
    post_step(t0, &mut y, true, hooks, state, &mut events);
    samples.push(Sample { t: t0, y: y.clone(), p: state.output() });

    let mut history = HistoryBuffer::new(t0, y.clone(), problem.prehistory.clone());
    let mut integ = Integrator::new(t0, y, tf, config, &stops, min_lag)?;
    let cap = integ.h_cap();

    while !integ.is_done() {
        let step = {
            let past = Past::new(&history, integ.t());
            let shared: &D = state;
            let mut f = |t: f64, y: &[f64], dy: &mut [f64]| (problem.rhs)(t, y, &past, shared, dy);
            let step = integ.step(&mut f);
            if let Some(e) = past.take_violation() {
                return Err(e);
            }
            step?
        };
        assert!(
            step.t_end - step.t_start <= cap * (1.0 + TIME_EPS),
            "step {} exceeds the lag cap {cap}",
            step.t_end - step.t_start
        );
        history.append_segment(step)?;

        let t = integ.t();
        let landed = integ.landed_on_stop();
        post_step(t, integ.y_mut(), landed, hooks, state, &mut events);
        samples.push(Sample { t, y: integ.y().to_vec(), p: state.output() });
    }

    Ok(Trajectory { samples, events, history, labels: hooks.labels.clone() })
}

fn post_step<D: ControllerOutput>(
    t: f64,
    y: &mut [f64],
    landed: bool,
    hooks: &mut EventHooks<'_, D>,
    state: &mut D,
    events: &mut Vec<Event>,
) {
    for fired in apply_clamps(y, &hooks.clamps) {
        events.push(Event {
            t,
            kind: EventKind::Clamp,
            component: hooks.label(fired.component),
            detail: format!("{} {:?} -> {:?}", fmt_bound(fired.bound), fired.before, fired.after),
        });
    }
    if !landed {
        return;
    }
    if let Some(cb) = hooks.callback.as_mut() {
        let before = state.output();
        if run_sampled_callback(cb, t, y, state) {
            let after = state.output();
            if after != before {
                events.push(Event {
                    t,
                    kind: EventKind::Control,
                    component: "p".into(),
                    detail: format!("{before:?} -> {after:?}"),
                });
            }
        }
    }
}
