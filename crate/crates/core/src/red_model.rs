//! TCP/RED fluid model.
//!
//! State is `(w, q, q_avg)`: the average congestion window, the
//! instantaneous queue and its exponentially weighted average. The window
//! equation carries the round-trip delay; the drop probability `p` is
//! produced by a controller sampled on a fixed grid and held in between.
//!
//! Two published code variants of the model disagree on a handful of
//! details. Each disagreement is a flag on [`RedParams`], and the two
//! [`Profile`]s bundle the values matching each variant.

use std::fmt;
use std::str::FromStr;

use crate::dde::{solve_dde, DdeProblem, Past, Trajectory};
use crate::error::{Error, Result};
use crate::events::{sample_grid, ClampSpec, ControllerOutput, EventHooks, SampledCallback};
use crate::history::Prehistory;
use crate::solver::{merge_stops, SolverConfig, TIME_EPS};

pub const W: usize = 0;
pub const Q: usize = 1;
pub const Q_AVG: usize = 2;
pub const LABELS: [&str; 3] = ["w", "q", "q_avg"];

/// Service rate in packets per second for a link of `mbps` megabits per
/// second carrying packets of `packet_bytes` bytes.
pub fn service_rate(mbps: f64, packet_bytes: f64) -> f64 {
    125_000.0 * mbps / packet_bytes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// RTT 0.5 s, clamp on the averaged queue, current drop probability.
    Julia,
    /// RTT 0.05 s, delayed drop probability, delay buffers start from the
    /// initial state.
    Modelica,
    /// Julia values, meant as a base for explicit overrides.
    Custom,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "julia" => Ok(Profile::Julia),
            "modelica" => Ok(Profile::Modelica),
            "custom" => Ok(Profile::Custom),
            other => Err(format!("unknown profile '{other}' (expected julia, modelica or custom)")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Julia => "julia",
            Profile::Modelica => "modelica",
            Profile::Custom => "custom",
        })
    }
}

/// What the delayed window reads before the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrehistoryMode {
    Zero,
    HoldInitial,
}

impl FromStr for PrehistoryMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "zero" => Ok(PrehistoryMode::Zero),
            "hold_initial" => Ok(PrehistoryMode::HoldInitial),
            other => Err(format!("unknown prehistory mode '{other}' (expected zero or hold_initial)")),
        }
    }
}

impl fmt::Display for PrehistoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrehistoryMode::Zero => "zero",
            PrehistoryMode::HoldInitial => "hold_initial",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedParams {
    /// Round-trip time `T`, seconds. Also the window-equation lag.
    pub rtt: f64,
    /// Number of TCP sessions `N`.
    pub sessions: f64,
    /// Service rate `C`, packets per second.
    pub service_rate: f64,
    /// EWMA weight.
    pub w_q: f64,
    /// Lower threshold as a fraction of the capacity.
    pub q_min: f64,
    /// Upper threshold as a fraction of the capacity.
    pub q_max: f64,
    /// Queue capacity `R`, packets.
    pub capacity: f64,
    pub p_max: f64,
    pub w_max: f64,
    /// Multiply the arrival rate by `1 - p` in the queue equation.
    pub use_drop_factor_in_queue: bool,
    /// Stop window growth once `w >= w_max`.
    pub use_heaviside_cap: bool,
    /// Use `p(t - T)` in the window equation instead of the current `p`.
    pub delayed_drop: bool,
    pub prehistory_mode: PrehistoryMode,
    /// Clamp the averaged queue at the capacity.
    pub clamp_q_avg: bool,
    /// When off, `p` stays at 0 for the whole run.
    pub controller_enabled: bool,
}

impl Default for RedParams {
    fn default() -> Self {
        Self::profile(Profile::Julia)
    }
}

impl RedParams {
    pub fn profile(profile: Profile) -> Self {
        let julia = Self {
            rtt: 0.5,
            sessions: 60.0,
            service_rate: service_rate(10.0, 500.0),
            w_q: 0.0004,
            q_min: 0.25,
            q_max: 0.5,
            capacity: 300.0,
            p_max: 0.1,
            w_max: 32.0,
            use_drop_factor_in_queue: false,
            use_heaviside_cap: true,
            delayed_drop: false,
            prehistory_mode: PrehistoryMode::Zero,
            clamp_q_avg: true,
            controller_enabled: true,
        };
        match profile {
            Profile::Julia | Profile::Custom => julia,
            Profile::Modelica => Self {
                rtt: 0.05,
                delayed_drop: true,
                prehistory_mode: PrehistoryMode::HoldInitial,
                clamp_q_avg: false,
                ..julia
            },
        }
    }

    /// Checks the parameter ranges, naming the offending field on failure.
    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, cond: &str, v: f64| {
            Err(Error::InvalidParameter { key: key.into(), message: format!("must satisfy {cond}, got {v}") })
        };
        let positive = [("T", self.rtt), ("N", self.sessions), ("C", self.service_rate), ("R", self.capacity)];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return fail(key, "> 0", v);
            }
        }
        if !(self.w_q > 0.0 && self.w_q < 1.0) {
            return fail("w_q", "0 < w_q < 1", self.w_q);
        }
        if !(self.q_min > 0.0 && self.q_min < self.q_max) {
            return fail("q_min", "0 < q_min < q_max", self.q_min);
        }
        if !(self.q_max <= 1.0) {
            return fail("q_max", "q_max <= 1", self.q_max);
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return fail("p_max", "0 < p_max <= 1", self.p_max);
        }
        if !(self.w_max > 1.0) || !self.w_max.is_finite() {
            return fail("w_max", "w_max > 1", self.w_max);
        }
        Ok(())
    }

    pub fn clamps(&self) -> Vec<ClampSpec> {
        let mut out = vec![
            ClampSpec { component: W, lower: Some(1.0), upper: Some(self.w_max) },
            ClampSpec { component: Q, lower: Some(0.0), upper: Some(self.capacity) },
        ];
        out.push(ClampSpec {
            component: Q_AVG,
            lower: Some(0.0),
            upper: self.clamp_q_avg.then_some(self.capacity),
        });
        out
    }
}

/// RED drop law: zero below the lower threshold, linear up to `p_max` at the
/// upper threshold, one above it.
pub fn drop_probability(q_avg: f64, params: &RedParams) -> f64 {
    let r = params.capacity;
    if q_avg < params.q_min * r {
        0.0
    } else if q_avg > params.q_max * r {
        1.0
    } else {
        params.p_max * (q_avg / r - params.q_min) / (params.q_max - params.q_min)
    }
}

/// Additive-increase term of the window equation, packets per second.
pub fn window_growth_term(w: f64, params: &RedParams) -> f64 {
    if params.use_heaviside_cap && w >= params.w_max {
        0.0
    } else {
        1.0 / params.rtt
    }
}

/// Queue derivative with a saturation guard.
///
/// The guard compares `q + a` (state plus rate) against the capacity and
/// zero, exactly as both code variants do.
pub fn queue_rate(q: f64, w: f64, p: f64, params: &RedParams) -> f64 {
    let inflow = params.sessions * w / params.rtt;
    let inflow = if params.use_drop_factor_in_queue { (1.0 - p) * inflow } else { inflow };
    let a = inflow - params.service_rate;
    if q + a > params.capacity {
        params.capacity - q
    } else if q + a > 0.0 {
        a
    } else {
        -q
    }
}

/// Snapshot handed to the controller at a sample instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub w: f64,
    pub q: f64,
    pub q_avg: f64,
    pub p: f64,
}

impl SimState {
    pub fn from_state(t: f64, y: &[f64], p: f64) -> Self {
        Self { t, w: y[W], q: y[Q], q_avg: y[Q_AVG], p }
    }
}

/// New drop probability computed from the averaged queue.
pub fn controller_affect(state: &SimState, params: &RedParams) -> f64 {
    drop_probability(state.q_avg, params)
}

/// Zero-order-hold controller state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RedController {
    pub p: f64,
    /// `(sample time, p)` after every update, kept when the window equation
    /// reads the delayed probability.
    pub p_history: Vec<(f64, f64)>,
    record_history: bool,
}

impl RedController {
    pub fn new(params: &RedParams) -> Self {
        Self { p: 0.0, p_history: Vec::new(), record_history: params.delayed_drop }
    }

    pub fn update(&mut self, t: f64, y: &[f64], params: &RedParams) {
        let state = SimState::from_state(t, y, self.p);
        self.p = controller_affect(&state, params);
        if self.record_history {
            self.p_history.push((t, self.p));
        }
    }

    /// Held probability at `t`: the value set at the latest sample time not
    /// after `t`, or 0 before the first sample.
    pub fn p_at(&self, t: f64) -> f64 {
        let limit = t + TIME_EPS * t.abs().max(1.0);
        let idx = self.p_history.partition_point(|&(s, _)| s <= limit);
        if idx == 0 {
            0.0
        } else {
            self.p_history[idx - 1].1
        }
    }
}

impl ControllerOutput for RedController {
    fn output(&self) -> f64 {
        self.p
    }
}

/// Right-hand side of the three-equation model.
pub fn rhs(t: f64, y: &[f64], past: &Past<'_>, ctrl: &RedController, params: &RedParams, dy: &mut [f64]) {
    let (w, q, q_avg) = (y[W], y[Q], y[Q_AVG]);
    let w_delayed = past.at(t - params.rtt, W);
    let p_used = if params.delayed_drop { ctrl.p_at(past.step_start() - params.rtt) } else { ctrl.p };
    dy[W] = window_growth_term(w, params) - 0.5 * w * (w_delayed / params.rtt) * p_used;
    dy[Q] = queue_rate(q, w, ctrl.p, params);
    dy[Q_AVG] = params.w_q * params.service_rate * (q - q_avg);
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub tf: f64,
    /// Controller sample period.
    pub sample_dt: f64,
    pub initial: [f64; 3],
    /// Tolerances and step bounds; `tstops` is filled from the sample grid.
    pub solver: SolverConfig,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { tf: 30.0, sample_dt: 0.01, initial: [1.0, 0.0, 0.0], solver: SolverConfig::default() }
    }
}

/// Runs the hybrid model from `t = 0` to `opts.tf`.
pub fn simulate(params: &RedParams, opts: &SimOptions) -> Result<Trajectory> {
    params.validate()?;
    if !(opts.tf > 0.0) {
        return Err(Error::InvalidParameter { key: "tf".into(), message: format!("must be > 0, got {}", opts.tf) });
    }
    if !(opts.sample_dt > 0.0) {
        return Err(Error::InvalidParameter {
            key: "sample_dt".into(),
            message: format!("must be > 0, got {}", opts.sample_dt),
        });
    }
    let grid = sample_grid(0.0, opts.tf, opts.sample_dt);
    let mut config = opts.solver.clone();
    config.tstops = if params.delayed_drop {
        // The delayed probability jumps one RTT after every sample.
        let shifted: Vec<f64> = grid.iter().map(|s| s + params.rtt).filter(|&s| s < opts.tf).collect();
        merge_stops(&[&grid, &shifted])
    } else {
        grid.clone()
    };

    let y0 = opts.initial.to_vec();
    let prehistory = match params.prehistory_mode {
        PrehistoryMode::Zero => Prehistory::zeros(3),
        PrehistoryMode::HoldInitial => Prehistory::Constant(y0.clone()),
    };
    let problem = DdeProblem::new(
        |t: f64, y: &[f64], past: &Past<'_>, ctrl: &RedController, dy: &mut [f64]| rhs(t, y, past, ctrl, params, dy),
        y0,
        (0.0, opts.tf),
        vec![params.rtt],
        prehistory,
    )?;

    let callback = if params.controller_enabled {
        Some(SampledCallback::new(grid, |t, y: &[f64], ctrl: &mut RedController| ctrl.update(t, y, params))?)
    } else {
        None
    };
    let mut hooks = EventHooks {
        clamps: params.clamps(),
        callback,
        labels: LABELS.iter().map(|s| s.to_string()).collect(),
    };
    let mut ctrl = RedController::new(params);
    solve_dde(&problem, &config, &mut hooks, &mut ctrl)
}
