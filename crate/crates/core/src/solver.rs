//! Embedded explicit Runge-Kutta integration with adaptive step control.
//!
//! The pair is Dormand-Prince 5(4): the 5th-order solution is propagated,
//! the 4th-order embedded solution drives the error estimate, and every
//! accepted step carries the free 4th-order continuous extension so the
//! solution can be evaluated anywhere inside the step.
//!
//! [`Integrator`] owns the stepping state and guarantees that every mandatory
//! stop is hit exactly; [`advance_with_tstops`] is the plain ODE driver built
//! on top of it. The DDE driver in [`crate::dde`] reuses the same integrator.

use crate::error::{Error, Result};

/// Relative tolerance used when comparing two instants for equality.
pub const TIME_EPS: f64 = 1e-12;

/// Order of the propagated solution.
pub const ORDER: usize = 5;

/// Exponent of the step-size controller, 1 / (embedded order + 1).
const CONTROLLER_EXPONENT: f64 = 1.0 / 5.0;
const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.2;

// Dormand-Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th-order weights minus 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Continuous extension (Hairer, Norsett & Wanner, dopri5 `contd5`).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Butcher tableau of the pair, exposed so tests can check the order
/// conditions independently of the stepping code.
pub mod tableau {
    use super::*;

    pub const C: [f64; 7] = [0.0, C2, C3, C4, C5, 1.0, 1.0];
    pub const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [A21, 0.0, 0.0, 0.0, 0.0, 0.0],
        [A31, A32, 0.0, 0.0, 0.0, 0.0],
        [A41, A42, A43, 0.0, 0.0, 0.0],
        [A51, A52, A53, A54, 0.0, 0.0],
        [A61, A62, A63, A64, A65, 0.0],
        [A71, 0.0, A73, A74, A75, A76],
    ];
    pub const B: [f64; 7] = [A71, 0.0, A73, A74, A75, A76, 0.0];
    pub const E: [f64; 7] = [E1, 0.0, E3, E4, E5, E6, E7];
}

pub(crate) fn time_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_EPS * a.abs().max(b.abs()).max(1.0)
}

/// Tolerances, step bounds and mandatory stop points.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    /// Times the integrator must land on exactly, strictly increasing.
    pub tstops: Vec<f64>,
    pub safety_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            h_init: 1e-4,
            h_max: f64::INFINITY,
            h_min: 1e-12,
            tstops: Vec::new(),
            safety_factor: 0.9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, t0: f64, tf: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.abs_tol > 0.0) || !self.abs_tol.is_finite() {
            return bad(format!("abs_tol must be positive, got {}", self.abs_tol));
        }
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return bad(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        if !(self.h_min > 0.0) {
            return bad(format!("h_min must be positive, got {}", self.h_min));
        }
        if !(self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return bad(format!(
                "step bounds must satisfy h_min <= h_init <= h_max, got {} / {} / {}",
                self.h_min, self.h_init, self.h_max
            ));
        }
        if !(self.safety_factor > 0.0 && self.safety_factor <= 1.0) {
            return bad(format!("safety_factor must lie in (0, 1], got {}", self.safety_factor));
        }
        if self.tstops.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("tstops must be strictly increasing".into());
        }
        if let (Some(&first), Some(&last)) = (self.tstops.first(), self.tstops.last()) {
            if first < t0 && !time_eq(first, t0) || last > tf && !time_eq(last, tf) {
                return bad(format!("tstops must lie within [{t0}, {tf}]"));
            }
        }
        Ok(())
    }
}

/// Continuous extension over one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub y_start: Vec<f64>,
    pub y_end: Vec<f64>,
    // y_end - y_start, then the three higher coefficients of the quartic.
    cont: [Vec<f64>; 4],
}

impl DenseSegment {
    pub fn dim(&self) -> usize {
        self.y_start.len()
    }

    fn theta(&self, t: f64) -> Result<Option<f64>> {
        if t == self.t_start || t == self.t_end {
            return Ok(None);
        }
        if t < self.t_start || t > self.t_end {
            return Err(Error::OutOfRange { t, start: self.t_start, end: self.t_end });
        }
        Ok(Some((t - self.t_start) / (self.t_end - self.t_start)))
    }

    #[inline]
    fn poly(&self, theta: f64, i: usize) -> f64 {
        let theta1 = 1.0 - theta;
        let [diff, c3, c4, c5] = &self.cont;
        self.y_start[i] + theta * (diff[i] + theta1 * (c3[i] + theta * (c4[i] + theta1 * c5[i])))
    }

    /// Evaluates one state component at `t`. Endpoints return the stored
    /// states bitwise.
    pub fn eval_component(&self, t: f64, i: usize) -> Result<f64> {
        Ok(match self.theta(t)? {
            None if t == self.t_start => self.y_start[i],
            None => self.y_end[i],
            Some(theta) => self.poly(theta, i),
        })
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        match self.theta(t)? {
            None if t == self.t_start => out.copy_from_slice(&self.y_start),
            None => out.copy_from_slice(&self.y_end),
            Some(theta) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.poly(theta, i);
                }
            }
        }
        Ok(())
    }
}

/// Interpolated state at `t`, which must lie inside the segment.
pub fn dense_eval(seg: &DenseSegment, t: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; seg.dim()];
    seg.eval_into(t, &mut out)?;
    Ok(out)
}

/// Result of one attempted step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub accepted: bool,
    pub t_new: f64,
    pub y_new: Vec<f64>,
    /// RMS of the component errors scaled by the mixed tolerance.
    pub error_estimate: f64,
    pub h_next: f64,
    /// Dense segment for the candidate step; `None` when a stage was not finite.
    pub segment: Option<DenseSegment>,
    pub diagnostic: Option<String>,
}

fn stage<F>(rhs: &mut F, t: f64, y: &[f64], k: &mut [f64]) -> Option<String>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    rhs(t, y, k);
    k.iter()
        .position(|v| !v.is_finite())
        .map(|i| format!("component {i} evaluated to {} at t = {t}", k[i]))
}

/// Attempts a single step of size `h` from `(t, y)`.
pub fn rk_step<F>(rhs: &mut F, t: f64, y: &[f64], h: f64, config: &SolverConfig) -> StepOutcome
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    rk_step_to(rhs, t, y, h, t + h, config)
}

// `t_new` is passed separately so a step landing on a stop ends exactly there.
fn rk_step_to<F>(
    rhs: &mut F,
    t: f64,
    y: &[f64],
    h: f64,
    t_new: f64,
    config: &SolverConfig,
) -> StepOutcome
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];

    let rejected = |diag: String| StepOutcome {
        accepted: false,
        t_new,
        y_new: y.to_vec(),
        error_estimate: f64::INFINITY,
        h_next: (h * MIN_SHRINK).clamp(config.h_min, config.h_max),
        segment: None,
        diagnostic: Some(diag),
    };

    for s in 0..7 {
        for i in 0..n {
            let acc: f64 = (0..s).map(|j| tableau::A[s][j] * k[j][i]).sum();
            tmp[i] = y[i] + h * acc;
        }
        let ts = if s >= 5 { t_new } else { t + tableau::C[s] * h };
        if let Some(diag) = stage(rhs, ts, &tmp, &mut k[s]) {
            return rejected(diag);
        }
    }
    // The last stage is evaluated at the 5th-order solution itself.
    let y_new = tmp;

    let mut sum = 0.0;
    for i in 0..n {
        let e = h
            * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        let sc = config.abs_tol + config.rel_tol * y[i].abs().max(y_new[i].abs());
        sum += (e / sc).powi(2);
    }
    let err = (sum / n.max(1) as f64).sqrt();
    let accepted = err <= 1.0;

    let factor = if err == 0.0 {
        MAX_GROWTH
    } else {
        (config.safety_factor * err.powf(-CONTROLLER_EXPONENT)).clamp(MIN_SHRINK, MAX_GROWTH)
    };
    let factor = if accepted { factor } else { factor.min(1.0) };
    let h_next = (h * factor).clamp(config.h_min, config.h_max);

    let mut diff = vec![0.0; n];
    let mut c3 = vec![0.0; n];
    let mut c4 = vec![0.0; n];
    let mut c5 = vec![0.0; n];
    for i in 0..n {
        let ydiff = y_new[i] - y[i];
        let bspl = h * k[0][i] - ydiff;
        diff[i] = ydiff;
        c3[i] = bspl;
        c4[i] = ydiff - h * k[6][i] - bspl;
        c5[i] = h
            * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
    }
    let segment = DenseSegment {
        t_start: t,
        t_end: t_new,
        y_start: y.to_vec(),
        y_end: y_new.clone(),
        cont: [diff, c3, c4, c5],
    };

    StepOutcome {
        accepted,
        t_new,
        y_new,
        error_estimate: err,
        h_next,
        segment: Some(segment),
        diagnostic: None,
    }
}

/// Merges several sorted stop lists into one strictly increasing list,
/// collapsing instants that agree to within [`TIME_EPS`]. When two instants
/// collapse the one from the earlier list wins.
pub fn merge_stops(lists: &[&[f64]]) -> Vec<f64> {
    let mut all: Vec<(f64, usize)> = lists
        .iter()
        .enumerate()
        .flat_map(|(rank, l)| l.iter().map(move |&t| (t, rank)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<(f64, usize)> = Vec::with_capacity(all.len());
    for (t, rank) in all {
        match out.last_mut() {
            Some(last) if time_eq(last.0, t) => {
                if rank < last.1 {
                    *last = (t, rank);
                }
            }
            _ => out.push((t, rank)),
        }
    }
    out.into_iter().map(|(t, _)| t).collect()
}

/// Adaptive stepping state. Each call to [`Integrator::step`] performs one
/// accepted step, never stepping past the next mandatory stop.
#[derive(Debug, Clone)]
pub struct Integrator {
    t: f64,
    y: Vec<f64>,
    h: f64,
    tf: f64,
    h_cap: f64,
    stops: Vec<f64>,
    next_stop: usize,
    landed: bool,
    config: SolverConfig,
}

impl Integrator {
    /// `stops` must be sorted; `tf` is always added as a final stop.
    /// `h_cap` bounds every step on top of `config.h_max`.
    pub fn new(
        t0: f64,
        y0: Vec<f64>,
        tf: f64,
        config: &SolverConfig,
        stops: &[f64],
        h_cap: f64,
    ) -> Result<Self> {
        if !(t0 < tf) {
            return Err(Error::InvalidProblem(format!("t0 = {t0} must be below tf = {tf}")));
        }
        config.validate(t0, tf)?;
        let inner: Vec<f64> = stops.iter().copied().filter(|&s| s > t0 && !time_eq(s, t0) && s < tf && !time_eq(s, tf)).collect();
        let mut all = merge_stops(&[&inner]);
        all.push(tf);
        let h_cap = h_cap.min(config.h_max);
        if !(h_cap >= config.h_min) {
            return Err(Error::InvalidConfig(format!("step cap {h_cap} is below h_min {}", config.h_min)));
        }
        Ok(Self {
            t: t0,
            y: y0,
            h: config.h_init.min(h_cap),
            tf,
            h_cap,
            stops: all,
            next_stop: 0,
            landed: false,
            config: config.clone(),
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Mutable access to the current state, for discrete events between steps.
    pub fn y_mut(&mut self) -> &mut [f64] {
        &mut self.y
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.tf
    }

    /// Whether the last accepted step ended exactly on a mandatory stop.
    pub fn landed_on_stop(&self) -> bool {
        self.landed
    }

    pub fn h_cap(&self) -> f64 {
        self.h_cap
    }

    /// Takes one accepted step, retrying with smaller steps on rejection.
    pub fn step<F>(&mut self, rhs: &mut F) -> Result<DenseSegment>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let stop = self.stops[self.next_stop];
        loop {
            let mut h = self.h.min(self.h_cap);
            // a sliver shorter than 1% of h is absorbed into this step
            let land = self.t + h >= stop || (stop - (self.t + h) < 1e-2 * h && stop - self.t <= self.h_cap);
            if land {
                h = stop - self.t;
            }
            let t_new = if land { stop } else { self.t + h };
            let out = rk_step_to(rhs, self.t, &self.y, h, t_new, &self.config);
            if out.accepted {
                self.t = t_new;
                self.y = out.y_new;
                self.h = out.h_next;
                self.landed = land;
                if land {
                    self.next_stop += 1;
                }
                return Ok(out.segment.expect("accepted steps carry a segment"));
            }
            if h <= self.config.h_min {
                return Err(match out.diagnostic {
                    Some(detail) => Error::NonFinite { t: self.t, detail },
                    None => Error::StepSizeUnderflow { t: self.t, h },
                });
            }
            self.h = out.h_next.min(0.5 * h).max(self.config.h_min);
        }
    }
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t_final`, landing exactly on
/// every configured tstop.
pub fn advance_with_tstops<F>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_final: f64,
    config: &SolverConfig,
) -> Result<Vec<DenseSegment>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut integ = Integrator::new(t0, y0.to_vec(), t_final, config, &config.tstops, f64::INFINITY)?;
    let mut segments = Vec::new();
    while !integ.is_done() {
        segments.push(integ.step(&mut rhs)?);
    }
    Ok(segments)
}
