//! Past-state storage for delay equations.
//!
//! Times strictly before `t0` are answered by the prehistory function; from
//! `t0` on, by the dense segments produced by the integrator. A query at a
//! boundary shared by two segments is answered by the later one, so a state
//! reset applied between steps is visible from the reset instant onward.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::solver::{DenseSegment, TIME_EPS};

/// State before the integration start.
#[derive(Clone)]
pub enum Prehistory {
    Constant(Vec<f64>),
    Function(Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>),
}

impl Prehistory {
    pub fn zeros(dim: usize) -> Self {
        Prehistory::Constant(vec![0.0; dim])
    }

    pub fn component(&self, t: f64, i: usize) -> f64 {
        match self {
            Prehistory::Constant(v) => v[i],
            Prehistory::Function(f) => f(t)[i],
        }
    }
}

impl fmt::Debug for Prehistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prehistory::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Prehistory::Function(_) => f.write_str("Function(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    prehistory: Prehistory,
    t0: f64,
    y0: Vec<f64>,
    segments: Vec<DenseSegment>,
}

impl HistoryBuffer {
    pub fn new(t0: f64, y0: Vec<f64>, prehistory: Prehistory) -> Self {
        Self { prehistory, t0, y0, segments: Vec::new() }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// End of the last completed segment, or `t0` when there is none.
    pub fn frontier(&self) -> f64 {
        self.segments.last().map_or(self.t0, |s| s.t_end)
    }

    pub fn segments(&self) -> &[DenseSegment] {
        &self.segments
    }

    pub fn append_segment(&mut self, seg: DenseSegment) -> Result<()> {
        let frontier = self.frontier();
        if seg.t_start != frontier || !(seg.t_end > seg.t_start) {
            return Err(Error::SegmentGap { start: seg.t_start, end: seg.t_end, frontier });
        }
        self.segments.push(seg);
        Ok(())
    }

    /// Queries slightly past the frontier (by rounding in `t - lag`) are
    /// snapped back onto it.
    fn snap(&self, t: f64) -> Result<f64> {
        let frontier = self.frontier();
        if t <= frontier {
            return Ok(t);
        }
        if t - frontier <= TIME_EPS * frontier.abs().max(1.0) {
            return Ok(frontier);
        }
        Err(Error::Causality { t, frontier })
    }

    fn covering(&self, t: f64) -> &DenseSegment {
        // First segment whose end lies strictly after t; the last one covers its own end.
        let idx = self.segments.partition_point(|s| s.t_end <= t);
        &self.segments[idx.min(self.segments.len() - 1)]
    }

    pub fn eval(&self, t: f64, i: usize) -> Result<f64> {
        let t = self.snap(t)?;
        if t < self.t0 {
            return Ok(self.prehistory.component(t, i));
        }
        if self.segments.is_empty() {
            return Ok(self.y0[i]);
        }
        self.covering(t).eval_component(t, i)
    }

    pub fn eval_state(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let t = self.snap(t)?;
        if t < self.t0 {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.prehistory.component(t, i);
            }
            return Ok(());
        }
        if self.segments.is_empty() {
            out.copy_from_slice(&self.y0);
            return Ok(());
        }
        self.covering(t).eval_into(t, out)
    }
}

/// Component `i` of the stored state at `t`.
pub fn history_eval(buf: &HistoryBuffer, t: f64, i: usize) -> Result<f64> {
    buf.eval(t, i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{advance_with_tstops, SolverConfig};

    fn decay_buffer() -> HistoryBuffer {
        let segs = advance_with_tstops(
            |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0],
            0.0,
            &[1.0],
            1.0,
            &SolverConfig { h_max: 0.1, ..Default::default() },
        )
        .unwrap();
        let mut buf = HistoryBuffer::new(0.0, vec![1.0], Prehistory::Constant(vec![1.0]));
        for s in segs {
            buf.append_segment(s).unwrap();
        }
        buf
    }

    #[test]
    fn zero_prehistory_before_start() {
        let buf = HistoryBuffer::new(0.0, vec![1.0, 0.0, 0.0], Prehistory::zeros(3));
        assert_eq!(history_eval(&buf, -0.3, 0).unwrap(), 0.0);
    }

    #[test]
    fn start_instant_reads_initial_state() {
        let buf = HistoryBuffer::new(0.0, vec![1.0, 0.0, 0.0], Prehistory::zeros(3));
        assert_eq!(history_eval(&buf, -1e-9, 0).unwrap(), 0.0);
        assert_eq!(history_eval(&buf, 0.0, 0).unwrap(), 1.0);
        let full = decay_buffer();
        assert_eq!(history_eval(&full, 0.0, 0).unwrap(), 1.0);
    }

    #[test]
    fn interior_value_matches_exponential() {
        let buf = decay_buffer();
        let v = history_eval(&buf, 0.5, 0).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-6, "{v}");
    }

    #[test]
    fn query_beyond_frontier_is_a_causality_error() {
        let buf = decay_buffer();
        assert!(matches!(buf.eval(1.5, 0), Err(Error::Causality { .. })));
        // rounding-level overshoot is snapped
        assert!(buf.eval(1.0 + 1e-15, 0).is_ok());
    }

    #[test]
    fn append_rejects_gap_and_overlap() {
        let full = decay_buffer();
        let segs = full.segments().to_vec();
        let mut buf = HistoryBuffer::new(0.0, vec![1.0], Prehistory::zeros(1));
        assert!(matches!(buf.append_segment(segs[1].clone()), Err(Error::SegmentGap { .. })));
        buf.append_segment(segs[0].clone()).unwrap();
        assert_eq!(buf.frontier(), segs[0].t_end);
        assert!(buf.append_segment(segs[0].clone()).is_err());
    }

    #[test]
    fn continuous_across_interior_boundaries() {
        let buf = decay_buffer();
        assert!(buf.segments().len() >= 10);
        for pair in buf.segments().windows(2) {
            let b = pair[0].t_end;
            let left = pair[0].eval_component(b, 0).unwrap();
            let right = pair[1].eval_component(b, 0).unwrap();
            assert_eq!(left, right);
            assert_eq!(buf.eval(b, 0).unwrap(), left);
        }
    }
}
