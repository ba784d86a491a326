//! A thermostat: continuous heating and cooling, a heater switched on a
//! sampled grid on a lagged sensor, and a safety cutoff clamping the
//! temperature at 22.5.

use redsim::dde::{solve_dde, DdeProblem, Past};
use redsim::events::{sample_grid, ClampSpec, EventHooks, SampledCallback};
use redsim::history::Prehistory;
use redsim::solver::SolverConfig;

fn main() -> redsim::Result<()> {
    let ambient = 10.0;
    // temperature relaxes to ambient, heater adds 8 deg/s when on; sensor lag 0.5 s
    let problem = DdeProblem::new(
        |t: f64, y: &[f64], past: &Past<'_>, heater: &f64, dy: &mut [f64]| {
            dy[0] = -(y[0] - ambient) * 0.5 + 8.0 * heater;
            dy[1] = past.at(t - 0.5, 0) - y[1];
        },
        vec![ambient, ambient],
        (0.0, 20.0),
        vec![0.5],
        Prehistory::Constant(vec![ambient, ambient]),
    )?;
    let grid = sample_grid(0.0, 20.0, 0.25);
    let callback = SampledCallback::new(grid, |_t, y: &[f64], heater: &mut f64| {
        *heater = if y[1] < 19.0 { 1.0 } else if y[1] > 21.0 { 0.0 } else { *heater };
    })?;
    let mut hooks = EventHooks {
        clamps: vec![ClampSpec::upper(0, 22.5)],
        callback: Some(callback),
        labels: vec!["temp".into(), "sensor".into()],
    };
    let mut heater = 0.0;
    let traj = solve_dde(&problem, &SolverConfig::default(), &mut hooks, &mut heater)?;

    for e in traj.events.iter().take(12) {
        println!("t = {:6.2}  {}  {}  {}", e.t, e.kind, e.component, e.detail);
    }
    println!("{} events, {} samples", traj.events.len(), traj.samples.len());
    let tail = traj.series(0).into_iter().filter(|&(t, _)| t >= 10.0).map(|(_, v)| v);
    let (lo, hi) = tail.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    println!("temperature over [10, 20]: {lo:.2} .. {hi:.2}");
    Ok(())
}
