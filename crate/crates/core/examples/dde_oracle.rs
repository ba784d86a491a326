//! y'(t) = -y(t - 1) with y = 1 before 0, against the piecewise
//! polynomial solution obtained by the method of steps.

use redsim::dde::{solve_dde, DdeProblem, Past};
use redsim::events::EventHooks;
use redsim::history::Prehistory;
use redsim::solver::SolverConfig;

fn exact(t: f64) -> f64 {
    if t <= 1.0 {
        1.0 - t
    } else if t <= 2.0 {
        1.0 - t + (t - 1.0).powi(2) / 2.0
    } else {
        1.0 - t + (t - 1.0).powi(2) / 2.0 - (t - 2.0).powi(3) / 6.0
    }
}

fn main() -> redsim::Result<()> {
    let problem = DdeProblem::new(
        |t: f64, _y: &[f64], past: &Past<'_>, _: &(), dy: &mut [f64]| dy[0] = -past.at(t - 1.0, 0),
        vec![1.0],
        (0.0, 3.0),
        vec![1.0],
        Prehistory::Constant(vec![1.0]),
    )?;
    let cfg = SolverConfig { abs_tol: 1e-10, rel_tol: 1e-10, ..Default::default() };
    let traj = solve_dde(&problem, &cfg, &mut EventHooks::default(), &mut ())?;
    println!("{} steps", traj.samples.len() - 1);
    for t in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
        let y = traj.state_at(t)?[0];
        println!("t = {t:.1}  y = {y:+.10}  exact = {:+.10}  error = {:.1e}", exact(t), (y - exact(t)).abs());
    }
    Ok(())
}
