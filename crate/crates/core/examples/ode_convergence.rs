//! Convergence of the embedded pair on y' = -y.
//!
//! Fixed steps show the fifth-order slope; adaptive runs show the global
//! error tracking the requested tolerance.

use redsim::solver::{advance_with_tstops, rk_step, SolverConfig};

fn decay(_t: f64, y: &[f64], dy: &mut [f64]) {
    dy[0] = -y[0];
}

fn fixed_step_error(n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let cfg = SolverConfig::default();
    let mut y = vec![1.0];
    for i in 0..n {
        y = rk_step(&mut decay, i as f64 * h, &y, h, &cfg).y_new;
    }
    (y[0] - (-1.0f64).exp()).abs()
}

fn main() {
    println!("fixed step");
    let mut prev: Option<f64> = None;
    for n in [4, 8, 16, 32, 64] {
        let err = fixed_step_error(n);
        match prev {
            Some(p) => println!("  n = {n:3}  error = {err:.3e}  order = {:.2}", (p / err).log2()),
            None => println!("  n = {n:3}  error = {err:.3e}"),
        }
        prev = Some(err);
    }

    println!("adaptive");
    for tol in [1e-4, 1e-6, 1e-8, 1e-10] {
        let cfg = SolverConfig { abs_tol: tol, rel_tol: tol, ..Default::default() };
        let segs = advance_with_tstops(decay, 0.0, &[1.0], 1.0, &cfg).expect("smooth problem");
        let err = (segs.last().unwrap().y_end[0] - (-1.0f64).exp()).abs();
        println!("  tol = {tol:.0e}  steps = {:4}  error = {err:.3e}", segs.len());
    }
}
