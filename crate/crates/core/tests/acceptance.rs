//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use redsim::analysis::{default_prominence, oscillation_metrics};
use redsim::cli::resample;
use redsim::dde::{solve_dde, DdeProblem, Past, Trajectory};
use redsim::events::{sample_grid, EventHooks};
use redsim::history::Prehistory;
use redsim::red_model::{drop_probability, simulate, Profile, RedParams, SimOptions, Q, Q_AVG, W};
use redsim::solver::{advance_with_tstops, rk_step, SolverConfig};

const DDE_TOL: f64 = 1e-6;
const DDE_MAX_RUNTIME: Duration = Duration::from_millis(100);
const MIN_ORDER: f64 = 4.0;
const EWMA_TOL: f64 = 1e-4;
const DROP_TOL: f64 = 1e-12;
const DROP_GRID_POINTS: usize = 10_000;
const MODEL_MAX_RUNTIME: Duration = Duration::from_secs(2);
const OSC_WINDOW: (f64, f64) = (15.0, 30.0);
// q approaches R exponentially once saturated
const SATURATION_TOL: f64 = 1e-3;
const MIN_FLAG_EFFECT: f64 = 0.01;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn dde_oracle() -> Outcome {
    let start = Instant::now();
    let problem = DdeProblem::new(
        |t: f64, _y: &[f64], past: &Past<'_>, _: &(), dy: &mut [f64]| dy[0] = -past.at(t - 1.0, 0),
        vec![1.0],
        (0.0, 3.0),
        vec![1.0],
        Prehistory::Constant(vec![1.0]),
    )
    .map_err(|e| e.to_string())?;
    let traj = solve_dde(&problem, &SolverConfig::default(), &mut EventHooks::default(), &mut ()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut worst = 0.0f64;
    for (t, want) in [(1.0, 0.0), (2.0, -0.5), (3.0, -1.0 / 6.0)] {
        let got = traj.state_at(t).map_err(|e| e.to_string())?[0];
        worst = worst.max((got - want).abs());
    }
    let detail = format!("max error {worst:.2e} (tol {DDE_TOL:.0e}), runtime {elapsed:?}");
    if worst <= DDE_TOL && elapsed < DDE_MAX_RUNTIME {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rk_order() -> Outcome {
    let decay = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
    let error = |n: usize| {
        let h = 1.0 / n as f64;
        let mut y = vec![1.0];
        for i in 0..n {
            y = rk_step(&mut { decay }, i as f64 * h, &y, h, &SolverConfig::default()).y_new;
        }
        (y[0] - (-1.0f64).exp()).abs()
    };
    let errs: Vec<f64> = [5, 10, 20, 40].iter().map(|&n| error(n)).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let detail = format!("observed orders {:.3?}", orders);
    if orders.iter().all(|&o| o >= MIN_ORDER) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ewma_closed_form() -> Outcome {
    let p = RedParams::default();
    if p.w_q * p.service_rate != 1.0 {
        return Err(format!("w_q * C = {}", p.w_q * p.service_rate));
    }
    let segs = advance_with_tstops(
        |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = p.w_q * p.service_rate * (100.0 - y[0]),
        0.0,
        &[0.0],
        5.0,
        &SolverConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let got = segs.last().unwrap().y_end[0];
    let want = 100.0 * (1.0 - (-5.0f64).exp());
    let detail = format!("q_avg(5) = {got:.6}, closed form {want:.6}");
    if (got - want).abs() <= EWMA_TOL && (want - 99.32621).abs() <= EWMA_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn drop_law() -> Outcome {
    let p = RedParams::default();
    let table = [(0.0, 0.0), (75.0, 0.0), (112.5, 0.05), (150.0, 0.1), (150.0 + 1e-9, 1.0)];
    for (q, want) in table {
        let got = drop_probability(q, &p);
        if (got - want).abs() > DROP_TOL {
            return Err(format!("p({q}) = {got}, expected {want}"));
        }
    }
    let grid: Vec<f64> = (0..DROP_GRID_POINTS).map(|i| 400.0 * i as f64 / (DROP_GRID_POINTS - 1) as f64).collect();
    if let Some(w) = grid.windows(2).find(|w| drop_probability(w[1], &p) < drop_probability(w[0], &p)) {
        return Err(format!("decreases between {} and {}", w[0], w[1]));
    }
    Ok(format!("table exact, monotone over {DROP_GRID_POINTS} points"))
}

fn model_invariants() -> Outcome {
    let params = RedParams::profile(Profile::Julia);
    let opts = SimOptions::default();
    let start = Instant::now();
    let traj = simulate(&params, &opts).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    for s in &traj.samples {
        let (w, q, qa, p) = (s.y[W], s.y[Q], s.y[Q_AVG], s.p);
        if !(1.0..=32.0).contains(&w) || !(0.0..=300.0).contains(&q) || !(0.0..=300.0).contains(&qa) {
            return Err(format!("state out of bounds at t = {}: w = {w}, q = {q}, q_avg = {qa}", s.t));
        }
        if !(p == 1.0 || (0.0..=0.1).contains(&p)) {
            return Err(format!("p = {p} at t = {}", s.t));
        }
    }
    let grid = sample_grid(0.0, opts.tf, opts.sample_dt);
    for w in traj.samples.windows(2) {
        if w[0].p != w[1].p && grid.binary_search_by(|g| g.total_cmp(&w[1].t)).is_err() {
            return Err(format!("p changed between stops at t = {}", w[1].t));
        }
    }
    let detail = format!("{} samples in bounds, runtime {elapsed:?}", traj.samples.len());
    if elapsed < MODEL_MAX_RUNTIME {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sustained(traj: &Trajectory, c: usize) -> (bool, String) {
    let name = &traj.labels[c];
    let r = oscillation_metrics(traj, c, OSC_WINDOW, default_prominence(name));
    let detail = format!(
        "{name}: {} peaks, period cv {:.3}, retention {:.3}",
        r.peak_times.len(),
        r.period_cv,
        r.amplitude_retention
    );
    (r.sustained, detail)
}

fn self_oscillation(profile: Profile) -> Outcome {
    let traj = simulate(&RedParams::profile(profile), &SimOptions::default()).map_err(|e| e.to_string())?;
    let (w_ok, w_detail) = sustained(&traj, W);
    let (qa_ok, qa_detail) = sustained(&traj, Q_AVG);
    let detail = format!("{profile}: {w_detail}; {qa_detail}");
    if w_ok && qa_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn saturation() -> Outcome {
    let params = RedParams { controller_enabled: false, ..RedParams::profile(Profile::Julia) };
    let traj = simulate(&params, &SimOptions::default()).map_err(|e| e.to_string())?;
    if let Some(s) = traj.samples.iter().find(|s| s.p != 0.0) {
        return Err(format!("p = {} at t = {}", s.p, s.t));
    }
    let r = params.capacity;
    let reached = traj.samples.iter().position(|s| s.y[Q] >= r - SATURATION_TOL);
    let Some(i) = reached else {
        let max = traj.samples.iter().map(|s| s.y[Q]).fold(0.0, f64::max);
        return Err(format!("max q = {max}"));
    };
    if let Some(s) = traj.samples[i..].iter().find(|s| s.y[Q] < r - SATURATION_TOL || s.y[Q] > r) {
        return Err(format!("q left saturation at t = {}: {}", s.t, s.y[Q]));
    }
    let last = traj.samples.last().unwrap().y[Q];
    Ok(format!("q within {SATURATION_TOL:.0e} of R from t = {:.2} on, q(tf) = {last}", traj.samples[i].t))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for run in ["a", "b"] {
        let status = Command::new(env!("CARGO_BIN_EXE_redsim"))
            .args(["run", "--out"])
            .arg(dir.path().join(run))
            .output()
            .map_err(|e| e.to_string())?
            .status;
        if !status.success() {
            return Err(format!("run exited with {status}"));
        }
    }
    for f in ["trajectory.csv", "events.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).map_err(|e| e.to_string())?;
        let b = fs::read(dir.path().join("b").join(f)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{f} differs"));
        }
    }
    Ok("trajectory.csv and events.csv byte-identical".into())
}

fn max_w_difference(a: &RedParams, b: &RedParams) -> Result<f64, String> {
    let opts = SimOptions::default();
    let ta = simulate(a, &opts).map_err(|e| e.to_string())?;
    let tb = simulate(b, &opts).map_err(|e| e.to_string())?;
    let ga = resample(&ta, opts.sample_dt).map_err(|e| e.to_string())?;
    let gb = resample(&tb, opts.sample_dt).map_err(|e| e.to_string())?;
    Ok(ga.iter().zip(&gb).map(|(x, y)| (x.y[W] - y.y[W]).abs()).fold(0.0, f64::max))
}

fn flag_sensitivity() -> Outcome {
    let base = RedParams::profile(Profile::Julia);
    let variants = [
        ("use_drop_factor_in_queue", RedParams { use_drop_factor_in_queue: true, ..base.clone() }),
        ("delayed_drop", RedParams { delayed_drop: true, ..base.clone() }),
        ("profile modelica", RedParams::profile(Profile::Modelica)),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, v) in &variants {
        let d = max_w_difference(&base, v)?;
        ok &= d > MIN_FLAG_EFFECT;
        parts.push(format!("{name}: {d:.3}"));
    }
    let detail = format!("max |dw| {}", parts.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("delay equation oracle", dde_oracle),
        ("Runge-Kutta order", rk_order),
        ("averaged queue closed form", ewma_closed_form),
        ("drop law table", drop_law),
        ("full model invariants", model_invariants),
        ("self-oscillation (julia)", || self_oscillation(Profile::Julia)),
        ("saturation without controller", saturation),
        ("determinism", determinism),
        ("flag sensitivity", flag_sensitivity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    let info = match self_oscillation(Profile::Modelica) {
        Ok(d) => format!("sustained, {d}"),
        Err(d) => format!("not sustained, {d}"),
    };
    println!("info: self-oscillation (modelica): {info}");
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
