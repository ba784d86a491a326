//! Command-line plumbing: configuration layering, output files, parameter
//! sweeps and the built-in self-test. The binary is a thin clap wrapper
//! around the functions here.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::analysis::{default_prominence, oscillation_metrics, OscillationReport};
use crate::dde::{solve_dde, DdeProblem, Past, Sample, Trajectory};
use crate::error::Error;
use crate::events::{sample_grid, EventHooks};
use crate::history::Prehistory;
use crate::red_model::{drop_probability, simulate, Profile, RedParams, SimOptions, LABELS};
use crate::solver::{advance_with_tstops, SolverConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {key}: {message}")]
    Config { key: String, message: String },

    #[error("solver failure{}: {source}", last_good.map(|t| format!(" (solution good up to t = {t})")).unwrap_or_default())]
    Solver { last_good: Option<f64>, source: Error },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn config(key: &str, message: impl Into<String>) -> Self {
        CliError::Config { key: key.to_string(), message: message.into() }
    }

    /// 2 for configuration problems, 3 for solver failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Solver { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { key, message } => CliError::Config { key, message },
            Error::InvalidConfig(msg) => {
                let key = msg.split_whitespace().next().unwrap_or("solver").to_string();
                CliError::Config { key, message: msg }
            }
            Error::InvalidProblem(msg) => CliError::Config { key: "problem".into(), message: msg },
            other => CliError::Solver { last_good: other.last_good_time(), source: other },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// `param:start:stop:count`
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: String,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.stop } else { self.start + i as f64 * step })
            .collect()
    }
}

impl FromStr for SweepSpec {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [param, start, stop, count] = parts[..] else {
            return Err(CliError::config("sweep", format!("expected param:start:stop:count, got '{s}'")));
        };
        let num = |v: &str| parse_f64("sweep", v);
        let count: usize = count
            .parse()
            .map_err(|_| CliError::config("sweep", format!("count '{count}' is not an integer")))?;
        if count < 2 {
            return Err(CliError::config("sweep", "count must be at least 2"));
        }
        let spec = SweepSpec { param: param.to_string(), start: num(start)?, stop: num(stop)?, count };
        // reject unknown or non-numeric parameters up front
        apply_override(&mut RunConfig::new(Profile::Custom), &spec.param, "1")?;
        Ok(spec)
    }
}

/// Everything needed for one run, after profile defaults, config file and
/// command-line overrides have been layered.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub params: RedParams,
    pub sim: SimOptions,
    pub out: PathBuf,
    /// Also write the trajectory resampled on this uniform grid.
    pub grid_dt: Option<f64>,
}

impl RunConfig {
    pub fn new(profile: Profile) -> Self {
        Self {
            profile,
            params: RedParams::profile(profile),
            sim: SimOptions::default(),
            out: PathBuf::from("out"),
            grid_dt: None,
        }
    }

    /// Layers `entries` (in increasing precedence) over the profile defaults.
    /// The last `profile` entry picks the base profile.
    pub fn from_entries(entries: &[(String, String)]) -> CliResult<Self> {
        let profile = match entries.iter().rev().find(|(k, _)| k == "profile") {
            Some((_, v)) => v.parse().map_err(|e: String| CliError::config("profile", e))?,
            None => Profile::Julia,
        };
        let mut cfg = Self::new(profile);
        for (k, v) in entries.iter().filter(|(k, _)| k != "profile") {
            apply_override(&mut cfg, k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.params.validate()?;
        if !(self.sim.tf > 0.0) {
            return Err(CliError::config("tf", "must be > 0"));
        }
        if !(self.sim.sample_dt > 0.0) {
            return Err(CliError::config("sample_dt", "must be > 0"));
        }
        if let Some(dt) = self.grid_dt {
            if !(dt > 0.0) {
                return Err(CliError::config("grid", "must be > 0"));
            }
        }
        self.sim.solver.validate(0.0, self.sim.tf)?;
        Ok(())
    }
}

fn parse_f64(key: &str, v: &str) -> CliResult<f64> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::config(key, format!("'{v}' is not a finite number")))
}

fn parse_bool(key: &str, v: &str) -> CliResult<bool> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::config(key, format!("'{v}' is not a boolean"))),
    }
}

/// Sets one named field. Keys accept both the short model symbols and the
/// long field names.
pub fn apply_override(cfg: &mut RunConfig, key: &str, value: &str) -> CliResult<()> {
    let p = &mut cfg.params;
    let s = &mut cfg.sim;
    let num = || parse_f64(key, value);
    match key {
        "T" | "rtt" => p.rtt = num()?,
        "N" | "sessions" => p.sessions = num()?,
        "C" | "service_rate" => p.service_rate = num()?,
        "w_q" => p.w_q = num()?,
        "q_min" => p.q_min = num()?,
        "q_max" => p.q_max = num()?,
        "R" | "capacity" => p.capacity = num()?,
        "p_max" => p.p_max = num()?,
        "w_max" => p.w_max = num()?,
        "use_drop_factor_in_queue" => p.use_drop_factor_in_queue = parse_bool(key, value)?,
        "use_heaviside_cap" => p.use_heaviside_cap = parse_bool(key, value)?,
        "delayed_drop" => p.delayed_drop = parse_bool(key, value)?,
        "clamp_q_avg" => p.clamp_q_avg = parse_bool(key, value)?,
        "controller_enabled" => p.controller_enabled = parse_bool(key, value)?,
        "prehistory_mode" => p.prehistory_mode = value.trim().parse().map_err(|e: String| CliError::config(key, e))?,
        "tf" => s.tf = num()?,
        "sample_dt" => s.sample_dt = num()?,
        "abs_tol" => s.solver.abs_tol = num()?,
        "rel_tol" => s.solver.rel_tol = num()?,
        "h_init" => s.solver.h_init = num()?,
        "h_max" => s.solver.h_max = num()?,
        "h_min" => s.solver.h_min = num()?,
        "safety_factor" => s.solver.safety_factor = num()?,
        "w0" => s.initial[0] = num()?,
        "q0" => s.initial[1] = num()?,
        "q_avg0" => s.initial[2] = num()?,
        "grid" => cfg.grid_dt = Some(num()?),
        "out" => cfg.out = PathBuf::from(value.trim()),
        "profile" => {
            return Err(CliError::config(key, "profile can only be chosen as the base, not overridden"));
        }
        _ => return Err(CliError::config(key, "unknown parameter")),
    }
    Ok(())
}

/// Parses `key=value`.
pub fn parse_assignment(s: &str) -> CliResult<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(CliError::config(s, "expected key=value")),
    }
}

/// Flat `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> CliResult<Vec<(String, String)>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(parse_assignment)
        .collect()
}

pub fn read_config_file(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

pub fn run_simulation(cfg: &RunConfig) -> CliResult<Trajectory> {
    Ok(simulate(&cfg.params, &cfg.sim)?)
}

/// The trajectory on a uniform grid from its start to its end: dense output
/// for the state, zero-order hold for `p`.
pub fn resample(traj: &Trajectory, dt: f64) -> CliResult<Vec<Sample>> {
    sample_grid(traj.t0(), traj.tf(), dt)
        .into_iter()
        .map(|t| Ok(Sample { t, y: traj.state_at(t)?, p: traj.output_at(t) }))
        .collect()
}

pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "w", "q", "q_avg", "p"];

fn csv_string(rows: impl IntoIterator<Item = Vec<String>>, header: Option<&[&str]>) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    if let Some(h) = header {
        w.write_record(h).expect("in-memory write");
    }
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// CSV with shortest round-trip float formatting.
pub fn trajectory_csv(samples: &[Sample]) -> String {
    let rows = samples.iter().map(|s| {
        let mut row = vec![format!("{:?}", s.t)];
        row.extend(s.y.iter().map(|v| format!("{v:?}")));
        row.push(format!("{:?}", s.p));
        row
    });
    csv_string(rows, Some(&TRAJECTORY_HEADER))
}

pub fn parse_trajectory_csv(text: &str) -> std::result::Result<Vec<Sample>, csv::Error> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    if r.headers()? != TRAJECTORY_HEADER.as_slice() {
        return Err(csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, "unexpected header")));
    }
    r.deserialize::<(f64, f64, f64, f64, f64)>()
        .map(|row| row.map(|(t, w, q, q_avg, p)| Sample { t, y: vec![w, q, q_avg], p }))
        .collect()
}

/// One line per event: `t,kind,component,detail`.
pub fn events_csv(traj: &Trajectory) -> String {
    let rows = traj
        .events
        .iter()
        .map(|e| vec![format!("{:?}", e.t), e.kind.to_string(), e.component.clone(), e.detail.clone()]);
    csv_string(rows, None)
}

/// Oscillation metrics for every component over the second half of the run.
pub fn reports(traj: &Trajectory) -> Vec<OscillationReport> {
    let window = (traj.t0() + 0.5 * (traj.tf() - traj.t0()), traj.tf());
    (0..traj.labels.len())
        .map(|i| oscillation_metrics(traj, i, window, default_prominence(&traj.labels[i])))
        .collect()
}

pub fn report_text(cfg: &RunConfig, traj: &Trajectory) -> String {
    let mut out = String::new();
    writeln!(out, "profile = {}", cfg.profile).unwrap();
    writeln!(out, "samples = {}", traj.samples.len()).unwrap();
    writeln!(out, "events = {}", traj.events.len()).unwrap();
    for r in reports(traj) {
        writeln!(
            out,
            "{}: peaks = {}, mean_period = {:.4}, period_cv = {:.4}, amplitude_retention = {:.4}, sustained = {}",
            r.component,
            r.peak_times.len(),
            r.mean_period,
            r.period_cv,
            r.amplitude_retention,
            r.sustained
        )
        .unwrap();
    }
    out
}

/// Runs once and writes `trajectory.csv`, `events.csv`, `report.txt` and,
/// with a grid set, `trajectory_grid.csv` into `dir`.
pub fn run_to_dir(cfg: &RunConfig, dir: &Path) -> CliResult<Trajectory> {
    let traj = run_simulation(cfg)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trajectory.csv"), trajectory_csv(&traj.samples))?;
    fs::write(dir.join("events.csv"), events_csv(&traj))?;
    fs::write(dir.join("report.txt"), report_text(cfg, &traj))?;
    if let Some(dt) = cfg.grid_dt {
        fs::write(dir.join("trajectory_grid.csv"), trajectory_csv(&resample(&traj, dt)?))?;
    }
    Ok(traj)
}

#[derive(Debug)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub dir: PathBuf,
    pub result: CliResult<Vec<OscillationReport>>,
}

/// Runs every sweep point in parallel, one output directory each, then
/// writes `index.csv` once all points are done.
pub fn sweep(base: &RunConfig, spec: &SweepSpec) -> CliResult<Vec<SweepPoint>> {
    let values = spec.values();
    let mut configs = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let mut cfg = base.clone();
        apply_override(&mut cfg, &spec.param, &format!("{v:?}"))?;
        cfg.out = base.out.join(format!("point_{i:03}"));
        configs.push(cfg);
    }

    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(values.len()));
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(configs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let result = cfg.validate().and_then(|_| run_to_dir(cfg, &cfg.out)).map(|t| reports(&t));
                results.lock().unwrap().push(SweepPoint { index: i, value: values[i], dir: cfg.out.clone(), result });
            });
        }
    });
    let mut points = results.into_inner().unwrap();
    points.sort_by_key(|p| p.index);

    fs::create_dir_all(&base.out)?;
    fs::write(base.out.join("index.csv"), sweep_index_csv(spec, &points))?;
    Ok(points)
}

fn sweep_index_csv(spec: &SweepSpec, points: &[SweepPoint]) -> String {
    let mut header = vec!["index".to_string(), spec.param.clone(), "dir".into(), "status".into()];
    header.extend(LABELS.iter().map(|l| format!("{l}_sustained")));
    let rows = points.iter().map(|p| {
        let dir = p.dir.file_name().map(|d| d.to_string_lossy().into_owned()).unwrap_or_default();
        let mut row = vec![p.index.to_string(), format!("{:?}", p.value), dir];
        match &p.result {
            Ok(reports) => {
                row.push("ok".into());
                row.extend(reports.iter().map(|r| r.sustained.to_string()));
            }
            Err(e) => {
                row.push(format!("error{}", e.exit_code()));
                row.extend(LABELS.iter().map(|_| String::new()));
            }
        }
        row
    });
    csv_string(std::iter::once(header).chain(rows), None)
}

/// `q_avg,p` rows of the drop law.
pub fn droplaw_table(params: &RedParams, q_avgs: &[f64]) -> String {
    let rows = q_avgs.iter().map(|&q| vec![format!("{q:?}"), format!("{:?}", drop_probability(q, params))]);
    csv_string(rows, Some(&["q_avg", "p"]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, err: f64, tol: f64) -> Check {
    Check { name, passed: err <= tol, detail: format!("error {err:.3e}, tolerance {tol:.0e}") }
}

/// Closed-form checks of the solver, the delay driver and the model pieces.
pub fn selftest() -> Vec<Check> {
    let mut out = Vec::new();

    let cfg = SolverConfig { abs_tol: 1e-10, rel_tol: 1e-10, ..Default::default() };
    let err = advance_with_tstops(|_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0], 0.0, &[1.0], 1.0, &cfg)
        .map(|segs| (segs.last().unwrap().y_end[0] - (-1.0f64).exp()).abs())
        .unwrap_or(f64::INFINITY);
    out.push(check("exponential decay y(1) = 1/e", err, 1e-8));

    // y' = -y(t - 1), y = 1 before 0: y(1) = 0, y(2) = -1/2, y(3) = -1/6
    let err = (|| -> crate::Result<f64> {
        let problem = DdeProblem::new(
            |t: f64, _y: &[f64], past: &Past<'_>, _d: &(), dy: &mut [f64]| dy[0] = -past.at(t - 1.0, 0),
            vec![1.0],
            (0.0, 3.0),
            vec![1.0],
            Prehistory::Constant(vec![1.0]),
        )?;
        let cfg = SolverConfig { abs_tol: 1e-10, rel_tol: 1e-10, ..Default::default() };
        let traj = solve_dde(&problem, &cfg, &mut EventHooks::default(), &mut ())?;
        let mut worst = 0.0f64;
        for (t, want) in [(1.0, 0.0), (2.0, -0.5), (3.0, -1.0 / 6.0)] {
            worst = worst.max((traj.state_at(t)?[0] - want).abs());
        }
        Ok(worst)
    })()
    .unwrap_or(f64::INFINITY);
    out.push(check("delay equation y' = -y(t-1)", err, 1e-6));

    let p = RedParams::profile(Profile::Julia);
    let err = [(75.0, 0.0), (112.5, 0.05), (150.0, 0.1), (200.0, 1.0)]
        .iter()
        .map(|&(q, want)| (drop_probability(q, &p) - want).abs())
        .fold(0.0, f64::max);
    out.push(check("drop law table", err, 1e-12));

    // averaged queue driven by a constant queue of 100: 100 (1 - e^-t)
    let err = advance_with_tstops(
        |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = p.w_q * p.service_rate * (100.0 - y[0]),
        0.0,
        &[0.0],
        5.0,
        &SolverConfig::default(),
    )
    .map(|segs| (segs.last().unwrap().y_end[0] - 100.0 * (1.0 - (-5.0f64).exp())).abs())
    .unwrap_or(f64::INFINITY);
    out.push(check("averaged queue closed form", err, 1e-4));

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn later_entries_win() {
        let cfg = RunConfig::from_entries(&entries(&[("N", "50"), ("profile", "modelica"), ("N", "70")])).unwrap();
        assert_eq!(cfg.profile, Profile::Modelica);
        assert_eq!(cfg.params.sessions, 70.0);
        assert_eq!(cfg.params.rtt, 0.05);
    }

    #[test]
    fn config_text_skips_comments() {
        let e = parse_config_text("# base\nT = 0.2\n\nw_q=0.001  # weight\n").unwrap();
        assert_eq!(e, entries(&[("T", "0.2"), ("w_q", "0.001")]));
        assert!(parse_config_text("T 0.2").is_err());
    }

    #[test]
    fn config_errors_name_the_key() {
        let err = RunConfig::from_entries(&entries(&[("q_min", "0.9")])).unwrap_err();
        assert!(matches!(&err, CliError::Config { key, .. } if key == "q_min"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::from_entries(&entries(&[("bogus", "1")])).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let err = RunConfig::from_entries(&entries(&[("abs_tol", "-1")])).unwrap_err();
        assert!(matches!(&err, CliError::Config { key, .. } if key == "abs_tol"), "{err}");
        let err = RunConfig::from_entries(&entries(&[("profile", "ns2")])).unwrap_err();
        assert!(err.to_string().contains("profile"));
    }

    #[test]
    fn sweep_spec_parsing() {
        let s: SweepSpec = "N:40:80:5".parse().unwrap();
        assert_eq!(s.values(), vec![40.0, 50.0, 60.0, 70.0, 80.0]);
        assert!("N:40:80:1".parse::<SweepSpec>().is_err());
        assert!("N:40:80".parse::<SweepSpec>().is_err());
        assert!("nope:1:2:3".parse::<SweepSpec>().is_err());
    }

    #[test]
    fn solver_failure_maps_to_exit_3() {
        let e: CliError = Error::StepSizeUnderflow { t: 1.5, h: 1e-13 }.into();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("t = 1.5"));
    }

    #[test]
    fn droplaw_rows() {
        let t = droplaw_table(&RedParams::default(), &[112.5, 200.0]);
        assert_eq!(t, "q_avg,p\n112.5,0.05\n200.0,1.0\n");
    }

    #[test]
    fn selftest_passes() {
        for c in selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
