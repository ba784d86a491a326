use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use redsim::cli::{self, CliResult, RunConfig, SweepSpec};

#[derive(Parser)]
#[command(name = "redsim", version, about = "TCP/RED hybrid delay-equation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate once and write trajectory, events and report
    Run(Common),
    /// Simulate over a range of one parameter
    Sweep {
        #[command(flatten)]
        common: Common,
        /// param:start:stop:count
        #[arg(long)]
        sweep: String,
    },
    /// Print the drop probability for the given averaged queue values
    Droplaw {
        #[command(flatten)]
        common: Common,
        #[arg(required = true, allow_negative_numbers = true)]
        q_avg: Vec<f64>,
    },
    /// Run the built-in closed-form checks
    Selftest,
}

#[derive(Args)]
struct Common {
    /// Flat key = value file, applied before --set
    #[arg(long)]
    config: Option<PathBuf>,
    /// julia, modelica or custom
    #[arg(long)]
    profile: Option<String>,
    /// Override a parameter, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    tf: Option<f64>,
    #[arg(long)]
    sample_dt: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the trajectory resampled with this spacing
    #[arg(long)]
    grid: Option<f64>,
}

impl Common {
    fn build(&self) -> CliResult<RunConfig> {
        let mut entries = match &self.config {
            Some(path) => cli::read_config_file(path)?,
            None => Vec::new(),
        };
        if let Some(p) = &self.profile {
            entries.push(("profile".into(), p.clone()));
        }
        let flags = [("tf", self.tf), ("sample_dt", self.sample_dt), ("grid", self.grid)];
        for (k, v) in flags {
            if let Some(v) = v {
                entries.push((k.into(), format!("{v:?}")));
            }
        }
        if let Some(out) = &self.out {
            entries.push(("out".into(), out.display().to_string()));
        }
        for s in &self.set {
            entries.push(cli::parse_assignment(s)?);
        }
        RunConfig::from_entries(&entries)
    }
}

fn run(command: Command) -> CliResult<bool> {
    match command {
        Command::Run(common) => {
            let cfg = common.build()?;
            let traj = cli::run_to_dir(&cfg, &cfg.out)?;
            print!("{}", cli::report_text(&cfg, &traj));
            println!("wrote {}", cfg.out.display());
            Ok(true)
        }
        Command::Sweep { common, sweep } => {
            let cfg = common.build()?;
            let spec: SweepSpec = sweep.parse()?;
            let points = cli::sweep(&cfg, &spec)?;
            let mut ok = true;
            for p in &points {
                match &p.result {
                    Ok(_) => println!("{} = {:?}: ok", spec.param, p.value),
                    Err(e) => {
                        ok = false;
                        eprintln!("{} = {:?}: {e}", spec.param, p.value);
                    }
                }
            }
            println!("wrote {}", cfg.out.join("index.csv").display());
            Ok(ok)
        }
        Command::Droplaw { common, q_avg } => {
            let cfg = common.build()?;
            print!("{}", cli::droplaw_table(&cfg.params, &q_avg));
            Ok(true)
        }
        Command::Selftest => {
            let checks = cli::selftest();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("redsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
