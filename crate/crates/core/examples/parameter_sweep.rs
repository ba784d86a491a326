//! Sweeps the number of sessions for the modelica profile and prints the
//! index written next to the per-point outputs.

use redsim::cli::{sweep, RunConfig, SweepSpec};
use redsim::red_model::Profile;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut base = RunConfig::new(Profile::Modelica);
    base.out = std::env::temp_dir().join("redsim_sweep_example");
    let spec: SweepSpec = "N:20:100:5".parse()?;
    let points = sweep(&base, &spec)?;
    println!("{} points under {}", points.len(), base.out.display());
    print!("{}", std::fs::read_to_string(base.out.join("index.csv"))?);
    Ok(())
}
