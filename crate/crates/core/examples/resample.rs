//! Resamples a run onto a coarse uniform grid and prints it as CSV.

use redsim::cli::{resample, trajectory_csv};
use redsim::red_model::{simulate, RedParams, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let traj = simulate(&RedParams::default(), &SimOptions::default())?;
    let grid = resample(&traj, 1.0)?;
    print!("{}", trajectory_csv(&grid));
    Ok(())
}
