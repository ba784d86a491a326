//! Simulates both reference profiles and reports whether the window and
//! the averaged queue settle into a sustained oscillation.

use redsim::analysis::{default_prominence, oscillation_metrics};
use redsim::red_model::{simulate, Profile, RedParams, SimOptions, LABELS, Q_AVG, W};

fn main() -> redsim::Result<()> {
    for profile in [Profile::Julia, Profile::Modelica] {
        let params = RedParams::profile(profile);
        let traj = simulate(&params, &SimOptions::default())?;
        println!("{profile} (T = {} s): {} samples, {} events", params.rtt, traj.samples.len(), traj.events.len());
        for c in [W, Q_AVG] {
            let r = oscillation_metrics(&traj, c, (15.0, 30.0), default_prominence(LABELS[c]));
            println!(
                "  {:5} peaks = {:2}  period = {:7.3}  cv = {:.3}  retention = {:.3}  sustained = {}",
                r.component,
                r.peak_times.len(),
                r.mean_period,
                r.period_cv,
                r.amplitude_retention,
                r.sustained
            );
        }
    }
    Ok(())
}
