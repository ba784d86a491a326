//! Peak detection and sustained-oscillation metrics over sampled series.

use crate::dde::Trajectory;

/// Largest coefficient of variation of the peak-to-peak periods accepted as
/// a regular oscillation.
pub const MAX_PERIOD_CV: f64 = 0.2;
/// Smallest ratio of last to first peak amplitude accepted as undamped.
pub const MIN_AMPLITUDE_RETENTION: f64 = 0.5;
pub const MIN_PEAKS: usize = 3;

/// Default prominence thresholds per model component, in packets.
pub fn default_prominence(component: &str) -> f64 {
    match component {
        "w" => 1.0,
        _ => 5.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub t: f64,
    pub value: f64,
    /// Height above the higher of the two flanking minima.
    pub prominence: f64,
}

/// Local maxima of a time-ordered series whose prominence is at least
/// `min_prominence`.
///
/// A flanking minimum is the lowest value between the peak and the nearest
/// strictly higher sample on that side (or the series end). Flat tops count
/// once, at their middle sample.
pub fn find_peaks(series: &[(f64, f64)], min_prominence: f64) -> Vec<Peak> {
    let n = series.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    let v = |i: usize| series[i].1;
    let mut i = 1;
    while i < n - 1 {
        if !(v(i) > v(i - 1)) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && v(j + 1) == v(i) {
            j += 1;
        }
        if j + 1 < n && v(j + 1) < v(i) {
            let top = v(i);
            let left_min = series[..i]
                .iter()
                .rev()
                .take_while(|p| p.1 <= top)
                .fold(top, |m, p| m.min(p.1));
            let right_min = series[j + 1..]
                .iter()
                .take_while(|p| p.1 <= top)
                .fold(top, |m, p| m.min(p.1));
            let prominence = top - left_min.max(right_min);
            if prominence >= min_prominence {
                let mid = (i + j) / 2;
                peaks.push(Peak { index: mid, t: series[mid].0, value: top, prominence });
            }
        }
        i = j + 1;
    }
    peaks
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationReport {
    pub component: String,
    pub peak_times: Vec<f64>,
    /// Prominence of each peak.
    pub amplitudes: Vec<f64>,
    /// NaN with fewer than two peaks.
    pub mean_period: f64,
    /// NaN with fewer than two peaks.
    pub period_cv: f64,
    /// Last amplitude over first amplitude; NaN without peaks.
    pub amplitude_retention: f64,
    pub sustained: bool,
}

/// Oscillation metrics over the part of `series` inside `window`.
///
/// Peaks and their prominences are computed on the whole series so that a
/// peak near the window edge keeps its true flanks.
pub fn oscillation_metrics_series(
    component: &str,
    series: &[(f64, f64)],
    window: (f64, f64),
    min_prominence: f64,
) -> OscillationReport {
    let (a, b) = window;
    let peaks: Vec<Peak> = find_peaks(series, min_prominence)
        .into_iter()
        .filter(|p| p.t >= a && p.t <= b)
        .collect();
    let peak_times: Vec<f64> = peaks.iter().map(|p| p.t).collect();
    let amplitudes: Vec<f64> = peaks.iter().map(|p| p.prominence).collect();

    let periods: Vec<f64> = peak_times.windows(2).map(|w| w[1] - w[0]).collect();
    let (mean_period, period_cv) = if periods.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let n = periods.len() as f64;
        let mean = periods.iter().sum::<f64>() / n;
        let var = periods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt() / mean)
    };
    let amplitude_retention = match (amplitudes.first(), amplitudes.last()) {
        (Some(first), Some(last)) => last / first,
        _ => f64::NAN,
    };
    let sustained = peaks.len() >= MIN_PEAKS
        && period_cv <= MAX_PERIOD_CV
        && amplitude_retention >= MIN_AMPLITUDE_RETENTION;

    OscillationReport {
        component: component.to_string(),
        peak_times,
        amplitudes,
        mean_period,
        period_cv,
        amplitude_retention,
        sustained,
    }
}

/// Oscillation metrics for one trajectory component over `window`.
pub fn oscillation_metrics(
    trajectory: &Trajectory,
    component: usize,
    window: (f64, f64),
    min_prominence: f64,
) -> OscillationReport {
    let name = trajectory.labels.get(component).cloned().unwrap_or_else(|| format!("y{component}"));
    oscillation_metrics_series(&name, &trajectory.series(component), window, min_prominence)
}
