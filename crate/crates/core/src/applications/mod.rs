//! RF demonstrations built on the correlator: spectrum sensing, compressive
//! spectrum recovery and spread-spectrum code synchronization/demodulation.

mod backend;
pub mod cosamp;
pub mod spectrum;
pub mod spread;

pub use backend::{Backend, MpBackend};

/// Indices of local maxima at or above `threshold`, in ascending order.
///
/// A plateau reports its first index.
pub fn find_peaks(magnitudes: &[f64], threshold: f64) -> Vec<usize> {
    let n = magnitudes.len();
    (0..n)
        .filter(|&k| {
            let m = magnitudes[k];
            m >= threshold && (k == 0 || magnitudes[k - 1] < m) && (k + 1 == n || magnitudes[k + 1] <= m)
        })
        .collect()
}

/// The `count` largest local maxima, strongest first.
pub fn dominant_peaks(magnitudes: &[f64], count: usize) -> Vec<usize> {
    let mut peaks = find_peaks(magnitudes, f64::NEG_INFINITY);
    peaks.sort_by(|&a, &b| magnitudes[b].total_cmp(&magnitudes[a]).then(a.cmp(&b)));
    peaks.truncate(count);
    peaks
}

/// `factor` times the median magnitude.
pub fn median_threshold(magnitudes: &[f64], factor: f64) -> f64 {
    if magnitudes.is_empty() {
        return 0.0;
    }
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    factor * median
}

/// Maximal runs `(first, last)` of consecutive entries strictly above `threshold`.
pub fn elevated_runs(magnitudes: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (k, &m) in magnitudes.iter().enumerate() {
        match (m > threshold, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, magnitudes.len() - 1));
    }
    runs
}
