//! Figures of merit: RMS error, SPG, HDR/ENOB, transient energy and TOPS/W.

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// Stand-in for an infinite gain when the error is exactly zero.
pub const SPG_CAP_DB: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rms_error_db: f64,
    pub spg_db: f64,
    pub hdr_db: Option<f64>,
    pub enob_bits: Option<f64>,
    pub energy_j: Option<f64>,
    pub tops_w_system: Option<f64>,
    pub tops_w_core: Option<f64>,
}

impl MetricsReport {
    /// Sets HDR and the matching ENOB.
    pub fn with_hdr(mut self, hdr_db: f64) -> Self {
        self.hdr_db = Some(hdr_db);
        self.enob_bits = Some(enob_from_hdr(hdr_db));
        self
    }
}

pub fn rms_error(predicted: &[f64], true_r: &[f64]) -> Result<f64> {
    if predicted.len() != true_r.len() {
        return Err(Error::LengthMismatch {
            expected: true_r.len(),
            actual: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput("prediction set"));
    }
    let mse = predicted.iter().zip(true_r).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / predicted.len() as f64;
    Ok(mse.sqrt())
}

/// `-20 log10(rms)`, capped at [`SPG_CAP_DB`].
pub fn gain_db(rms: f64) -> f64 {
    if rms <= 0.0 {
        SPG_CAP_DB
    } else {
        (-20.0 * rms.log10()).min(SPG_CAP_DB)
    }
}

pub fn compute_spg(predicted: &[f64], true_r: &[f64]) -> Result<MetricsReport> {
    if predicted.len() < 2 {
        return Err(Error::EmptyInput("need at least two predictions"));
    }
    let spg_db = gain_db(rms_error(predicted, true_r)?);
    Ok(MetricsReport {
        rms_error_db: -spg_db,
        spg_db,
        hdr_db: None,
        enob_bits: None,
        energy_j: None,
        tops_w_system: None,
        tops_w_core: None,
    })
}

pub fn enob_from_hdr(hdr_db: f64) -> f64 {
    (hdr_db - 1.76) / 6.02
}

/// Central differences inside, one-sided at the ends.
fn derivative(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    (0..n)
        .map(|k| {
            let (a, b) = match k {
                0 => (0, 1),
                _ if k == n - 1 => (n - 2, n - 1),
                _ => (k - 1, k + 1),
            };
            (values[b] - values[a]) / (times[b] - times[a])
        })
        .collect()
}

/// Supply energy `vdd * integral(i_static + c_par dV_out/dt)` over `[0, t_compute]`.
pub fn estimate_transient_energy(
    traj: &Trajectory,
    i_static: f64,
    c_par: f64,
    vdd: f64,
    t_compute: f64,
) -> Result<f64> {
    if !(t_compute >= 0.0) {
        return Err(Error::InputDomain(format!("t_compute must be >= 0, got {t_compute}")));
    }
    if traj.len() < 2 {
        return Err(Error::EmptyInput("trajectory needs two samples"));
    }
    let t0 = traj.times[0];
    if t_compute > traj.t_end() - t0 {
        return Err(Error::OutOfRange {
            value: t_compute,
            min: 0.0,
            max: traj.t_end() - t0,
        });
    }
    let slope = derivative(&traj.times, &traj.v_out());
    let current: Vec<f64> = slope.iter().map(|d| i_static + c_par * d).collect();
    let t_stop = t0 + t_compute;
    let mut charge = 0.0;
    for k in 1..traj.len() {
        let (ta, tb) = (traj.times[k - 1], traj.times[k]);
        if ta >= t_stop {
            break;
        }
        let (ia, ib) = (current[k - 1], current[k]);
        if tb <= t_stop {
            charge += 0.5 * (ia + ib) * (tb - ta);
        } else {
            let w = (t_stop - ta) / (tb - ta);
            let i_end = ia + w * (ib - ia);
            charge += 0.5 * (ia + i_end) * (t_stop - ta);
        }
    }
    Ok(charge * vdd)
}

/// `(system, core)` TOPS/W from `N (ENOB^2 + ENOB)` operations per correlation.
///
/// Negative ENOB counts as zero operations.
pub fn tops_per_watt(n: usize, enob: f64, e_sampling: f64, e_compute: f64) -> Result<(f64, f64)> {
    if !(e_compute > 0.0 && e_compute.is_finite()) {
        return Err(Error::InputDomain(format!(
            "compute energy must be positive, got {e_compute}"
        )));
    }
    if !(e_sampling >= 0.0 && e_sampling.is_finite()) {
        return Err(Error::InputDomain(format!(
            "sampling energy must be >= 0, got {e_sampling}"
        )));
    }
    let bits = enob.max(0.0);
    let ops = n as f64 * (bits * bits + bits);
    Ok((ops / (1e12 * (e_sampling + e_compute)), ops / (1e12 * e_compute)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(k: f64, span: f64, samples: usize) -> Trajectory {
        let times: Vec<f64> = (0..samples).map(|i| span * i as f64 / (samples - 1) as f64).collect();
        Trajectory {
            v_plus: times.iter().map(|t| k * t).collect(),
            v_minus: vec![0.0; samples],
            i_plus: vec![0.0; samples],
            i_minus: vec![0.0; samples],
            times,
            steady_state: None,
        }
    }

    #[test]
    fn spg_examples() {
        let r = [0.1, -0.4, 0.9];
        let rep = compute_spg(&r, &r).unwrap();
        assert_eq!(rep.spg_db, SPG_CAP_DB);
        let rep = compute_spg(&[0.1, 0.2], &[0.0, 0.3]).unwrap();
        assert!((rep.spg_db - 20.0).abs() < 1e-12);
        assert!((rep.rms_error_db + 20.0).abs() < 1e-12);
        assert!(compute_spg(&[], &[]).is_err());
    }

    #[test]
    fn enob_examples() {
        assert_eq!(enob_from_hdr(1.76), 0.0);
        assert!((enob_from_hdr(49.92) - 8.0).abs() < 1e-12);
        assert!((enob_from_hdr(49.0) - 7.847).abs() < 1e-3);
    }

    #[test]
    fn energy_examples() {
        let flat = ramp(0.0, 1e-8, 101);
        let e = estimate_transient_energy(&flat, 1e-3, 1e-12, 1.2, 5e-9).unwrap();
        assert!((e - 1e-3 * 1.2 * 5e-9).abs() < 1e-24);
        let k = 3e6;
        let r = ramp(k, 1e-8, 101);
        let e = estimate_transient_energy(&r, 1e-3, 2e-12, 1.2, 7.3e-9).unwrap();
        let expected = (1e-3 + 2e-12 * k) * 1.2 * 7.3e-9;
        assert!((e - expected).abs() <= 1e-9 * expected);
        assert!(estimate_transient_energy(&r, 1e-3, 2e-12, 1.2, -1.0).is_err());
        assert!(estimate_transient_energy(&r, 1e-3, 2e-12, 1.2, 1.0).is_err());
    }

    #[test]
    fn tops_examples() {
        let (_, core) = tops_per_watt(256, 8.0, 0.0, 6.27e-12).unwrap();
        assert!((core - 2940.0).abs() <= 1.0, "{core}");
        assert_eq!(tops_per_watt(256, 0.0, 1e-12, 1e-12).unwrap(), (0.0, 0.0));
        let (_, a) = tops_per_watt(64, 5.0, 1e-12, 1e-12).unwrap();
        let (_, b) = tops_per_watt(64, 5.0, 1e-12, 2e-12).unwrap();
        assert_eq!(a, 2.0 * b);
        let (sys, core) = tops_per_watt(64, 5.0, 1e-12, 1e-12).unwrap();
        assert_eq!(2.0 * sys, core);
        assert!(tops_per_watt(64, 5.0, 1e-12, 0.0).is_err());
    }

    #[test]
    fn report_serializes_with_fixed_names() {
        let rep = compute_spg(&[0.1, 0.2], &[0.0, 0.3]).unwrap().with_hdr(49.92);
        let json = serde_json::to_value(rep).unwrap();
        for key in [
            "rms_error_db",
            "spg_db",
            "hdr_db",
            "enob_bits",
            "energy_j",
            "tops_w_system",
            "tops_w_core",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!((rep.enob_bits.unwrap() - 8.0).abs() < 1e-12);
    }
}
