//! Transient circuit models of the MP core.
//!
//! Each branch is a set of `2N` transistors sharing a source node. The
//! first-order model balances the summed drain currents against a sink
//! resistor and the node capacitance; the second-order model inserts a series
//! inductance between the shared source and the `RC` output node.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::correlator::{build_operands, InputPair};
use crate::error::{check_finite, Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::rng::rng_from_seed;

/// Largest `dt * lambda` accepted for explicit RK4 on a decaying mode.
const RK4_STABILITY_LIMIT: f64 = 2.5;
const ROOT_WIDTH: f64 = 1e-14;

/// Transistor current law `I_DS = i0 h(kg (vg - vo) + kb (vb - vo) - vs)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub h_kind: Nonlinearity,
    pub i0: f64,
    pub kappa_g: f64,
    pub kappa_b: f64,
    pub v_offset: f64,
    /// Relative Gaussian spread of per-device `i0`; zero disables mismatch.
    #[serde(default)]
    pub mismatch_sigma: f64,
    #[serde(default)]
    pub mismatch_seed: u64,
}

impl Default for DeviceModel {
    fn default() -> Self {
        Self {
            h_kind: Nonlinearity::Relu,
            i0: 1.0,
            kappa_g: 1.0,
            kappa_b: 1.0,
            v_offset: 0.0,
            mismatch_sigma: 0.0,
            mismatch_seed: 0,
        }
    }
}

impl DeviceModel {
    /// Ideal relu devices with unit couplings and the given current scale.
    pub fn relu(i0: f64) -> Self {
        Self { i0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.h_kind.validate()?;
        if !(self.i0.is_finite() && self.i0 > 0.0) {
            return Err(Error::InputDomain(format!("i0 must be positive, got {}", self.i0)));
        }
        for (name, k) in [("kappa_g", self.kappa_g), ("kappa_b", self.kappa_b)] {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::InputDomain(format!("{name} must lie in (0, 1], got {k}")));
            }
        }
        if !self.v_offset.is_finite() {
            return Err(Error::InputDomain("v_offset must be finite".into()));
        }
        if !(self.mismatch_sigma >= 0.0 && self.mismatch_sigma <= 0.05) {
            return Err(Error::InputDomain(format!(
                "mismatch sigma must lie in [0, 0.05], got {}",
                self.mismatch_sigma
            )));
        }
        Ok(())
    }

    /// Overdrive of one device whose gate and back gate sit at `vo + x`, `vo + y`.
    fn overdrive(&self, x: f64, y: f64) -> f64 {
        self.kappa_g * x + self.kappa_b * y
    }
}

/// Drain-to-source current of one device.
pub fn ids(model: &DeviceModel, v_g: f64, v_b: f64, v_s: f64) -> f64 {
    model.i0
        * model
            .h_kind
            .evaluate(model.kappa_g * (v_g - model.v_offset) + model.kappa_b * (v_b - model.v_offset) - v_s)
}

/// Sink, parasitic and ensemble size of the MP core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub r_sink: f64,
    pub c_par: f64,
    #[serde(default)]
    pub l_par: f64,
    pub n: usize,
}

impl CircuitParams {
    pub fn tau(&self) -> f64 {
        self.r_sink * self.c_par
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_sink.is_finite() && self.r_sink > 0.0) {
            return Err(Error::InputDomain(format!(
                "r_sink must be positive, got {}",
                self.r_sink
            )));
        }
        if !(self.c_par.is_finite() && self.c_par > 0.0) {
            return Err(Error::InputDomain(format!(
                "c_par must be positive, got {}",
                self.c_par
            )));
        }
        if !(self.l_par.is_finite() && self.l_par >= 0.0) {
            return Err(Error::InputDomain(format!("l_par must be >= 0, got {}", self.l_par)));
        }
        Ok(())
    }
}

/// Sampled node voltages and branch currents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub v_plus: Vec<f64>,
    pub v_minus: Vec<f64>,
    pub i_plus: Vec<f64>,
    pub i_minus: Vec<f64>,
    /// Differential output at the static fixed point.
    pub steady_state: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn v_out(&self) -> Vec<f64> {
        self.v_plus.iter().zip(&self.v_minus).map(|(a, b)| a - b).collect()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Writes `time,v_plus,v_minus,v_out,i_plus,i_minus` rows with 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,v_plus,v_minus,v_out,i_plus,i_minus")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
                self.times[k],
                self.v_plus[k],
                self.v_minus[k],
                self.v_plus[k] - self.v_minus[k],
                self.i_plus[k],
                self.i_minus[k]
            )?;
        }
        Ok(())
    }
}

/// Summed drain current of the `2N` devices sharing one source node.
///
/// For relu devices the overdrives are sorted once with weighted prefix sums,
/// so the current and its inverse cost `O(log n)`.
#[derive(Debug, Clone)]
pub struct BranchLoad {
    overdrives: Vec<f64>,
    weights: Vec<f64>,
    prefix_wo: Vec<f64>,
    prefix_w: Vec<f64>,
    nl: Nonlinearity,
    i0: f64,
}

impl BranchLoad {
    pub fn new(overdrives: &[f64], weights: &[f64], nl: Nonlinearity, i0: f64) -> Result<Self> {
        if overdrives.is_empty() {
            return Err(Error::EmptyInput("branch devices"));
        }
        if overdrives.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: overdrives.len(),
                actual: weights.len(),
            });
        }
        check_finite(overdrives, "overdrive")?;
        let mut order: Vec<usize> = (0..overdrives.len()).collect();
        order.sort_by(|&a, &b| overdrives[b].total_cmp(&overdrives[a]));
        let overdrives: Vec<f64> = order.iter().map(|&i| overdrives[i]).collect();
        let weights: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
        let mut prefix_wo = Vec::with_capacity(overdrives.len());
        let mut prefix_w = Vec::with_capacity(overdrives.len());
        let (mut acc_wo, mut acc_w) = (0.0, 0.0);
        for (o, w) in overdrives.iter().zip(&weights) {
            acc_wo += w * o;
            acc_w += w;
            prefix_wo.push(acc_wo);
            prefix_w.push(acc_w);
        }
        Ok(Self {
            overdrives,
            weights,
            prefix_wo,
            prefix_w,
            nl,
            i0,
        })
    }

    fn active(&self, v: f64) -> usize {
        self.overdrives.partition_point(|&o| o > v)
    }

    /// `i0 sum_i w_i h(o_i - v)`.
    pub fn current(&self, v: f64) -> f64 {
        match self.nl {
            Nonlinearity::Relu => {
                let k = self.active(v);
                if k == 0 {
                    0.0
                } else {
                    self.i0 * (self.prefix_wo[k - 1] - v * self.prefix_w[k - 1])
                }
            }
            nl => {
                self.i0
                    * self
                        .overdrives
                        .iter()
                        .zip(&self.weights)
                        .map(|(o, w)| w * nl.evaluate(o - v))
                        .sum::<f64>()
            }
        }
    }

    /// `-d current / d v`, the small-signal source conductance.
    pub fn conductance(&self, v: f64) -> f64 {
        match self.nl {
            Nonlinearity::Relu => {
                let k = self.active(v);
                if k == 0 {
                    0.0
                } else {
                    self.i0 * self.prefix_w[k - 1]
                }
            }
            nl => {
                self.i0
                    * self
                        .overdrives
                        .iter()
                        .zip(&self.weights)
                        .map(|(o, w)| w * nl.derivative(o - v))
                        .sum::<f64>()
            }
        }
    }

    /// Upper bound on the conductance for any source voltage `v >= v_min`.
    pub fn max_conductance(&self, v_min: f64) -> f64 {
        match self.nl {
            Nonlinearity::Relu | Nonlinearity::Softplus { .. } => self.i0 * self.weights.iter().sum::<f64>(),
            Nonlinearity::Power { .. } => self.conductance(v_min),
        }
    }

    /// Source voltage at which the branch carries current `i`.
    ///
    /// Below a small positive floor the inverse is continued linearly with the
    /// floor slope, which keeps it defined for non-positive currents.
    pub fn source_voltage(&self, i: f64) -> f64 {
        if let Nonlinearity::Relu = self.nl {
            return self.relu_inverse(i).0;
        }
        let floor = 1e-9 * self.i0 * self.weights.len() as f64;
        if i < floor {
            let v_floor = self.invert_smooth(floor);
            let g = self.conductance(v_floor).max(f64::MIN_POSITIVE);
            return v_floor - (i - floor) / g;
        }
        self.invert_smooth(i)
    }

    /// `-dI/dV` along the inverse branch at current `i`. For relu this is the
    /// one-sided value from the active set, so it stays positive at `i = 0`.
    pub fn source_conductance(&self, i: f64) -> f64 {
        if let Nonlinearity::Relu = self.nl {
            let k = self.relu_inverse(i).1;
            return self.i0 * self.prefix_w[k - 1];
        }
        let floor = 1e-9 * self.i0 * self.weights.len() as f64;
        let v = self.invert_smooth(i.max(floor));
        self.conductance(v)
    }

    fn relu_inverse(&self, i: f64) -> (f64, usize) {
        // Weighted MP: first active count whose candidate clears the next overdrive.
        let gamma = i / self.i0;
        let n = self.overdrives.len();
        let cand = |k: usize| (self.prefix_wo[k - 1] - gamma) / self.prefix_w[k - 1];
        let (mut lo, mut hi) = (1usize, n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.overdrives[mid] <= cand(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        (cand(lo), lo)
    }

    fn invert_smooth(&self, i: f64) -> f64 {
        let top = self.overdrives[0];
        let mut hi = top + 1.0;
        let mut step = 1.0;
        while self.current(hi) > i {
            hi += step;
            step *= 2.0;
        }
        let mut lo = hi - 1.0;
        let mut step = 1.0;
        while self.current(lo) < i {
            lo -= step;
            step *= 2.0;
        }
        root_decreasing(|v| (self.current(v) - i, self.conductance(v)), lo, hi)
    }
}

/// Root of a decreasing function given as `(f, -f')`, by bisection then guarded Newton.
fn root_decreasing(f: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ROOT_WIDTH * (1.0 + mid.abs()) || mid <= lo || mid >= hi {
            break;
        }
        let (v, _) = f(mid);
        if v > 0.0 {
            lo = mid;
        } else if v < 0.0 {
            hi = mid;
        } else {
            return mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    let mut best = f(x).0.abs();
    for _ in 0..8 {
        let (v, slope) = f(x);
        if v == 0.0 || slope <= 0.0 {
            break;
        }
        let next = x + v / slope;
        if !(next >= lo && next <= hi) {
            break;
        }
        let r = f(next).0.abs();
        if r >= best {
            break;
        }
        x = next;
        best = r;
    }
    x
}

fn mismatch_weights(model: &DeviceModel, count: usize, stream: u64) -> Vec<f64> {
    if model.mismatch_sigma == 0.0 {
        return vec![1.0; count];
    }
    let mut rng = rng_from_seed(crate::rng::derive_seed(model.mismatch_seed, stream));
    (0..count)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            (1.0 + model.mismatch_sigma * e).max(0.0)
        })
        .collect()
}

/// Device overdrives and weights for the plus and minus branches.
///
/// Plus holds devices driven by `(x, y)` and `(-x, -y)`; minus by `(x, -y)`
/// and `(-x, y)`.
pub fn branch_loads(pair: &InputPair, model: &DeviceModel) -> Result<(BranchLoad, BranchLoad)> {
    model.validate()?;
    let n = pair.n();
    // With unit couplings this is exactly the correlator operand construction.
    let (plus, minus) = if model.kappa_g == 1.0 && model.kappa_b == 1.0 {
        build_operands(&pair.x, &pair.y)?
    } else {
        let mut plus = Vec::with_capacity(2 * n);
        let mut minus = Vec::with_capacity(2 * n);
        for i in 0..n {
            plus.push(model.overdrive(pair.x[i], pair.y[i]));
            minus.push(model.overdrive(pair.x[i], -pair.y[i]));
        }
        for i in 0..n {
            plus.push(model.overdrive(-pair.x[i], -pair.y[i]));
            minus.push(model.overdrive(-pair.x[i], pair.y[i]));
        }
        (plus, minus)
    };
    let wp = mismatch_weights(model, 2 * n, 0);
    let wm = mismatch_weights(model, 2 * n, 1);
    Ok((
        BranchLoad::new(&plus, &wp, model.h_kind, model.i0)?,
        BranchLoad::new(&minus, &wm, model.h_kind, model.i0)?,
    ))
}

/// Source voltage where the branch current balances the sink: `I(V) = V / R`.
pub fn branch_fixed_point(load: &BranchLoad, r_sink: f64) -> f64 {
    let i_zero = load.current(0.0);
    if i_zero == 0.0 {
        return 0.0;
    }
    root_decreasing(
        |v| (load.current(v) - v / r_sink, load.conductance(v) + 1.0 / r_sink),
        0.0,
        r_sink * i_zero,
    )
}

/// Static fixed point `(V+, V-)` of the circuit.
pub fn static_fixed_point(pair: &InputPair, model: &DeviceModel, params: &CircuitParams) -> Result<(f64, f64)> {
    params.validate()?;
    let (plus, minus) = branch_loads(pair, model)?;
    Ok((
        branch_fixed_point(&plus, params.r_sink),
        branch_fixed_point(&minus, params.r_sink),
    ))
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InputDomain(format!("dt must be positive, got {dt}")));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InputDomain(format!("t_end must be positive, got {t_end}")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0);
    if steps > 5e7 {
        return Err(Error::InputDomain(format!("{steps} steps requested")));
    }
    Ok(steps as usize)
}

fn rk4_branch(load: &BranchLoad, r: f64, c: f64, dt: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let rhs = |v: f64| (load.current(v) - v / r) / c;
    let mut volts = Vec::with_capacity(steps + 1);
    let mut currents = Vec::with_capacity(steps + 1);
    let mut v = 0.0;
    volts.push(v);
    currents.push(load.current(v));
    for _ in 0..steps {
        let k1 = rhs(v);
        let k2 = rhs(v + 0.5 * dt * k1);
        let k3 = rhs(v + 0.5 * dt * k2);
        let k4 = rhs(v + dt * k3);
        v += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        volts.push(v);
        currents.push(load.current(v));
    }
    (volts, currents)
}

fn time_grid(steps: usize, dt: f64) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 * dt).collect()
}

/// Explicit RK4 on `C dV/dt = I(V) - V/R` for both branches from `V(0) = 0`.
///
/// Rejects `dt > tau/20` and steps for which the stiffest device conductance
/// would leave the RK4 stability region.
pub fn integrate_first_order(
    pair: &InputPair,
    model: &DeviceModel,
    params: &CircuitParams,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    params.validate()?;
    let steps = step_count(t_end, dt)?;
    let tau = params.tau();
    if dt > tau / 20.0 {
        return Err(Error::Stability { dt, limit: tau / 20.0 });
    }
    let (plus, minus) = branch_loads(pair, model)?;
    let g = plus.max_conductance(0.0).max(minus.max_conductance(0.0));
    let lambda = (g + 1.0 / params.r_sink) / params.c_par;
    if dt * lambda > RK4_STABILITY_LIMIT {
        return Err(Error::Stability {
            dt,
            limit: RK4_STABILITY_LIMIT / lambda,
        });
    }
    let (v_plus, i_plus) = rk4_branch(&plus, params.r_sink, params.c_par, dt, steps);
    let (v_minus, i_minus) = rk4_branch(&minus, params.r_sink, params.c_par, dt, steps);
    let steady = branch_fixed_point(&plus, params.r_sink) - branch_fixed_point(&minus, params.r_sink);
    Ok(Trajectory {
        times: time_grid(steps, dt),
        v_plus,
        v_minus,
        i_plus,
        i_minus,
        steady_state: Some(steady),
    })
}

/// Relu idealization `sum [o - z]_+ = z/R + C dz/dt` in normalized units.
pub fn integrate_relu_dynamics(pair: &InputPair, r: f64, c: f64, dt: f64, t_end: f64) -> Result<Trajectory> {
    let params = CircuitParams {
        r_sink: r,
        c_par: c,
        l_par: 0.0,
        n: pair.n(),
    };
    integrate_first_order(pair, &DeviceModel::default(), &params, t_end, dt)
}

fn backward_euler_branch(load: &BranchLoad, params: &CircuitParams, dt: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let (r, c, l) = (params.r_sink, params.c_par, params.l_par);
    let a = c / dt + 1.0 / r;
    let mut volts = Vec::with_capacity(steps + 1);
    let mut currents = Vec::with_capacity(steps + 1);
    let (mut v, mut i) = (0.0f64, 0.0f64);
    volts.push(v);
    currents.push(i);
    for _ in 0..steps {
        let (v_prev, i_prev) = (v, i);
        let v_of = |i_next: f64| (c * v_prev / dt + i_next) / a;
        // Increasing in the new current: L dI/dt + V_out - V_s(I) = 0.
        let residual = |i_next: f64| l * (i_next - i_prev) / dt - load.source_voltage(i_next) + v_of(i_next);
        let slope = |i_next: f64| {
            let g = load.source_conductance(i_next).max(f64::MIN_POSITIVE);
            l / dt + 1.0 / g + 1.0 / a
        };
        let mut x = i_prev;
        let mut fx = residual(x);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for _ in 0..100 {
            if fx == 0.0 {
                break;
            }
            if fx > 0.0 {
                hi = hi.min(x);
            } else {
                lo = lo.max(x);
            }
            let mut next = x - fx / slope(x);
            if next <= lo || next >= hi {
                if lo.is_finite() && hi.is_finite() {
                    next = 0.5 * (lo + hi);
                } else {
                    break;
                }
            }
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
                x = next;
                break;
            }
            x = next;
            fx = residual(x);
        }
        i = x;
        v = v_of(i);
        volts.push(v);
        currents.push(i);
    }
    (volts, currents)
}

/// Series-inductance model with states `(V_out, I)` per branch.
///
/// `C dV_out/dt = I - V_out/R` and `L dI/dt = V_s(I) - V_out`, where `V_s(I)`
/// is the source voltage at which the devices carry `I`. The inductive mode is
/// much faster than `RC`, so each step is a fully implicit backward Euler
/// update solved with a bracketed Newton iteration.
pub fn integrate_second_order(
    pair: &InputPair,
    model: &DeviceModel,
    params: &CircuitParams,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    params.validate()?;
    if params.l_par <= 0.0 {
        return Err(Error::InputDomain("second-order model needs l_par > 0".into()));
    }
    let steps = step_count(t_end, dt)?;
    let limit = 0.05 * (params.l_par * params.c_par).sqrt();
    if dt > limit {
        return Err(Error::Stability { dt, limit });
    }
    let (plus, minus) = branch_loads(pair, model)?;
    let (v_plus, i_plus) = backward_euler_branch(&plus, params, dt, steps);
    let (v_minus, i_minus) = backward_euler_branch(&minus, params, dt, steps);
    let steady = branch_fixed_point(&plus, params.r_sink) - branch_fixed_point(&minus, params.r_sink);
    Ok(Trajectory {
        times: time_grid(steps, dt),
        v_plus,
        v_minus,
        i_plus,
        i_minus,
        steady_state: Some(steady),
    })
}

/// Differential output `v_plus - v_minus` linearly interpolated at `t_read`.
pub fn transient_readout(traj: &Trajectory, t_read: f64) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::EmptyInput("trajectory"));
    }
    let (t0, t1) = (traj.times[0], traj.t_end());
    if !(t_read >= t0 && t_read <= t1) {
        return Err(Error::OutOfRange {
            value: t_read,
            min: t0,
            max: t1,
        });
    }
    let k = traj.times.partition_point(|&t| t <= t_read);
    let out = |j: usize| traj.v_plus[j] - traj.v_minus[j];
    if k >= traj.len() {
        return Ok(out(traj.len() - 1));
    }
    let j = k - 1;
    let w = (t_read - traj.times[j]) / (traj.times[k] - traj.times[j]);
    Ok(out(j) + w * (out(k) - out(j)))
}

/// Least-squares fit of `A (1 - exp(-t/tau))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub amplitude: f64,
    pub tau: f64,
    pub r_squared: f64,
}

pub fn fit_exponential(times: &[f64], values: &[f64]) -> Result<ExponentialFit> {
    if times.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            actual: values.len(),
        });
    }
    if times.len() < 3 {
        return Err(Error::Fit("need at least three samples".into()));
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::Fit("time span must be positive".into()));
    }
    let sse = |tau: f64| -> (f64, f64) {
        let (mut fy, mut ff) = (0.0, 0.0);
        for (&t, &y) in times.iter().zip(values) {
            let f = 1.0 - (-t / tau).exp();
            fy += f * y;
            ff += f * f;
        }
        let a = if ff > 0.0 { fy / ff } else { 0.0 };
        let err = times
            .iter()
            .zip(values)
            .map(|(&t, &y)| (y - a * (1.0 - (-t / tau).exp())).powi(2))
            .sum();
        (err, a)
    };
    // Coarse log scan, then golden-section refinement around the best point.
    let (lo_tau, hi_tau) = (span * 1e-4, span * 10.0);
    let grid = 200;
    let ratio = (hi_tau / lo_tau).ln() / grid as f64;
    let mut best = (f64::INFINITY, lo_tau);
    for k in 0..=grid {
        let tau = lo_tau * (ratio * k as f64).exp();
        let e = sse(tau).0;
        if e < best.0 {
            best = (e, tau);
        }
    }
    let (mut a, mut b) = ((best.1.ln() - ratio), (best.1.ln() + ratio));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if sse(c.exp()).0 < sse(d.exp()).0 {
            b = d;
        } else {
            a = c;
        }
    }
    let tau = (0.5 * (a + b)).exp();
    let (err, amplitude) = sse(tau);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let total: f64 = values.iter().map(|y| (y - mean).powi(2)).sum();
    let r_squared = if total > 0.0 { 1.0 - err / total } else { 1.0 };
    Ok(ExponentialFit {
        amplitude,
        tau,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::{gen_correlated, gen_sinusoid_pair, InputDistribution};

    fn default_params(n: usize) -> CircuitParams {
        CircuitParams {
            r_sink: 1000.0,
            c_par: 100e-12,
            l_par: 0.0,
            n,
        }
    }

    fn model_for(n: usize) -> DeviceModel {
        DeviceModel::relu(4.0 / (n as f64 * 1000.0))
    }

    #[test]
    fn ids_examples() {
        let m = DeviceModel {
            v_offset: 0.6,
            ..DeviceModel::relu(2.0)
        };
        assert_eq!(ids(&m, 0.6, 0.6, 0.0), 0.0);
        assert!((ids(&m, 0.6 + 0.3, 0.6 + 0.4, 0.2) - 2.0 * 0.5).abs() < 1e-12);
        let soft = DeviceModel {
            h_kind: Nonlinearity::Softplus { temperature: 0.05 },
            kappa_g: 0.7,
            kappa_b: 0.3,
            ..m
        };
        let mut last = f64::NEG_INFINITY;
        for k in 0..100 {
            let vg = -1.0 + 0.02 * k as f64;
            let i = ids(&soft, vg, 0.5, 0.1);
            assert!(i > last && i >= 0.0);
            last = i;
        }
        let mut last = f64::INFINITY;
        for k in 0..100 {
            let i = ids(&soft, 0.6, 0.5, -1.0 + 0.02 * k as f64);
            assert!(i <= last);
            last = i;
        }
    }

    #[test]
    fn weighted_relu_inverse_matches_current() {
        let load = BranchLoad::new(
            &[0.5, -0.2, 1.3, -1.0],
            &[1.0, 0.9, 1.1, 1.05],
            Nonlinearity::Relu,
            0.01,
        )
        .unwrap();
        for i in [-0.002, 0.0, 0.001, 0.004, 0.03] {
            let v = load.source_voltage(i);
            if i > 0.0 {
                assert!((load.current(v) - i).abs() < 1e-15);
            }
        }
        let soft = BranchLoad::new(
            &[0.5, -0.2],
            &[1.0, 1.0],
            Nonlinearity::Softplus { temperature: 0.1 },
            1.0,
        )
        .unwrap();
        let v = soft.source_voltage(0.3);
        assert!((soft.current(v) - 0.3).abs() < 1e-12);
        // Linear continuation below the floor stays monotone.
        assert!(soft.source_voltage(-0.1) > soft.source_voltage(1e-12));
    }

    #[test]
    fn zero_inputs_stay_balanced() {
        let pair = InputPair::new(vec![0.0; 16], vec![0.0; 16]).unwrap();
        let p = default_params(16);
        let t = integrate_first_order(&pair, &model_for(16), &p, 5.0 * p.tau(), p.tau() / 50.0).unwrap();
        assert!(t.v_out().iter().all(|&v| v == 0.0));
        let p2 = CircuitParams { l_par: 2e-9, ..p };
        let t = integrate_second_order(&pair, &model_for(16), &p2, p.tau(), 1e-11).unwrap();
        assert!(t.v_out().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rk4_reaches_independent_fixed_point() {
        let n = 64;
        let pair = gen_correlated(0.6, n, InputDistribution::Gaussian, 21).unwrap();
        let model = model_for(n);
        let p = default_params(n);
        let t = integrate_first_order(&pair, &model, &p, 10.0 * p.tau(), p.tau() / 40.0).unwrap();
        // Per-branch bisection on sum I_DS(V) = V/R using the raw device law.
        let oracle = |sign: f64| {
            let f = |v: f64| {
                (0..n)
                    .map(|i| {
                        ids(&model, pair.x[i], sign * pair.y[i], v) + ids(&model, -pair.x[i], -sign * pair.y[i], v)
                    })
                    .sum::<f64>()
                    - v / p.r_sink
            };
            let (mut lo, mut hi) = (0.0, 100.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let expected = oracle(1.0) - oracle(-1.0);
        let last = *t.v_out().last().unwrap();
        assert!((last - expected).abs() <= 1e-3 * expected.abs(), "{last} vs {expected}");
        assert!((t.steady_state.unwrap() - expected).abs() <= 1e-9 * expected.abs());
        let end = transient_readout(&t, t.t_end()).unwrap();
        assert!((end - t.steady_state.unwrap()).abs() <= 1e-3 * expected.abs());
        assert_eq!(transient_readout(&t, 0.0).unwrap(), 0.0);
        assert!(transient_readout(&t, 2.0 * t.t_end()).is_err());
    }

    #[test]
    fn stability_guards() {
        let pair = gen_correlated(0.0, 8, InputDistribution::Gaussian, 1).unwrap();
        let p = default_params(8);
        assert!(matches!(
            integrate_first_order(&pair, &model_for(8), &p, p.tau(), p.tau() / 10.0),
            Err(Error::Stability { .. })
        ));
        let stiff = DeviceModel::relu(1.0);
        assert!(matches!(
            integrate_first_order(&pair, &stiff, &p, p.tau(), p.tau() / 40.0),
            Err(Error::Stability { .. })
        ));
        let p2 = CircuitParams { l_par: 2e-9, ..p };
        assert!(matches!(
            integrate_second_order(&pair, &model_for(8), &p2, p.tau(), 1e-9),
            Err(Error::Stability { .. })
        ));
        assert!(integrate_second_order(&pair, &model_for(8), &p, p.tau(), 1e-12).is_err());
    }

    #[test]
    fn exponential_fit_recovers_parameters() {
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.01).collect();
        let values: Vec<f64> = times.iter().map(|t| 0.8 * (1.0 - (-t / 0.3f64).exp())).collect();
        let fit = fit_exponential(&times, &values).unwrap();
        assert!((fit.tau - 0.3).abs() < 1e-6);
        assert!((fit.amplitude - 0.8).abs() < 1e-6);
        assert!(fit.r_squared > 0.999999);
    }

    #[test]
    fn first_order_response_is_exponential_like() {
        let n = 256;
        let model = model_for(n);
        let p = default_params(n);
        for phase in [0.0, 30.0, 60.0, 120.0, 150.0, 180.0] {
            let pair = gen_sinusoid_pair(phase, n, 4.0).unwrap();
            let t = integrate_first_order(&pair, &model, &p, 5.0 * p.tau(), p.tau() / 100.0).unwrap();
            let fit = fit_exponential(&t.times, &t.v_out()).unwrap();
            assert!(fit.r_squared > 0.99, "phase {phase}: R^2 {}", fit.r_squared);
            let at_tau = transient_readout(&t, fit.tau).unwrap();
            let ratio = at_tau / t.steady_state.unwrap();
            assert!((ratio - (1.0 - (-1.0f64).exp())).abs() < 0.05 * 0.632, "ratio {ratio}");
        }
    }

    #[test]
    fn csv_has_expected_columns() {
        let pair = gen_correlated(0.2, 4, InputDistribution::Gaussian, 1).unwrap();
        let p = default_params(4);
        let t = integrate_first_order(&pair, &model_for(4), &p, p.tau(), p.tau() / 20.0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time,v_plus,v_minus,v_out,i_plus,i_minus");
        assert_eq!(lines.count(), t.len());
    }
}
