//! Adaptive explicit time integration.
//!
//! Dormand–Prince 5(4) with FSAL, a PI step-size controller and the
//! fourth-order continuous extension for sampling between steps. The same
//! stepper drives the 3-variable well-mixed model and the method-of-lines
//! discretisation of the spatial model.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::IntegrationError;
use crate::model::{rhs_ode, Component, State3};
use crate::params::ModelParams;

/// Fraction of an integration window discarded as transient before limit-cycle
/// peaks are read.
pub const DEFAULT_DISCARD_FRACTION: f64 = 0.6;
/// Number of trailing peaks averaged into a limit-cycle amplitude.
pub const CYCLE_PEAKS: usize = 5;
/// Maximum spread of the trailing peaks for a cycle to count as settled.
pub const CYCLE_SPREAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub max_step: f64,
    /// Spacing of the recorded samples, days.
    pub dense_output_stride: f64,
    pub max_steps: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            t_start: 0.0,
            t_end: 100.0,
            max_step: 1.0,
            dense_output_stride: 0.1,
            max_steps: 50_000_000,
        }
    }
}

impl IntegrationConfig {
    pub fn span(t_start: f64, t_end: f64) -> Self {
        Self {
            t_start,
            t_end,
            ..Self::default()
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_stride(mut self, stride: f64) -> Self {
        self.dense_output_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let bad = |msg: String| Err(IntegrationError::InvalidConfig(msg));
        for (name, tol) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(tol > 0.0 && tol <= 1e-2) {
                return bad(format!("{name} = {tol} outside (0, 1e-2]"));
            }
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return bad(format!("empty time span [{}, {}]", self.t_start, self.t_end));
        }
        if !(self.max_step > 0.0) {
            return bad(format!("max_step = {} must be positive", self.max_step));
        }
        if !(self.dense_output_stride > 0.0 && self.dense_output_stride.is_finite()) {
            return bad(format!("stride = {} must be positive", self.dense_output_stride));
        }
        Ok(())
    }

    /// `t_start, t_start + stride, ...` and finally `t_end`.
    pub fn sample_times(&self) -> Vec<f64> {
        let span = self.t_end - self.t_start;
        let n = (span / self.dense_output_stride).floor() as usize;
        let mut times: Vec<f64> = (0..=n)
            .map(|k| self.t_start + k as f64 * self.dense_output_stride)
            .filter(|&t| t < self.t_end - 1e-9 * self.dense_output_stride)
            .collect();
        times.push(self.t_end);
        times
    }
}

/// Right-hand side of `dy/dt = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]);
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const PI_BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct Workspace {
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    dense: [Vec<f64>; 5],
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            y_stage: vec![0.0; n],
            y_new: vec![0.0; n],
            dense: std::array::from_fn(|_| vec![0.0; n]),
        }
    }
}

/// Integrates `sys` from `y0` over `cfg`'s span, calling `observe(t, y)` at
/// every requested time in `times` (which must be sorted and lie in the span).
/// Returning `ControlFlow::Break` from the observer stops the integration.
pub fn solve_at<S, F>(
    sys: &S,
    y0: &[f64],
    cfg: &IntegrationConfig,
    times: &[f64],
    mut observe: F,
) -> Result<StepStats, IntegrationError>
where
    S: OdeSystem + ?Sized,
    F: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    cfg.validate()?;
    let n = sys.dim();
    if y0.len() != n {
        return Err(IntegrationError::InvalidConfig(format!(
            "initial state has {} entries, system has {n}",
            y0.len()
        )));
    }
    let mut t = cfg.t_start;
    if y0.iter().any(|x| !x.is_finite()) {
        return Err(IntegrationError::NonFinite { t });
    }
    let mut y = y0.to_vec();
    let mut ws = Workspace::new(n);
    let mut stats = StepStats::default();

    let mut next = 0;
    while next < times.len() && times[next] <= t {
        if observe(times[next], &y).is_break() {
            return Ok(stats);
        }
        next += 1;
    }

    sys.rhs(t, &y, &mut ws.k[0]);
    stats.rhs_evals += 1;
    let mut h = initial_step(sys, t, &y, cfg, &mut ws, &mut stats);
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;

    while t < cfg.t_end {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(IntegrationError::TooManySteps {
                t,
                max_steps: cfg.max_steps,
            });
        }
        h = h.min(cfg.max_step);
        let remaining = cfg.t_end - t;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(IntegrationError::StepSizeUnderflow { t, h });
        }

        let err = attempt_step(sys, t, &y, h, cfg, &mut ws, &mut stats);
        if !err.is_finite() {
            // Treat an overflowing trial as a rejection; the step shrinks
            // until the underflow guard fires.
            stats.rejected += 1;
            last_rejected = true;
            h *= FAC_MIN;
            continue;
        }
        if err <= 1.0 {
            let t_new = if last { cfg.t_end } else { t + h };
            if ws.y_new.iter().any(|x| !x.is_finite()) {
                return Err(IntegrationError::NonFinite { t: t_new });
            }
            stats.accepted += 1;
            if next < times.len() && times[next] <= t_new {
                prepare_dense(h, &y, &mut ws);
                while next < times.len() && times[next] <= t_new {
                    let ts = times[next];
                    let stop = if ts == t_new {
                        observe(ts, &ws.y_new)
                    } else {
                        let theta = (ts - t) / h;
                        dense_eval(theta, &ws.dense, &mut ws.y_stage);
                        observe(ts, &ws.y_stage)
                    };
                    next += 1;
                    if stop.is_break() {
                        return Ok(stats);
                    }
                }
            }
            t = t_new;
            std::mem::swap(&mut y, &mut ws.y_new);
            ws.k.swap(0, 6);

            let mut fac = SAFETY * err.max(1e-10).powf(-(0.2 - 0.75 * PI_BETA)) * err_old.powf(PI_BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            err_old = err.max(1e-4);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= (SAFETY * err.powf(-0.2)).max(FAC_MIN);
        }
    }
    Ok(stats)
}

/// Integrates and records every sample of `cfg.sample_times()`.
pub fn solve<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    cfg: &IntegrationConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, StepStats), IntegrationError> {
    let times = cfg.sample_times();
    let mut out_t = Vec::with_capacity(times.len());
    let mut out_y = Vec::with_capacity(times.len());
    let stats = solve_at(sys, y0, cfg, &times, |t, y| {
        out_t.push(t);
        out_y.push(y.to_vec());
        ControlFlow::Continue(())
    })?;
    Ok((out_t, out_y, stats))
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    cfg: &IntegrationConfig,
    ws: &mut Workspace,
    stats: &mut StepStats,
) -> f64 {
    // Hairer–Nørsett–Wanner starting step heuristic.
    let n = y.len() as f64;
    let scale = |x: f64| cfg.abs_tol + cfg.rel_tol * x.abs();
    let d0 = (y.iter().map(|&x| (x / scale(x)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y
        .iter()
        .zip(&ws.k[0])
        .map(|(&x, &f)| (f / scale(x)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(cfg.max_step).min(cfg.t_end - t);
    for ((ys, &x), &f) in ws.y_stage.iter_mut().zip(y).zip(&ws.k[0]) {
        *ys = x + h0 * f;
    }
    let (head, tail) = ws.k.split_at_mut(1);
    sys.rhs(t + h0, &ws.y_stage, &mut tail[0]);
    stats.rhs_evals += 1;
    let d2 = (y
        .iter()
        .zip(head[0].iter().zip(&tail[0]))
        .map(|(&x, (&f0, &f1))| ((f1 - f0) / scale(x)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(cfg.max_step).max(1e-12)
}

/// One trial step from `(t, y)`; leaves the 5th-order solution in `ws.y_new`
/// and returns the scaled RMS error estimate.
fn attempt_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    cfg: &IntegrationConfig,
    ws: &mut Workspace,
    stats: &mut StepStats,
) -> f64 {
    let n = y.len();
    let Workspace { k, y_stage, y_new, .. } = ws;
    let [k1, k2, k3, k4, k5, k6, k7] = k;

    for j in 0..n {
        y_stage[j] = y[j] + h * A21 * k1[j];
    }
    sys.rhs(t + C2 * h, y_stage, k2);
    for j in 0..n {
        y_stage[j] = y[j] + h * (A31 * k1[j] + A32 * k2[j]);
    }
    sys.rhs(t + C3 * h, y_stage, k3);
    for j in 0..n {
        y_stage[j] = y[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j]);
    }
    sys.rhs(t + C4 * h, y_stage, k4);
    for j in 0..n {
        y_stage[j] = y[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j]);
    }
    sys.rhs(t + C5 * h, y_stage, k5);
    for j in 0..n {
        y_stage[j] =
            y[j] + h * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j] + A64 * k4[j] + A65 * k5[j]);
    }
    sys.rhs(t + h, y_stage, k6);
    for j in 0..n {
        y_new[j] =
            y[j] + h * (A71 * k1[j] + A73 * k3[j] + A74 * k4[j] + A75 * k5[j] + A76 * k6[j]);
    }
    sys.rhs(t + h, y_new, k7);
    stats.rhs_evals += 6;

    let mut sum = 0.0;
    for j in 0..n {
        let e = h
            * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j]);
        let sc = cfg.abs_tol + cfg.rel_tol * y[j].abs().max(y_new[j].abs());
        sum += (e / sc) * (e / sc);
    }
    (sum / n as f64).sqrt()
}

fn prepare_dense(h: f64, y: &[f64], ws: &mut Workspace) {
    let Workspace { k, y_new, dense, .. } = ws;
    let [k1, _, k3, k4, k5, k6, k7] = k;
    let [r1, r2, r3, r4, r5] = dense;
    for j in 0..y.len() {
        let diff = y_new[j] - y[j];
        let bspl = h * k1[j] - diff;
        r1[j] = y[j];
        r2[j] = diff;
        r3[j] = bspl;
        r4[j] = diff - h * k7[j] - bspl;
        r5[j] = h
            * (D1 * k1[j] + D3 * k3[j] + D4 * k4[j] + D5 * k5[j] + D6 * k6[j] + D7 * k7[j]);
    }
}

fn dense_eval(theta: f64, dense: &[Vec<f64>; 5], out: &mut [f64]) {
    let theta1 = 1.0 - theta;
    let [r1, r2, r3, r4, r5] = dense;
    for j in 0..out.len() {
        out[j] = r1[j] + theta * (r2[j] + theta1 * (r3[j] + theta * (r4[j] + theta1 * r5[j])));
    }
}

/// The well-mixed model as an [`OdeSystem`].
pub struct WellMixed<'a>(pub &'a ModelParams);

impl OdeSystem for WellMixed<'_> {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let f = rhs_ode(&State3::from_slice(y), self.0);
        dydt.copy_from_slice(&f.to_array());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State3>,
    pub step_stats: StepStats,
}

impl Trajectory {
    pub fn component(&self, c: Component) -> Vec<f64> {
        self.states.iter().map(|s| s.component(c)).collect()
    }

    pub fn last(&self) -> State3 {
        *self.states.last().expect("trajectories hold at least one sample")
    }

    pub fn min_component(&self) -> f64 {
        self.states
            .iter()
            .map(State3::min_component)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn integrate(
    p: &ModelParams,
    s0: State3,
    cfg: &IntegrationConfig,
) -> Result<Trajectory, IntegrationError> {
    let (times, ys, step_stats) = solve(&WellMixed(p), &s0.to_array(), cfg)?;
    Ok(Trajectory {
        times,
        states: ys.iter().map(|y| State3::from_slice(y)).collect(),
        step_stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub time: f64,
    pub value: f64,
}

/// Local maxima of `values` at samples with `times > t_discard`, each refined
/// by a parabola through the sample triple around it.
pub fn find_peaks(times: &[f64], values: &[f64], t_discard: f64) -> Vec<Peak> {
    assert_eq!(times.len(), values.len());
    let mut peaks = Vec::new();
    for j in 1..values.len().saturating_sub(1) {
        if times[j] <= t_discard {
            continue;
        }
        let (v0, v1, v2) = (values[j - 1], values[j], values[j + 1]);
        if !(v1 > v0 && v1 >= v2) {
            continue;
        }
        let x0 = times[j - 1] - times[j];
        let x2 = times[j + 1] - times[j];
        let det = x0 * x2 * (x0 - x2);
        let a = ((v0 - v1) * x2 - (v2 - v1) * x0) / det;
        let b = (x0 * x0 * (v2 - v1) - x2 * x2 * (v0 - v1)) / det;
        let peak = if a < 0.0 {
            let x = (-b / (2.0 * a)).clamp(x0, x2);
            Peak {
                time: times[j] + x,
                value: v1 - b * b / (4.0 * a),
            }
        } else {
            Peak {
                time: times[j],
                value: v1,
            }
        };
        peaks.push(peak);
    }
    peaks
}

/// Local minima, refined like [`find_peaks`].
pub fn find_troughs(times: &[f64], values: &[f64], t_discard: f64) -> Vec<Peak> {
    let negated: Vec<f64> = values.iter().map(|v| -v).collect();
    find_peaks(times, &negated, t_discard)
        .into_iter()
        .map(|p| Peak {
            time: p.time,
            value: -p.value,
        })
        .collect()
}

pub fn detect_peaks(traj: &Trajectory, component: Component, t_discard: f64) -> Vec<Peak> {
    find_peaks(&traj.times, &traj.component(component), t_discard)
}

/// Settled oscillation statistics read from the trailing peaks of a signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    /// Mean of the last [`CYCLE_PEAKS`] peak values.
    pub max: f64,
    /// Smallest trough between the first and last of those peaks.
    pub min: f64,
    /// Mean spacing of those peaks.
    pub period: f64,
    /// Max minus min of those peak values.
    pub spread: f64,
    pub converged: bool,
}

pub fn summarize_cycle(times: &[f64], values: &[f64], t_discard: f64) -> Option<CycleSummary> {
    let peaks = find_peaks(times, values, t_discard);
    if peaks.len() < CYCLE_PEAKS {
        return None;
    }
    let tail = &peaks[peaks.len() - CYCLE_PEAKS..];
    let max = tail.iter().map(|p| p.value).sum::<f64>() / CYCLE_PEAKS as f64;
    let hi = tail.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
    let period = (tail[CYCLE_PEAKS - 1].time - tail[0].time) / (CYCLE_PEAKS - 1) as f64;
    let (t0, t1) = (tail[0].time, tail[CYCLE_PEAKS - 1].time);
    let min = find_troughs(times, values, t_discard)
        .into_iter()
        .filter(|p| p.time > t0 && p.time < t1)
        .map(|p| p.value)
        .fold(f64::INFINITY, f64::min);
    let spread = hi - lo;
    Some(CycleSummary {
        max,
        min,
        period,
        spread,
        converged: spread < CYCLE_SPREAD_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear(f64);

    impl OdeSystem for Linear {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
            dydt[0] = self.0 * y[0];
        }
    }

    struct Oscillator;

    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
            dydt[0] = y[1];
            dydt[1] = -y[0];
        }
    }

    #[test]
    fn config_validation() {
        let ok = IntegrationConfig::span(0.0, 1.0);
        ok.validate().unwrap();
        assert!(IntegrationConfig { rel_tol: 0.1, ..ok }.validate().is_err());
        assert!(IntegrationConfig { abs_tol: 0.0, ..ok }.validate().is_err());
        assert!(IntegrationConfig { t_end: 0.0, ..ok }.validate().is_err());
        assert!(IntegrationConfig { dense_output_stride: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn sample_times_hit_end_exactly() {
        let cfg = IntegrationConfig::span(0.0, 1.05).with_stride(0.1);
        let t = cfg.sample_times();
        assert_eq!(t.len(), 12);
        assert_eq!(*t.last().unwrap(), 1.05);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        let cfg = IntegrationConfig::span(0.0, 1.0).with_stride(0.1);
        assert_eq!(cfg.sample_times().len(), 11);
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let cfg = IntegrationConfig::span(0.0, 20.0)
            .with_tolerances(1e-10, 1e-12)
            .with_stride(0.05);
        let (t, y, stats) = solve(&Oscillator, &[0.0, 1.0], &cfg).unwrap();
        for (t, y) in t.iter().zip(&y) {
            assert!((y[0] - t.sin()).abs() < 1e-8, "t = {t}");
        }
        assert!(stats.accepted > 0);
        assert_eq!(stats.rhs_evals, 2 + 6 * (stats.accepted + stats.rejected));
    }

    #[test]
    fn logistic_growth_without_virus() {
        let p = ModelParams::table1();
        let u0 = 0.07;
        let cfg = IntegrationConfig::span(0.0, 40.0).with_tolerances(1e-8, 1e-12);
        let traj = integrate(&p, State3::new(u0, 0.0, 0.0), &cfg).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let e = (p.r_u * t).exp();
            let exact = u0 * e / (1.0 + u0 * (e - 1.0));
            assert!((s.u - exact).abs() <= 10.0 * cfg.rel_tol * exact, "t = {t}");
            assert_eq!(s.v, 0.0);
            assert_eq!(s.i, 0.0);
        }
    }

    #[test]
    fn pure_virus_decay() {
        let p = ModelParams::table1();
        let cfg = IntegrationConfig::span(0.0, 5.0).with_tolerances(1e-8, 1e-14);
        let traj = integrate(&p, State3::new(0.0, 1.0, 0.0), &cfg).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let exact = (-p.delta_v * t).exp();
            assert!((s.v - exact).abs() <= 10.0 * (cfg.rel_tol * exact + cfg.abs_tol));
        }
    }

    #[test]
    fn time_reversed_decay_recovers_initial_state() {
        let cfg = IntegrationConfig::span(0.0, 3.0).with_tolerances(1e-10, 1e-14);
        let (_, forward, _) = solve(&Linear(-2.0), &[1.5], &cfg).unwrap();
        let end = forward.last().unwrap().clone();
        let (_, back, _) = solve(&Linear(2.0), &end, &cfg).unwrap();
        assert!((back.last().unwrap()[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn observer_can_stop_early() {
        let cfg = IntegrationConfig::span(0.0, 10.0);
        let mut seen = Vec::new();
        solve_at(&Linear(-1.0), &[1.0], &cfg, &[0.0, 1.0, 2.0, 3.0], |t, _| {
            seen.push(t);
            if t >= 2.0 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(seen, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn blow_up_is_reported() {
        struct Quadratic;
        impl OdeSystem for Quadratic {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
                dydt[0] = y[0] * y[0];
            }
        }
        // y' = y², y(0) = 1 blows up at t = 1.
        let err = solve(&Quadratic, &[1.0], &IntegrationConfig::span(0.0, 2.0)).unwrap_err();
        match err {
            IntegrationError::StepSizeUnderflow { t, .. } | IntegrationError::NonFinite { t } => {
                assert!((t - 1.0).abs() < 1e-2, "t = {t}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_convergence_under_tolerance_halving() {
        let p = ModelParams::table1().with_beta(0.002);
        let s0 = State3::new(0.9, 5.0, 0.05);
        let coarse = IntegrationConfig::span(0.0, 100.0).with_tolerances(2e-9, 2e-12);
        let fine = coarse.with_tolerances(1e-9, 1e-12);
        let a = integrate(&p, s0, &coarse).unwrap().last();
        let b = integrate(&p, s0, &fine).unwrap().last();
        for (x, y) in a.to_array().into_iter().zip(b.to_array()) {
            assert!((x - y).abs() < 10.0 * (1e-9 * y.abs() + 1e-12), "{x} vs {y}");
        }
    }

    #[test]
    fn nonnegative_from_nonnegative_data() {
        for beta in [0.001, 0.002, 0.005, 0.01] {
            let p = ModelParams::table1().with_beta(beta);
            let cfg = IntegrationConfig::span(0.0, 500.0).with_tolerances(1e-9, 1e-14);
            let traj = integrate(&p, State3::new(1.0, p.v0, 0.0), &cfg).unwrap();
            assert!(traj.min_component() >= -1e-9, "beta {beta}");
        }
    }

    #[test]
    fn damped_oscillation_settles_on_coexistence() {
        let p = ModelParams::table1().with_beta(0.002);
        let cfg = IntegrationConfig::span(0.0, 600.0).with_tolerances(1e-9, 1e-14);
        let traj = integrate(&p, State3::new(1.0, p.v0, 0.0), &cfg).unwrap();
        assert!(!detect_peaks(&traj, Component::U, 0.0).is_empty());
        assert!((traj.last().u - 0.57161).abs() < 1e-4);
    }

    #[test]
    fn peaks_of_monotone_signal() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| t * t).collect();
        assert!(find_peaks(&t, &v, 0.0).is_empty());
    }

    #[test]
    fn peaks_of_sine() {
        let t: Vec<f64> = (0..=500).map(|k| k as f64 * 0.01).collect();
        let v: Vec<f64> = t.iter().map(|t| (2.0 * std::f64::consts::PI * t).sin()).collect();
        let peaks = find_peaks(&t, &v, 0.0);
        assert_eq!(peaks.len(), 5);
        for (n, p) in peaks.iter().enumerate() {
            assert!((p.time - (0.25 + n as f64)).abs() < 1e-4);
            assert!((p.value - 1.0).abs() < 1e-4);
        }
        let troughs = find_troughs(&t, &v, 0.0);
        assert!((troughs[0].time - 0.75).abs() < 1e-4);
        let summary = summarize_cycle(&t, &v, 0.0).unwrap();
        assert!((summary.period - 1.0).abs() < 1e-6);
        assert!((summary.min + 1.0).abs() < 1e-4);
        assert!(summary.converged);
    }
}
