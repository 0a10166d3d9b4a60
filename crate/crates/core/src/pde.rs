//! Radially symmetric reaction–diffusion model, discretised by the method of
//! lines on a uniform grid with no-flux ends, and the spatial observables read
//! off its solutions.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{IntegrationError, ObservableError, PdeError};
use crate::model::reaction;
use crate::ode::{find_peaks, find_troughs, solve_at, IntegrationConfig, OdeSystem, StepStats};
use crate::params::ModelParams;

pub const DEFAULT_DR: f64 = 0.05;
pub const MIN_NODES: usize = 32;
/// Density level tracked as the tumour edge.
pub const TUMOUR_FRONT_LEVEL: f64 = 0.5;
/// Virus edge level as a fraction of the instantaneous virus maximum.
pub const VIRUS_FRONT_FRACTION: f64 = 0.01;
/// Fraction of the domain, from the centre, averaged into the tail density.
pub const TAIL_FRACTION: f64 = 0.1;
/// Oscillations persist if the last window keeps this share of the previous
/// window's amplitude.
pub const PERSISTENCE_RATIO: f64 = 0.5;
/// Peak-to-peak swings below this fraction of the signal level count as flat.
pub const FLAT_AMPLITUDE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub n: usize,
    pub dr: f64,
}

impl RadialGrid {
    pub fn new(n: usize, dr: f64) -> Result<Self, PdeError> {
        if n < MIN_NODES {
            return Err(PdeError::InvalidGrid(format!("{n} nodes, need at least {MIN_NODES}")));
        }
        if !(dr > 0.0 && dr.is_finite()) {
            return Err(PdeError::InvalidGrid(format!("spacing {dr} must be positive")));
        }
        Ok(Self { n, dr })
    }

    /// Grid of spacing close to `dr` whose last node sits exactly on `length`.
    pub fn covering(length: f64, dr: f64) -> Result<Self, PdeError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(PdeError::InvalidGrid(format!("domain length {length} must be positive")));
        }
        if !(dr > 0.0 && dr.is_finite()) {
            return Err(PdeError::InvalidGrid(format!("spacing {dr} must be positive")));
        }
        let cells = (length / dr).round().max(1.0) as usize;
        Self::new(cells + 1, length / cells as f64)
    }

    pub fn r(&self, j: usize) -> f64 {
        j as f64 * self.dr
    }

    pub fn length(&self) -> f64 {
        self.r(self.n - 1)
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.r(j)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Uninfected,
    Virus,
    Infected,
    /// Uninfected plus infected cells.
    Tumour,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub grid: RadialGrid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    pub time: f64,
}

impl RadialField {
    pub fn from_flat(grid: RadialGrid, y: &[f64], time: f64) -> Self {
        let n = grid.n;
        Self {
            grid,
            u: y[..n].to_vec(),
            v: y[n..2 * n].to_vec(),
            i: y[2 * n..3 * n].to_vec(),
            time,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(3 * self.grid.n);
        y.extend_from_slice(&self.u);
        y.extend_from_slice(&self.v);
        y.extend_from_slice(&self.i);
        y
    }

    pub fn values(&self, pop: Population) -> Vec<f64> {
        match pop {
            Population::Uninfected => self.u.clone(),
            Population::Virus => self.v.clone(),
            Population::Infected => self.i.clone(),
            Population::Tumour => self.u.iter().zip(&self.i).map(|(u, i)| u + i).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.v, &self.i]
            .iter()
            .all(|a| a.iter().all(|x| x.is_finite()))
    }

    /// Linear interpolation of every population at radius `r`.
    pub fn sample(&self, r: f64) -> (f64, f64, f64) {
        let x = (r / self.grid.dr).clamp(0.0, (self.grid.n - 1) as f64);
        let j = (x.floor() as usize).min(self.grid.n - 2);
        let w = x - j as f64;
        let lerp = |a: &[f64]| a[j] * (1.0 - w) + a[j + 1] * w;
        (lerp(&self.u), lerp(&self.v), lerp(&self.i))
    }
}

/// Step profiles: tumour of density `u0` out to `r_t`, virus `v0` out to `r_v`,
/// no infected cells. A node lying on an edge takes the mean of the two sides,
/// which keeps the integrated amount second-order accurate in `dr`.
pub fn initial_condition(p: &ModelParams, grid: &RadialGrid) -> RadialField {
    let eps = 1e-9 * grid.dr;
    let wall = grid.length();
    let step = |edge: f64, level: f64| -> Vec<f64> {
        grid.radii()
            .into_iter()
            .map(|r| {
                if (r - edge).abs() <= eps {
                    if edge >= wall - eps {
                        level
                    } else {
                        0.5 * level
                    }
                } else if r < edge {
                    level
                } else {
                    0.0
                }
            })
            .collect()
    };
    RadialField {
        grid: *grid,
        u: step(p.r_t, p.u0),
        v: step(p.r_v, p.v0),
        i: vec![0.0; grid.n],
        time: 0.0,
    }
}

/// `(1/r²)(r² f')'` with second-order central differences, the symmetric limit
/// `3 f''` at the centre, and a mirrored ghost node at the outer wall.
pub fn spherical_laplacian(f: &[f64], grid: &RadialGrid) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    laplacian_into(f, grid.dr, &mut out);
    out
}

fn laplacian_into(f: &[f64], dr: f64, out: &mut [f64]) {
    let n = f.len();
    let inv = 1.0 / (dr * dr);
    out[0] = 6.0 * (f[1] - f[0]) * inv;
    for j in 1..n - 1 {
        let second = f[j + 1] - 2.0 * f[j] + f[j - 1];
        let first = (f[j + 1] - f[j - 1]) / j as f64;
        out[j] = (second + first) * inv;
    }
    out[n - 1] = 2.0 * (f[n - 2] - f[n - 1]) * inv;
}

/// Method-of-lines right-hand side on the layout `[u.., v.., i..]`.
pub struct RadialSystem {
    pub params: ModelParams,
    pub grid: RadialGrid,
}

impl OdeSystem for RadialSystem {
    fn dim(&self) -> usize {
        3 * self.grid.n
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let n = self.grid.n;
        let p = &self.params;
        let (u, rest) = y.split_at(n);
        let (v, i) = rest.split_at(n);
        let (du, rest) = dydt.split_at_mut(n);
        let (dv, di) = rest.split_at_mut(n);
        laplacian_into(u, self.grid.dr, du);
        laplacian_into(v, self.grid.dr, dv);
        laplacian_into(i, self.grid.dr, di);
        for j in 0..n {
            let (fu, fv, fi) = reaction(u[j], v[j], i[j], p);
            du[j] = p.d_u * du[j] + fu;
            dv[j] = p.d_v * dv[j] + fv;
            di[j] = p.d_u * di[j] + fi;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeRunConfig {
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    /// Tolerances, step cap and observable sampling stride; its time span is
    /// overridden by `[0, t_end]`.
    pub integrator: IntegrationConfig,
    pub dr: f64,
    /// Radii at which `(u, v, i)` are recorded at every observable sample.
    pub probes: Vec<f64>,
}

impl PdeRunConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            snapshot_times: Vec::new(),
            integrator: IntegrationConfig {
                rel_tol: 1e-6,
                abs_tol: 1e-9,
                dense_output_stride: 0.5,
                ..IntegrationConfig::span(0.0, t_end)
            },
            dr: DEFAULT_DR,
            probes: Vec::new(),
        }
    }

    pub fn with_snapshots(mut self, times: &[f64]) -> Self {
        self.snapshot_times = times.to_vec();
        self
    }

    pub fn with_stride(mut self, stride: f64) -> Self {
        self.integrator.dense_output_stride = stride;
        self
    }

    pub fn with_probes(mut self, radii: &[f64]) -> Self {
        self.probes = radii.to_vec();
        self
    }

    fn integration(&self) -> IntegrationConfig {
        IntegrationConfig {
            t_start: 0.0,
            t_end: self.t_end,
            ..self.integrator
        }
    }

    pub fn validate(&self, p: &ModelParams) -> Result<(), PdeError> {
        self.integration()
            .validate()
            .map_err(|e| PdeError::InvalidConfig(e.to_string()))?;
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|&&t| !(0.0..=self.t_end).contains(&t))
        {
            return Err(PdeError::InvalidConfig(format!(
                "snapshot time {t} outside [0, {}]",
                self.t_end
            )));
        }
        if let Some(r) = self.probes.iter().find(|&&r| !(0.0..=p.domain_l).contains(&r)) {
            return Err(PdeError::InvalidConfig(format!(
                "probe radius {r} outside [0, {}]",
                p.domain_l
            )));
        }
        Ok(())
    }
}

/// Observables recorded at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRow {
    pub t: f64,
    pub total_u: f64,
    pub total_i: f64,
    pub total_v: f64,
    pub front_u: Option<f64>,
    pub front_v: Option<f64>,
    pub tail_u: f64,
}

impl ObservableRow {
    pub fn measure(f: &RadialField, p: &ModelParams) -> Self {
        let v_max = f.v.iter().fold(0.0f64, |m, &x| m.max(x));
        Self {
            t: f.time,
            total_u: total_cells(f, p, Population::Uninfected),
            total_i: total_cells(f, p, Population::Infected),
            total_v: total_cells(f, p, Population::Virus),
            front_u: front_position(f, Population::Uninfected, TUMOUR_FRONT_LEVEL),
            front_v: if v_max > 0.0 {
                front_position(f, Population::Virus, VIRUS_FRONT_FRACTION * v_max)
            } else {
                None
            },
            tail_u: tail_density(f, Population::Uninfected),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub radius: f64,
    pub times: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub i: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeRun {
    pub grid: RadialGrid,
    pub snapshots: Vec<RadialField>,
    pub observables: Vec<ObservableRow>,
    pub probes: Vec<ProbeSeries>,
    /// First sample time at which fewer than one tumour cell remains.
    pub eradicated_at: Option<f64>,
    /// Smallest value of any population over all samples.
    pub min_value: f64,
    pub final_field: RadialField,
    pub stats: StepStats,
}

impl PdeRun {
    pub fn series(&self, f: impl Fn(&ObservableRow) -> Option<f64>) -> Vec<(f64, f64)> {
        self.observables
            .iter()
            .filter_map(|row| f(row).map(|x| (row.t, x)))
            .collect()
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&RadialField> {
        self.snapshots.iter().find(|s| (s.time - t).abs() < 1e-9)
    }
}

/// Integrates the spatial model from [`initial_condition`].
pub fn run_pde(p: &ModelParams, cfg: &PdeRunConfig) -> Result<PdeRun, PdeError> {
    let grid = RadialGrid::covering(p.domain_l, cfg.dr)?;
    run_pde_from(p, cfg, initial_condition(p, &grid))
}

/// Integrates the spatial model from an arbitrary starting field.
pub fn run_pde_from(
    p: &ModelParams,
    cfg: &PdeRunConfig,
    start: RadialField,
) -> Result<PdeRun, PdeError> {
    cfg.validate(p)?;
    let grid = start.grid;
    if !start.is_finite() {
        return Err(PdeError::InvalidConfig("initial field is not finite".into()));
    }
    let icfg = cfg.integration();
    let stride_times = icfg.sample_times();
    let mut snapshot_times = cfg.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup();
    let mut times: Vec<f64> = stride_times.iter().chain(&snapshot_times).copied().collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    let matches = |set: &[f64], t: f64| set.iter().any(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0));

    let sys = RadialSystem { params: *p, grid };
    let mut snapshots = Vec::new();
    let mut observables = Vec::new();
    let mut probes: Vec<ProbeSeries> = cfg
        .probes
        .iter()
        .map(|&radius| ProbeSeries {
            radius,
            times: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            i: Vec::new(),
        })
        .collect();
    let mut eradicated_at = None;
    let mut min_value = f64::INFINITY;
    let mut last_good = start.clone();

    let result = solve_at(&sys, &start.to_flat(), &icfg, &times, |t, y| {
        let field = RadialField::from_flat(grid, y, t);
        min_value = y.iter().fold(min_value, |m, &x| m.min(x));
        if matches(&stride_times, t) {
            let row = ObservableRow::measure(&field, p);
            if eradicated_at.is_none() && row.total_u + row.total_i < 1.0 {
                eradicated_at = Some(t);
            }
            observables.push(row);
            for probe in &mut probes {
                let (u, v, i) = field.sample(probe.radius);
                probe.times.push(t);
                probe.u.push(u);
                probe.v.push(v);
                probe.i.push(i);
            }
        }
        if matches(&snapshot_times, t) {
            snapshots.push(field.clone());
        }
        last_good = field;
        ControlFlow::Continue(())
    });
    let stats = result.map_err(|source: IntegrationError| PdeError::Integration {
        source,
        last_good_time: last_good.time,
    })?;
    Ok(PdeRun {
        grid,
        snapshots,
        observables,
        probes,
        eradicated_at,
        min_value,
        final_field: last_good,
        stats,
    })
}

/// `4πk ∫₀^L r² pop(r) dr` by the composite trapezoid rule.
pub fn total_cells(f: &RadialField, p: &ModelParams, pop: Population) -> f64 {
    let values = f.values(pop);
    let dr = f.grid.dr;
    let n = values.len();
    let mut sum = 0.0;
    for (j, x) in values.iter().enumerate() {
        let r = j as f64 * dr;
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        sum += w * r * r * x;
    }
    4.0 * std::f64::consts::PI * p.k * sum * dr
}

/// Outermost radius at which `pop` falls through `level`, linearly
/// interpolated. `None` if the profile never reaches the level or stays above
/// it out to the wall.
pub fn front_position(f: &RadialField, pop: Population, level: f64) -> Option<f64> {
    let values = f.values(pop);
    let j = values.iter().rposition(|&x| x >= level)?;
    if j + 1 == values.len() {
        return None;
    }
    let (a, b) = (values[j], values[j + 1]);
    let w = if a == b { 0.0 } else { (a - level) / (a - b) };
    Some(f.grid.r(j) + w * f.grid.dr)
}

/// Least-squares slope of `(time, position)` samples with `t0 <= time <= t1`.
pub fn wave_speed(series: &[(f64, f64)], t0: f64, t1: f64) -> Result<f64, ObservableError> {
    let window: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, x)| t >= t0 && t <= t1 && x.is_finite())
        .collect();
    let m = window.len();
    if m < 2 {
        return Err(ObservableError::DegenerateWindow { needed: 2, got: m });
    }
    let t_mean = window.iter().map(|s| s.0).sum::<f64>() / m as f64;
    let x_mean = window.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let sxx: f64 = window.iter().map(|s| (s.0 - t_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ObservableError::DegenerateWindow { needed: 2, got: 1 });
    }
    let sxy: f64 = window.iter().map(|s| (s.0 - t_mean) * (s.1 - x_mean)).sum();
    Ok(sxy / sxx)
}

/// Net displacement between the first and last samples with
/// `t0 <= time <= t1`, divided by the time between them.
pub fn mean_speed(series: &[(f64, f64)], t0: f64, t1: f64) -> Result<f64, ObservableError> {
    let mut window = series
        .iter()
        .filter(|&&(t, x)| t >= t0 && t <= t1 && x.is_finite());
    let first = window.next();
    let last = window.last();
    match (first, last) {
        (Some(a), Some(b)) if b.0 > a.0 => Ok((b.1 - a.1) / (b.0 - a.0)),
        (Some(_), _) => Err(ObservableError::DegenerateWindow { needed: 2, got: 1 }),
        _ => Err(ObservableError::DegenerateWindow { needed: 2, got: 0 }),
    }
}

/// Mean nodal density over the innermost tenth of the domain.
pub fn tail_density(f: &RadialField, pop: Population) -> f64 {
    let values = f.values(pop);
    let cutoff = TAIL_FRACTION * f.grid.length() * (1.0 + 1e-12);
    let inner: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(j, _)| f.grid.r(*j) <= cutoff)
        .map(|(_, &x)| x)
        .collect();
    inner.iter().sum::<f64>() / inner.len() as f64
}

/// Coefficient of the caliper volume formula `0.523 L W²`.
pub const CALIPER_FACTOR: f64 = 0.523;

/// Caliper volume of a sphere of radius `r`, with `L = W = 2r`.
pub fn tumour_volume(radius: f64) -> f64 {
    CALIPER_FACTOR * (2.0 * radius).powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OscillationVerdict {
    Damped,
    Persistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub verdict: OscillationVerdict,
    /// Set when too few extrema were found to judge.
    pub low_confidence: bool,
    /// `(window end, peak-to-peak amplitude)` for consecutive windows counted
    /// back from the end of the series.
    pub amplitudes: Vec<(f64, f64)>,
}

/// Compares the peak-to-peak swing in the last `window` days with the one
/// before it.
pub fn oscillation_monitor(series: &[(f64, f64)], window: f64) -> OscillationReport {
    let damped_low = |amplitudes| OscillationReport {
        verdict: OscillationVerdict::Damped,
        low_confidence: true,
        amplitudes,
    };
    if series.len() < 3 || !(window > 0.0) {
        return damped_low(Vec::new());
    }
    let times: Vec<f64> = series.iter().map(|s| s.0).collect();
    let values: Vec<f64> = series.iter().map(|s| s.1).collect();
    let (t_first, t_last) = (times[0], times[times.len() - 1]);
    let level = values.iter().map(|x| x.abs()).sum::<f64>() / values.len() as f64;
    let floor = FLAT_AMPLITUDE * level.max(f64::MIN_POSITIVE);
    let peaks = find_peaks(&times, &values, f64::NEG_INFINITY);
    let troughs = find_troughs(&times, &values, f64::NEG_INFINITY);

    let amplitude = |lo: f64, hi: f64| -> Option<f64> {
        let top = peaks
            .iter()
            .filter(|p| p.time > lo && p.time <= hi)
            .map(|p| p.value)
            .fold(f64::NEG_INFINITY, f64::max);
        let bottom = troughs
            .iter()
            .filter(|p| p.time > lo && p.time <= hi)
            .map(|p| p.value)
            .fold(f64::INFINITY, f64::min);
        (top.is_finite() && bottom.is_finite()).then(|| (top - bottom).max(0.0))
    };

    let mut amplitudes = Vec::new();
    let mut hi = t_last;
    while hi - window >= t_first - 1e-9 * window {
        amplitudes.push((hi, amplitude(hi - window, hi).unwrap_or(0.0)));
        hi -= window;
    }
    amplitudes.reverse();

    let recent_peaks = peaks.iter().filter(|p| p.time > t_last - 2.0 * window).count();
    if amplitudes.len() < 2 || recent_peaks < 2 {
        return damped_low(amplitudes);
    }
    let last = amplitudes[amplitudes.len() - 1].1;
    let previous = amplitudes[amplitudes.len() - 2].1;
    let persistent = last > floor && last >= PERSISTENCE_RATIO * previous;
    OscillationReport {
        verdict: if persistent {
            OscillationVerdict::Persistent
        } else {
            OscillationVerdict::Damped
        },
        low_confidence: false,
        amplitudes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, length: f64) -> RadialGrid {
        RadialGrid::new(n, length / (n - 1) as f64).unwrap()
    }

    fn field_from(g: RadialGrid, u: Vec<f64>) -> RadialField {
        RadialField {
            grid: g,
            v: vec![0.0; g.n],
            i: vec![0.0; g.n],
            u,
            time: 0.0,
        }
    }

    #[test]
    fn grid_validation() {
        assert!(RadialGrid::new(31, 0.1).is_err());
        assert!(RadialGrid::new(32, 0.0).is_err());
        let g = RadialGrid::covering(10.0, 0.05).unwrap();
        assert_eq!(g.n, 201);
        assert!((g.length() - 10.0).abs() < 1e-12);
        assert_eq!(RadialGrid::covering(80.0, 0.05).unwrap().n, 1601);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = grid(64, 10.0);
        let lap = spherical_laplacian(&vec![2.5; g.n], &g);
        assert!(lap.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn laplacian_exact_on_r_squared() {
        let g = grid(101, 10.0);
        let f: Vec<f64> = g.radii().iter().map(|r| r * r).collect();
        let lap = spherical_laplacian(&f, &g);
        for x in &lap[..g.n - 1] {
            assert!((x - 6.0).abs() < 1e-10, "{x}");
        }
    }

    #[test]
    fn laplacian_second_order() {
        let length = 10.0;
        let err = |n: usize| {
            let g = grid(n, length);
            let k = PI / length;
            let f: Vec<f64> = g.radii().iter().map(|r| (k * r).cos()).collect();
            let lap = spherical_laplacian(&f, &g);
            (1..n - 1)
                .map(|j| {
                    let r = g.r(j);
                    let exact = -k * k * (k * r).cos() - 2.0 / r * k * (k * r).sin();
                    (lap[j] - exact).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(101) / err(201);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn initial_condition_steps() {
        let p = ModelParams::table1();
        let g = RadialGrid::covering(p.domain_l, DEFAULT_DR).unwrap();
        let f = initial_condition(&p, &g);
        // 2.6 and 0.5 fall on nodes, which sit half inside the ball.
        assert_eq!(f.u.iter().filter(|&&x| x == 1.0).count(), 52);
        assert_eq!(f.u[52], 0.5);
        assert_eq!(f.v.iter().filter(|&&x| x == p.v0).count(), 10);
        assert_eq!(f.v[10], 0.5 * p.v0);
        assert!(f.i.iter().all(|&x| x == 0.0));

        let whole = ModelParams { r_t: p.domain_l, ..p };
        assert!(initial_condition(&whole, &g).u.iter().all(|&x| x == whole.u0));
    }

    #[test]
    fn initial_totals() {
        let p = ModelParams::table1();
        let g = RadialGrid::covering(p.domain_l, DEFAULT_DR).unwrap();
        let f = initial_condition(&p, &g);
        let ball = |r: f64| 4.0 / 3.0 * PI * r.powi(3) * p.k;
        let shell = |r: f64| 4.0 * PI * r * r * g.dr * p.k;
        let cells = total_cells(&f, &p, Population::Uninfected);
        assert!((cells - ball(p.r_t)).abs() < shell(p.r_t), "{cells:e}");
        // Virus densities carry the factor k, so the total is a virion count.
        let virions = total_cells(&f, &p, Population::Virus);
        assert!((virions - ball(p.r_v) * p.v0).abs() < shell(p.r_v) * p.v0, "{virions:e}");
        assert!((virions / 1e10 - 1.0).abs() < 0.2, "{virions:e}");
        assert_eq!(total_cells(&f, &p, Population::Infected), 0.0);
    }

    #[test]
    fn total_of_uniform_field() {
        let p = ModelParams::table1();
        let g = grid(512, p.domain_l);
        let f = field_from(g, vec![1.0; g.n]);
        let exact = 4.0 / 3.0 * PI * p.domain_l.powi(3) * p.k;
        assert!((total_cells(&f, &p, Population::Uninfected) / exact - 1.0).abs() < 5e-3);
        assert_eq!(total_cells(&f, &p, Population::Virus), 0.0);
    }

    #[test]
    fn front_of_step_profile() {
        let g = grid(101, 10.0);
        let u: Vec<f64> = (0..g.n).map(|j| if j <= 40 { 1.0 } else { 0.0 }).collect();
        let f = field_from(g, u);
        assert!((front_position(&f, Population::Uninfected, 0.5).unwrap() - (g.r(40) + 0.5 * g.dr)).abs() < 1e-12);
        assert!((front_position(&f, Population::Uninfected, 1.0).unwrap() - g.r(40)).abs() < 1e-12);
        assert_eq!(front_position(&f, Population::Uninfected, 1.5), None);
        let flat = field_from(g, vec![1.0; g.n]);
        assert_eq!(front_position(&flat, Population::Uninfected, 0.5), None);
    }

    #[test]
    fn mean_speed_uses_window_ends() {
        let series: Vec<(f64, f64)> = (0..=10).map(|k| (k as f64, (k * k) as f64)).collect();
        assert_eq!(mean_speed(&series, 2.0, 6.0).unwrap(), 8.0);
        assert!(mean_speed(&series, 2.5, 2.9).is_err());
    }

    #[test]
    fn speed_of_linear_series() {
        let s: Vec<(f64, f64)> = (0..50).map(|k| (k as f64, 0.1 * k as f64 + 3.0)).collect();
        assert!((wave_speed(&s, 0.0, 100.0).unwrap() - 0.1).abs() < 1e-14);
        assert!((wave_speed(&s, 10.0, 20.0).unwrap() - 0.1).abs() < 1e-14);
        assert!(wave_speed(&s, 10.0, 10.5).is_err());
    }

    #[test]
    fn tail_of_uniform_field() {
        let g = grid(201, 10.0);
        let f = field_from(g, vec![0.37; g.n]);
        assert!((tail_density(&f, Population::Uninfected) - 0.37).abs() < 1e-15);
        let ramp = field_from(g, g.radii());
        // Nodes 0..=20 cover r <= 1.
        assert!((tail_density(&ramp, Population::Uninfected) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn caliper_volumes() {
        assert_eq!(tumour_volume(0.0), 0.0);
        assert!((tumour_volume(2.6) - 73.54).abs() < 0.01);
        assert!((tumour_volume(6.0) - 903.744).abs() < 1e-9);
    }

    #[test]
    fn monitor_on_synthetic_signals() {
        let sample = |f: &dyn Fn(f64) -> f64| -> Vec<(f64, f64)> {
            (0..=4000).map(|k| k as f64 * 0.01).map(|t| (t, f(t))).collect()
        };
        let damped = oscillation_monitor(&sample(&|t: f64| (-t).exp() * t.sin()), 10.0);
        assert_eq!(damped.verdict, OscillationVerdict::Damped);
        let steady = oscillation_monitor(&sample(&|t: f64| 2.0 + t.sin()), 10.0);
        assert_eq!(steady.verdict, OscillationVerdict::Persistent);
        assert!(!steady.low_confidence);
        let slow = oscillation_monitor(&sample(&|t: f64| 1.0 + (-0.01 * t).exp() * t.sin()), 10.0);
        assert_eq!(slow.verdict, OscillationVerdict::Persistent);
        let monotone = oscillation_monitor(&sample(&|t: f64| t), 10.0);
        assert_eq!(monotone.verdict, OscillationVerdict::Damped);
        assert!(monotone.low_confidence);
    }

    #[test]
    fn probe_sampling_interpolates() {
        let g = grid(101, 10.0);
        let f = field_from(g, g.radii());
        assert!((f.sample(5.03).0 - 5.03).abs() < 1e-12);
        assert_eq!(f.sample(10.0).0, 10.0);
    }
}
