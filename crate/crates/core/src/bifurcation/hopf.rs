use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{bracket_root, newton_state, BifurcationEvent, EquilibriumPoint, EventKind, HOPF_TOL};
use crate::eigen::{eigensolve_3x3, Matrix3};
use crate::error::BifurcationError;
use crate::model::{coexistence_equilibrium, jacobian_ode, State3};
use crate::params::{ContinuationParam, ModelParams};

/// Refines a Hopf point of a one-parameter family between `lo` and `hi`.
/// `family(x)` returns the Jacobian and state at parameter `x`; the real part
/// of the complex eigenvalue pair must change sign across the bracket.
pub fn refine_hopf(
    mut family: impl FnMut(f64) -> Result<(Matrix3, State3), BifurcationError>,
    lo: f64,
    hi: f64,
) -> Result<BifurcationEvent, BifurcationError> {
    let mut pair_at = |x: f64| -> Result<(f64, (Complex64, State3)), BifurcationError> {
        let (j, s) = family(x)?;
        let pair = eigensolve_3x3(&j)
            .complex_pair()
            .ok_or(BifurcationError::InvalidBracket { lo, hi })?;
        Ok((pair.re, (pair, s)))
    };
    let (g_lo, _) = pair_at(lo)?;
    let (g_hi, _) = pair_at(hi)?;
    let (x, _, (pair, state)) = bracket_root(&mut pair_at, lo, hi, g_lo, g_hi, 0.1 * HOPF_TOL)?
        .ok_or(BifurcationError::InvalidBracket { lo, hi })?;
    Ok(BifurcationEvent {
        kind: EventKind::Hopf,
        param_value: x,
        eigenvalue: pair,
        state,
    })
}

/// [`refine_hopf`] on the model's equilibria, following the branch through
/// `a` and `b` by Newton from interpolated guesses.
pub fn refine_hopf_between(
    p: &ModelParams,
    param: ContinuationParam,
    a: &EquilibriumPoint,
    b: &EquilibriumPoint,
) -> Result<BifurcationEvent, BifurcationError> {
    let (xa, xb) = (a.param_value, b.param_value);
    refine_hopf(
        |x| {
            let w = (x - xa) / (xb - xa);
            let guess = a.state + (b.state - a.state) * w;
            let q = p.with(param, x);
            let s = newton_state(&q, guess, param)?;
            Ok((jacobian_ode(&s, &q), s))
        },
        xa,
        xb,
    )
}

/// Grids for locating Hopf points in the `(delta_v, delta_i)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfScan {
    /// First and last `delta_i` grid lines; the grid is log-spaced and runs in
    /// the given order.
    pub delta_i_from: f64,
    pub delta_i_to: f64,
    pub delta_i_lines: usize,
    /// Log-spaced `delta_v` samples per line, below the branch-point value
    /// `beta (alpha - 1)` where the coexistence equilibrium exists.
    pub delta_v_samples: usize,
    /// Smallest `delta_v`, as a fraction of the branch-point value; also the
    /// stand-in for `delta_v = 0` when intersecting the `delta_i` axis.
    pub delta_v_floor: f64,
}

impl Default for HopfScan {
    fn default() -> Self {
        Self {
            delta_i_from: 1e-3,
            delta_i_to: 1e2,
            delta_i_lines: 201,
            delta_v_samples: 400,
            delta_v_floor: 1e-7,
        }
    }
}

impl HopfScan {
    pub fn delta_i_grid(&self) -> Vec<f64> {
        log_grid(self.delta_i_from, self.delta_i_to, self.delta_i_lines)
    }

    fn delta_v_grid(&self, top: f64) -> Vec<f64> {
        log_grid(self.delta_v_floor * top, top * (1.0 - 1e-9), self.delta_v_samples)
    }
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|k| (la + (lb - la) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfCurve {
    pub beta: f64,
    /// `(delta_v, delta_i)` Hopf locations in grid order.
    pub points: Vec<(f64, f64)>,
    /// Runs of consecutive grid lines that carry a Hopf point.
    pub segments: Vec<Vec<(f64, f64)>>,
    /// Grid lines on which no Hopf point was found.
    pub gaps: Vec<f64>,
    /// `delta_i` values where the oscillatory region meets `delta_v = 0`.
    pub axis_intersections: Vec<f64>,
    /// Area, in the linear `(delta_v, delta_i)` plane, of the region where
    /// the coexistence equilibrium is oscillatory-unstable.
    pub area: f64,
}

impl HopfCurve {
    /// Hopf `delta_v` on the grid line nearest to `delta_i` (in log distance).
    pub fn nearest_line(&self, delta_i: f64) -> Option<Vec<f64>> {
        let target = delta_i.ln();
        let best = self
            .points
            .iter()
            .map(|&(_, di)| di)
            .min_by(|a, b| (a.ln() - target).abs().total_cmp(&(b.ln() - target).abs()))?;
        Some(
            self.points
                .iter()
                .filter(|&&(_, di)| di == best)
                .map(|&(dv, _)| dv)
                .collect(),
        )
    }
}

/// Real part of the complex pair at the coexistence equilibrium, if the
/// equilibrium exists and has such a pair.
fn pair_real_part(p: &ModelParams) -> Option<f64> {
    coexistence_equilibrium(p)?.eigen.complex_pair().map(|z| z.re)
}

fn roots_along(
    values: &[f64],
    mut g: impl FnMut(f64) -> Option<f64>,
) -> Result<Vec<f64>, BifurcationError> {
    let samples: Vec<Option<f64>> = values.iter().map(|&x| g(x)).collect();
    let mut roots = Vec::new();
    for k in 0..values.len().saturating_sub(1) {
        let (Some(a), Some(b)) = (samples[k], samples[k + 1]) else {
            continue;
        };
        if a == 0.0 {
            roots.push(values[k]);
            continue;
        }
        if a.signum() == b.signum() || b == 0.0 {
            continue;
        }
        let (lo, hi) = (values[k], values[k + 1]);
        let found = bracket_root(
            |x| g(x).map(|v| (v, ())).ok_or(BifurcationError::InvalidBracket { lo, hi }),
            lo,
            hi,
            a,
            b,
            0.1 * HOPF_TOL,
        )?;
        if let Some((x, _, _)) = found {
            roots.push(x);
        }
    }
    Ok(roots)
}

/// Hopf values of `delta_v` at fixed `delta_i`, in increasing order.
pub fn hopf_delta_v_at(
    p: &ModelParams,
    delta_i: f64,
    scan: &HopfScan,
) -> Result<Vec<f64>, BifurcationError> {
    let q = ModelParams { delta_i, ..*p };
    let top = q.beta * (q.alpha - 1.0);
    roots_along(&scan.delta_v_grid(top), |dv| {
        pair_real_part(&ModelParams { delta_v: dv, ..q })
    })
}

/// Hopf values of `delta_i` at fixed `delta_v`, scanned over the scan's
/// `delta_i` grid.
pub fn hopf_delta_i_at(
    p: &ModelParams,
    delta_v: f64,
    scan: &HopfScan,
) -> Result<Vec<f64>, BifurcationError> {
    let mut grid = scan.delta_i_grid();
    grid.sort_by(f64::total_cmp);
    roots_along(&grid, |di| pair_real_part(&ModelParams { delta_v, delta_i: di, ..*p }))
}

/// Length of the `delta_v` set on which the pair's real part is positive.
fn unstable_length(p: &ModelParams, delta_i: f64, roots: &[f64], scan: &HopfScan) -> f64 {
    let q = ModelParams { delta_i, ..*p };
    let top = q.beta * (q.alpha - 1.0);
    let mut edges = vec![scan.delta_v_floor * top];
    edges.extend_from_slice(roots);
    edges.push(top);
    edges
        .windows(2)
        .filter(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            pair_real_part(&ModelParams { delta_v: mid, ..q }).is_some_and(|re| re > 0.0)
        })
        .map(|w| w[1] - w[0])
        .sum()
}

/// Hopf curves in the `(delta_v, delta_i)` plane, one per `beta`.
pub fn hopf_curve_2param(
    p: &ModelParams,
    beta_values: &[f64],
    scan: &HopfScan,
) -> Result<Vec<HopfCurve>, BifurcationError> {
    if scan.delta_i_lines < 2 || scan.delta_v_samples < 2 {
        return Err(BifurcationError::InvalidSetup("scan grids need two or more samples".into()));
    }
    if !(scan.delta_i_from > 0.0 && scan.delta_i_to > 0.0 && scan.delta_v_floor > 0.0) {
        return Err(BifurcationError::InvalidSetup("scan bounds must be positive".into()));
    }
    beta_values
        .iter()
        .map(|&beta| {
            let q = p.with_beta(beta);
            let grid = scan.delta_i_grid();
            let mut points = Vec::new();
            let mut segments: Vec<Vec<(f64, f64)>> = Vec::new();
            let mut gaps = Vec::new();
            let mut lengths = Vec::with_capacity(grid.len());
            let mut open = false;
            for &di in &grid {
                let roots = hopf_delta_v_at(&q, di, scan)?;
                lengths.push((di, unstable_length(&q, di, &roots, scan)));
                if roots.is_empty() {
                    gaps.push(di);
                    open = false;
                    continue;
                }
                if !open {
                    segments.push(Vec::new());
                    open = true;
                }
                for dv in roots {
                    points.push((dv, di));
                    segments.last_mut().expect("opened above").push((dv, di));
                }
            }
            lengths.sort_by(|a, b| a.0.total_cmp(&b.0));
            let area = lengths
                .windows(2)
                .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
                .sum();
            let floor = scan.delta_v_floor * q.beta * (q.alpha - 1.0);
            let axis_intersections = hopf_delta_i_at(&q, floor, scan)?;
            Ok(HopfCurve {
                beta,
                points,
                segments,
                gaps,
                axis_intersections,
                area,
            })
        })
        .collect()
}
