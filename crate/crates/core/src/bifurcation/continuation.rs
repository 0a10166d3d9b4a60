use serde::{Deserialize, Serialize};

use super::{
    bracket_root, newton_state, BifurcationEvent, Branch, EquilibriumPoint, EventKind, NEWTON_TOL,
};
use crate::eigen::{det3, solve_linear};
use crate::error::BifurcationError;
use crate::model::{coexistence_equilibrium, jacobian_ode, param_derivative, rhs_ode, State3};
use crate::params::{ContinuationParam, ModelParams};

/// Box the branch must stay inside. Virus densities are measured in units
/// scaled by the carrying capacity and routinely reach tens or hundreds, so
/// they get a wider bound than the cell fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub u: f64,
    pub v: f64,
    pub i: f64,
}

impl Default for StateBounds {
    fn default() -> Self {
        Self {
            u: 10.0,
            v: 1e6,
            i: 10.0,
        }
    }
}

impl StateBounds {
    fn contains(&self, s: &State3) -> bool {
        s.u.abs() <= self.u && s.v.abs() <= self.v && s.i.abs() <= self.i
    }
}

/// Step sizes are arclengths in coordinates where the parameter range has
/// unit length and the virus density is divided by its starting magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSettings {
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Continue in the logarithm of the parameter.
    pub log_param: bool,
    pub bounds: StateBounds,
    pub max_points: usize,
    pub corrector_max_iter: usize,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self {
            h_init: 1e-3,
            h_min: 1e-12,
            h_max: 0.02,
            log_param: false,
            bounds: StateBounds::default(),
            max_points: 100_000,
            corrector_max_iter: 12,
        }
    }
}

type Vec4 = [f64; 4];

/// Corrector update size at which an ordinary step is accepted.
const STEP_TOL: f64 = 1e-8;
/// Tighter acceptance while refining events, where the extended system is
/// close to singular and Newton slows to linear convergence.
/// Largest Newton update, in chart coordinates, taken by the corrector.
const MAX_CORRECTION: f64 = 0.25;
const REFINE_STEP_TOL: f64 = 1e-14;

struct Chart {
    p: ModelParams,
    param: ContinuationParam,
    m_lo: f64,
    m_span: f64,
    log: bool,
    v_scale: f64,
}

impl Chart {
    fn map(&self, x: f64) -> f64 {
        if self.log {
            x.ln()
        } else {
            x
        }
    }

    fn param_at(&self, mu: f64) -> f64 {
        let m = self.m_lo + mu * self.m_span;
        if self.log {
            m.exp()
        } else {
            m
        }
    }

    fn mu_of(&self, x: f64) -> f64 {
        (self.map(x) - self.m_lo) / self.m_span
    }

    fn params(&self, mu: f64) -> ModelParams {
        self.p.with(self.param, self.param_at(mu))
    }

    fn state(&self, z: &Vec4) -> State3 {
        State3::new(z[0], z[1] * self.v_scale, z[2])
    }

    fn pack(&self, s: State3, mu: f64) -> Vec4 {
        [s.u, s.v / self.v_scale, s.i, mu]
    }

    fn residual(&self, z: &Vec4) -> State3 {
        rhs_ode(&self.state(z), &self.params(z[3]))
    }

    /// Jacobian of the residual with respect to the scaled coordinates.
    fn jacobian(&self, z: &Vec4) -> [[f64; 4]; 3] {
        let s = self.state(z);
        let x = self.param_at(z[3]);
        let p = self.params(z[3]);
        let j = jacobian_ode(&s, &p);
        let dx_dmu = self.m_span * if self.log { x } else { 1.0 };
        let fp = param_derivative(&s, &p, self.param).to_array();
        let mut out = [[0.0; 4]; 3];
        for r in 0..3 {
            out[r] = [j[r][0], j[r][1] * self.v_scale, j[r][2], fp[r] * dx_dmu];
        }
        out
    }

    fn point(&self, z: &Vec4) -> EquilibriumPoint {
        let p = self.params(z[3]);
        EquilibriumPoint::at(self.param_at(z[3]), self.state(z), &p)
    }

    /// Unit tangent continuing `prev` (sign-aligned with it).
    fn tangent(&self, z: &Vec4, prev: &Vec4) -> Option<Vec4> {
        let jac = self.jacobian(z);
        let m = [jac[0], jac[1], jac[2], *prev];
        let t = solve_linear(&m, [0.0, 0.0, 0.0, 1.0])?;
        let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        let sign = if dot(&t, prev) < 0.0 { -1.0 } else { 1.0 };
        Some(t.map(|x| sign * x / norm))
    }

    /// Newton on the equilibrium equations plus the arclength condition
    /// `t · (y - z) = h`, from the tangent predictor. Returns the corrected
    /// point and iteration count.
    fn correct(
        &self,
        z: &Vec4,
        t: &Vec4,
        h: f64,
        max_iter: usize,
        step_tol: f64,
    ) -> Option<(Vec4, usize)> {
        let guess = std::array::from_fn(|k| z[k] + h * t[k]);
        self.correct_from(guess, z, t, h, max_iter, step_tol)
    }

    fn correct_from(
        &self,
        guess: Vec4,
        z: &Vec4,
        t: &Vec4,
        h: f64,
        max_iter: usize,
        step_tol: f64,
    ) -> Option<(Vec4, usize)> {
        let mut y = guess;
        for iter in 1..=max_iter {
            let f = self.residual(&y).to_array();
            let arc = dot(t, &sub(&y, z)) - h;
            if iter == 1 && f.iter().all(|x| x.abs() < NEWTON_TOL) && arc.abs() <= 1e-14 {
                return Some((y, 0));
            }
            let jac = self.jacobian(&y);
            let m = [jac[0], jac[1], jac[2], *t];
            let mut dy = solve_linear(&m, [-f[0], -f[1], -f[2], -arc])?;
            let size = dy.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if size > MAX_CORRECTION {
                dy = dy.map(|x| x * MAX_CORRECTION / size);
            }
            for k in 0..4 {
                y[k] += dy[k];
            }
            if !y.iter().all(|x| x.is_finite()) {
                return None;
            }
            let step = dy.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if self.residual(&y).max_abs() < NEWTON_TOL && step < step_tol {
                return Some((y, iter));
            }
        }
        None
    }
}

fn dot(a: &Vec4, b: &Vec4) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &Vec4, b: &Vec4) -> Vec4 {
    std::array::from_fn(|k| a[k] - b[k])
}

/// Pseudo-arclength continuation of the equilibrium `start` in `param` across
/// `range`, starting from whichever end `start` sits on. Branch points (a real
/// eigenvalue crossing zero, seen as a sign change of the Jacobian
/// determinant) and Hopf points (the complex pair crossing the imaginary axis)
/// are refined by root-finding along the arclength of the step that straddles
/// them.
pub fn continue_branch(
    p: &ModelParams,
    param: ContinuationParam,
    range: (f64, f64),
    start: &EquilibriumPoint,
    settings: &ContinuationSettings,
) -> Result<Branch, BifurcationError> {
    let (lo, hi) = (range.0.min(range.1), range.0.max(range.1));
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(BifurcationError::InvalidSetup(format!("empty range [{lo}, {hi}]")));
    }
    if settings.log_param && lo <= 0.0 {
        return Err(BifurcationError::InvalidSetup(
            "logarithmic continuation needs a positive range".into(),
        ));
    }
    let chart = {
        let log = settings.log_param;
        let m = |x: f64| if log { x.ln() } else { x };
        Chart {
            p: *p,
            param,
            m_lo: m(lo),
            m_span: m(hi) - m(lo),
            log,
            v_scale: start.state.v.abs().max(1.0),
        }
    };
    let x0 = start.param_value;
    let at_lo = (x0 - lo).abs() <= 1e-9 * (hi - lo);
    let at_hi = (x0 - hi).abs() <= 1e-9 * (hi - lo);
    if !(at_lo || at_hi) {
        return Err(BifurcationError::InvalidSetup(format!(
            "start {x0} is not at an end of [{lo}, {hi}]"
        )));
    }
    let mu0 = if at_lo { 0.0 } else { 1.0 };
    let direction = if at_lo { 1.0 } else { -1.0 };

    let s0 = newton_state(&chart.params(mu0), start.state, param)?;
    let mut z = chart.pack(s0, mu0);
    let mut t = {
        let jac = chart.jacobian(&z);
        let j3 = [
            [jac[0][0], jac[0][1], jac[0][2]],
            [jac[1][0], jac[1][1], jac[1][2]],
            [jac[2][0], jac[2][1], jac[2][2]],
        ];
        let rhs = [-jac[0][3], -jac[1][3], -jac[2][3]];
        let dx = crate::eigen::solve3(&j3, rhs).ok_or(BifurcationError::SingularJacobian {
            param: chart.param_at(mu0),
        })?;
        let raw = [dx[0], dx[1], dx[2], 1.0].map(|x| direction * x);
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.map(|x| x / norm)
    };

    let mut points = vec![chart.point(&z)];
    let mut events = Vec::new();
    let mut h = settings.h_init.min(settings.h_max);

    while points.len() < settings.max_points {
        let Some((y, iters)) = chart.correct(&z, &t, h, settings.corrector_max_iter, STEP_TOL) else {
            h *= 0.5;
            if h < settings.h_min {
                return Err(BifurcationError::StepUnderflow {
                    param: chart.param_at(z[3]),
                });
            }
            continue;
        };
        let state = chart.state(&y);
        if !settings.bounds.contains(&state) {
            return Err(BifurcationError::OutOfBounds {
                param: chart.param_at(y[3]),
            });
        }

        let past_end = y[3] > 1.0 || y[3] < 0.0;
        let (y, step) = if past_end {
            // Land exactly on the end of the range.
            let mu_end = if y[3] > 1.0 { 1.0 } else { 0.0 };
            let w = (mu_end - z[3]) / (y[3] - z[3]);
            let guess = chart.state(&std::array::from_fn(|k| z[k] + w * (y[k] - z[k])));
            let s_end = newton_state(&chart.params(mu_end), guess, param)?;
            let y_end = chart.pack(s_end, mu_end);
            let step = dot(&t, &sub(&y_end, &z));
            (y_end, step)
        } else {
            (y, h)
        };

        let prev = *points.last().expect("branch starts non-empty");
        let next = chart.point(&y);
        detect_events(&chart, &z, &t, step, &prev, &next, settings, &mut events)?;
        points.push(next);
        if past_end {
            break;
        }

        t = chart.tangent(&y, &t).ok_or(BifurcationError::SingularJacobian {
            param: next.param_value,
        })?;
        z = y;
        if iters <= 3 {
            h = (h * 1.5).min(settings.h_max);
        } else if iters >= 6 {
            h *= 0.6;
        }
        let toward_end = chart.mu_of(next.param_value);
        if !(0.0..=1.0).contains(&toward_end) {
            break;
        }
    }
    Ok(Branch {
        param,
        points,
        events,
    })
}

#[allow(clippy::too_many_arguments)]
fn detect_events(
    chart: &Chart,
    z: &Vec4,
    t: &Vec4,
    step: f64,
    prev: &EquilibriumPoint,
    next: &EquilibriumPoint,
    settings: &ContinuationSettings,
    events: &mut Vec<BifurcationEvent>,
) -> Result<(), BifurcationError> {
    let y_next = chart.pack(next.state, chart.mu_of(next.param_value));
    let eval_at = |s: f64| -> Result<EquilibriumPoint, BifurcationError> {
        if s == step {
            return Ok(*next);
        }
        // Predict along the chord to the corrected end point; near a branch
        // point the tangent predictor can land outside Newton's basin.
        let w = s / step;
        let guess = std::array::from_fn(|k| z[k] + w * (y_next[k] - z[k]));
        let (y, _) = chart
            .correct_from(guess, z, t, s, 4 * settings.corrector_max_iter, REFINE_STEP_TOL)
            .ok_or(BifurcationError::NewtonDiverged {
                iterations: 4 * settings.corrector_max_iter,
                residual: f64::NAN,
            })?;
        Ok(chart.point(&y))
    };
    let det_of = |pt: &EquilibriumPoint| {
        let p = chart.p.with(chart.param, pt.param_value);
        det3(&jacobian_ode(&pt.state, &p))
    };

    let (d0, d1) = (det_of(prev), det_of(next));
    if d0 != 0.0 && d1 != 0.0 && d0.signum() != d1.signum() {
        let found = bracket_root(
            |s| eval_at(s).map(|pt| (det_of(&pt), pt)),
            0.0,
            step,
            d0,
            d1,
            0.0,
        )?;
        if let Some((_, _, pt)) = found {
            events.push(BifurcationEvent {
                kind: EventKind::BranchPoint,
                param_value: pt.param_value,
                eigenvalue: pt
                    .eigen
                    .real_values()
                    .map(|x| num_complex::Complex64::new(x, 0.0))
                    .min_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
                    .unwrap_or_else(|| pt.eigen.nearest_to_zero()),
                state: pt.state,
            });
        }
    }

    if let (Some(a), Some(b)) = (prev.eigen.complex_pair(), next.eigen.complex_pair()) {
        if a.re != 0.0 && b.re != 0.0 && a.re.signum() != b.re.signum() {
            let found = bracket_root(
                |s| {
                    let pt = eval_at(s)?;
                    let pair = pt.eigen.complex_pair().ok_or(BifurcationError::InvalidBracket {
                        lo: prev.param_value,
                        hi: next.param_value,
                    })?;
                    Ok::<_, BifurcationError>((pair.re, pt))
                },
                0.0,
                step,
                a.re,
                b.re,
                0.1 * super::HOPF_TOL,
            )?;
            if let Some((_, _, pt)) = found {
                events.push(BifurcationEvent {
                    kind: EventKind::Hopf,
                    param_value: pt.param_value,
                    eigenvalue: pt.eigen.complex_pair().expect("checked during refinement"),
                    state: pt.state,
                });
            }
        }
    }
    Ok(())
}

/// Which end of the range a convenience continuation starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartEnd {
    #[default]
    Low,
    High,
}

/// Continues the coexistence equilibrium in `param` across `range`, starting
/// from its closed form at the chosen end.
pub fn coexistence_branch(
    p: &ModelParams,
    param: ContinuationParam,
    range: (f64, f64),
    from: StartEnd,
    settings: &ContinuationSettings,
) -> Result<Branch, BifurcationError> {
    let x0 = match from {
        StartEnd::Low => range.0.min(range.1),
        StartEnd::High => range.0.max(range.1),
    };
    let q = p.with(param, x0);
    let guess = coexistence_equilibrium(&q)
        .ok_or_else(|| {
            BifurcationError::InvalidSetup(format!("no coexistence equilibrium at {param} = {x0}"))
        })?
        .state;
    let start = EquilibriumPoint::at(x0, newton_state(&q, guess, param)?, &q);
    continue_branch(p, param, range, &start, settings)
}

/// Continues the carrying-capacity state `(1, 0, 0)` in `param` across
/// `range`.
pub fn trivial_branch(
    p: &ModelParams,
    param: ContinuationParam,
    range: (f64, f64),
    settings: &ContinuationSettings,
) -> Result<Branch, BifurcationError> {
    let x0 = range.0.min(range.1);
    let q = p.with(param, x0);
    let start = EquilibriumPoint::at(x0, State3::CARRYING_CAPACITY, &q);
    continue_branch(p, param, range, &start, settings)
}
