//! Equilibrium continuation, bifurcation detection and the oscillatory
//! structure beyond Hopf points.

mod continuation;
mod cycles;
mod hopf;

pub use continuation::{
    coexistence_branch, continue_branch, trivial_branch, ContinuationSettings, StartEnd, StateBounds,
};
pub use cycles::{limit_cycle_branch, CycleSettings, LimitCyclePoint};
pub use hopf::{
    hopf_curve_2param, hopf_delta_i_at, hopf_delta_v_at, refine_hopf, refine_hopf_between, HopfCurve,
    HopfScan,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen::{solve3, Eigentriple};
use crate::error::BifurcationError;
use crate::model::{eigen_at, jacobian_ode, rhs_ode, State3};
use crate::params::{ContinuationParam, ModelParams};

/// Residual below which an equilibrium counts as converged.
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
/// A located branch point has a real eigenvalue this close to zero.
pub const EVENT_TOL: f64 = 1e-8;
/// Target for the real part of the crossing pair at a refined Hopf point.
pub const HOPF_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumPoint {
    pub param_value: f64,
    pub state: State3,
    pub eigen: Eigentriple,
    pub stable: bool,
}

impl EquilibriumPoint {
    pub fn at(param_value: f64, state: State3, p: &ModelParams) -> Self {
        let eigen = eigen_at(&state, p);
        Self {
            param_value,
            state,
            eigen,
            stable: eigen.is_stable(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    BranchPoint,
    Hopf,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::BranchPoint => "BP",
            Self::Hopf => "HB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    pub param_value: f64,
    /// The eigenvalue that crossed the imaginary axis (for a Hopf point, the
    /// member of the pair with positive imaginary part).
    pub eigenvalue: Complex64,
    pub state: State3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub param: ContinuationParam,
    pub points: Vec<EquilibriumPoint>,
    pub events: Vec<BifurcationEvent>,
}

impl Branch {
    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &BifurcationEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

/// Newton iteration on the equilibrium equations, damped by a pseudo-time
/// step that grows as the residual falls, reporting the result as a point of
/// a branch in `param`. Early iterations follow the flow, so distant guesses
/// are drawn toward attracting equilibria rather than the nearest root.
pub fn newton_equilibrium(
    p: &ModelParams,
    guess: State3,
    param: ContinuationParam,
) -> Result<EquilibriumPoint, BifurcationError> {
    if !guess.is_finite() {
        return Err(BifurcationError::InvalidSetup(format!("non-finite guess {guess:?}")));
    }
    let mut s = guess;
    let mut res = rhs_ode(&s, p).max_abs();
    let mut dt = PSEUDO_DT0;
    for _ in 0..PSEUDO_MAX_ITER {
        if res < NEWTON_TOL {
            break;
        }
        let f = rhs_ode(&s, p);
        let mut m = jacobian_ode(&s, p);
        for (k, row) in m.iter_mut().enumerate() {
            for x in row.iter_mut() {
                *x = -*x;
            }
            row[k] += 1.0 / dt;
        }
        let dx = solve3(&m, f.to_array())
            .ok_or(BifurcationError::SingularJacobian { param: param.get(p) })?;
        s = s + State3::from_array(dx);
        if !s.is_finite() {
            break;
        }
        let next = rhs_ode(&s, p).max_abs();
        dt = (dt * res / next.max(f64::MIN_POSITIVE)).min(1e12);
        res = next;
    }
    let state = newton_state(p, s, param)?;
    Ok(EquilibriumPoint::at(param.get(p), state, p))
}

const PSEUDO_DT0: f64 = 0.1;
const PSEUDO_MAX_ITER: usize = 500;

/// Undamped local Newton with a residual line search, for guesses already
/// close to a root.
pub(crate) fn newton_state(
    p: &ModelParams,
    guess: State3,
    param: ContinuationParam,
) -> Result<State3, BifurcationError> {
    if !guess.is_finite() {
        return Err(BifurcationError::InvalidSetup(format!("non-finite guess {guess:?}")));
    }
    let mut s = guess;
    let mut f = rhs_ode(&s, p);
    let mut res = f.max_abs();
    for _ in 0..NEWTON_MAX_ITER {
        if res < NEWTON_TOL {
            return Ok(s);
        }
        let dx = solve3(&jacobian_ode(&s, p), [-f.u, -f.v, -f.i])
            .ok_or(BifurcationError::SingularJacobian { param: param.get(p) })?;
        let dx = State3::from_array(dx);
        let mut lambda = 1.0;
        loop {
            let trial = s + dx * lambda;
            let f_trial = rhs_ode(&trial, p);
            let res_trial = f_trial.max_abs();
            if res_trial < res || lambda < 1e-4 {
                s = trial;
                f = f_trial;
                res = res_trial;
                break;
            }
            lambda *= 0.5;
        }
        if !s.is_finite() {
            break;
        }
    }
    if res < NEWTON_TOL {
        Ok(s)
    } else {
        Err(BifurcationError::NewtonDiverged {
            iterations: NEWTON_MAX_ITER,
            residual: res,
        })
    }
}

/// Locates a sign change of `g` inside `[lo, hi]` by bisection followed by a
/// safeguarded secant polish. `eval` returns the test value and a payload
/// carried back with the root. Stops once `|g| < tol` or the bracket
/// collapses to rounding level.
pub(crate) fn bracket_root<T, E>(
    mut eval: impl FnMut(f64) -> Result<(f64, T), E>,
    mut lo: f64,
    mut hi: f64,
    mut g_lo: f64,
    mut g_hi: f64,
    tol: f64,
) -> Result<Option<(f64, f64, T)>, E> {
    if g_lo.signum() == g_hi.signum() {
        return Ok(None);
    }
    let width = (hi - lo).abs();
    let mut best: Option<(f64, f64, T)> = None;
    let keep = |x: f64, g: f64, t: T, best: &mut Option<(f64, f64, T)>| {
        if best.as_ref().map_or(true, |b| g.abs() < b.1.abs()) {
            *best = Some((x, g, t));
        }
    };
    let mut iter = 0;
    while iter < 200 {
        iter += 1;
        let gap = (hi - lo).abs();
        if gap <= 1e-15 * lo.abs().max(hi.abs()).max(1e-300) {
            break;
        }
        // Bisect until the bracket is small, then try secant steps that stay
        // inside it.
        let mut x = 0.5 * (lo + hi);
        if gap < 1e-3 * width {
            let s = hi - g_hi * (hi - lo) / (g_hi - g_lo);
            if s > lo.min(hi) && s < lo.max(hi) {
                x = s;
            }
        }
        let (g, t) = eval(x)?;
        let done = g.abs() < tol;
        keep(x, g, t, &mut best);
        if done {
            break;
        }
        if g.signum() == g_lo.signum() {
            lo = x;
            g_lo = g;
        } else {
            hi = x;
            g_hi = g;
        }
    }
    Ok(best)
}
