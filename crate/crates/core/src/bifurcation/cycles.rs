use serde::{Deserialize, Serialize};

use crate::model::{coexistence_equilibrium, Component, State3};
use crate::ode::{find_peaks, integrate, summarize_cycle, IntegrationConfig, DEFAULT_DISCARD_FRACTION};
use crate::params::{ContinuationParam, ModelParams};

const MAX_WINDOW_GROWTH: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSettings {
    /// Length of one integration window, days.
    pub window: f64,
    /// Windows tried per parameter value before giving up on convergence.
    pub max_windows: usize,
    pub discard_fraction: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub stride: f64,
    /// Relative kick applied to the equilibrium to seed the first sample.
    pub perturbation: f64,
}

impl Default for CycleSettings {
    fn default() -> Self {
        Self {
            window: 1000.0,
            max_windows: 12,
            discard_fraction: DEFAULT_DISCARD_FRACTION,
            rel_tol: 1e-9,
            abs_tol: 1e-14,
            stride: 0.05,
            perturbation: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCyclePoint {
    pub param_value: f64,
    pub u_max: f64,
    pub u_min: f64,
    /// Days; `NaN` when the orbit settled on an equilibrium.
    pub period: f64,
    /// Whether the trailing peaks settled within the spread tolerance.
    pub converged: bool,
    /// False when the trajectory stopped oscillating.
    pub oscillating: bool,
}

/// Settled oscillation amplitude and period of `u` at each value of `param`,
/// by long integration. Each sample starts from where the previous one ended.
pub fn limit_cycle_branch(
    p: &ModelParams,
    param: ContinuationParam,
    values: &[f64],
    settings: &CycleSettings,
) -> Vec<LimitCyclePoint> {
    let mut carry: Option<State3> = None;
    values
        .iter()
        .map(|&x| {
            let q = p.with(param, x);
            let mut state = carry.unwrap_or_else(|| seed(&q, settings.perturbation));
            let mut window = settings.window;
            let mut result = LimitCyclePoint {
                param_value: x,
                u_max: f64::NAN,
                u_min: f64::NAN,
                period: f64::NAN,
                converged: false,
                oscillating: false,
            };
            for _ in 0..settings.max_windows {
                let cfg = IntegrationConfig {
                    max_step: 1.0,
                    ..IntegrationConfig::span(0.0, window)
                        .with_tolerances(settings.rel_tol, settings.abs_tol)
                        .with_stride(settings.stride)
                };
                let discard = settings.discard_fraction * window;
                let Ok(traj) = integrate(&q, state, &cfg) else {
                    carry = None;
                    return result;
                };
                state = traj.last();
                let u = traj.component(Component::U);
                match summarize_cycle(&traj.times, &u, discard) {
                    Some(c) => {
                        result.u_max = c.max;
                        result.u_min = c.min;
                        result.period = c.period;
                        result.converged = c.converged;
                        result.oscillating = true;
                        if c.converged {
                            break;
                        }
                    }
                    // A few peaks but not enough: the period is long next to
                    // the window.
                    None if find_peaks(&traj.times, &u, discard).len() >= 2
                        && window < MAX_WINDOW_GROWTH * settings.window =>
                    {
                        window *= 2.0;
                    }
                    None => {
                        result.u_max = state.u;
                        result.u_min = state.u;
                        result.period = f64::NAN;
                        result.converged = true;
                        result.oscillating = false;
                        break;
                    }
                }
            }
            carry = Some(state);
            result
        })
        .collect()
}

fn seed(p: &ModelParams, kick: f64) -> State3 {
    match coexistence_equilibrium(p) {
        Some(eq) if eq.biological => {
            let s = eq.state;
            State3::new(s.u * (1.0 + kick), s.v * (1.0 - kick), s.i)
        }
        _ => State3::new(0.9, 1.0, 0.01),
    }
}
