//! Well-mixed tumour-virus dynamics: right-hand side, Jacobian, closed-form
//! equilibria and their spectra.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen::{eigensolve_3x3, solve3, Eigentriple, Matrix3};
use crate::error::ModelError;
use crate::params::{ContinuationParam, ModelParams};

/// Uninfected cells, free virus and infected cells at one point (or in a
/// well-mixed compartment), scaled by the carrying capacity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State3 {
    pub u: f64,
    pub v: f64,
    pub i: f64,
}

impl State3 {
    pub const ZERO: State3 = State3 { u: 0.0, v: 0.0, i: 0.0 };
    pub const CARRYING_CAPACITY: State3 = State3 { u: 1.0, v: 0.0, i: 0.0 };

    pub const fn new(u: f64, v: f64, i: f64) -> Self {
        Self { u, v, i }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.u, self.v, self.i]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2])
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite() && self.i.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.u.abs().max(self.v.abs()).max(self.i.abs())
    }

    pub fn min_component(&self) -> f64 {
        self.u.min(self.v).min(self.i)
    }

    pub fn component(&self, c: Component) -> f64 {
        match c {
            Component::U => self.u,
            Component::V => self.v,
            Component::I => self.i,
        }
    }
}

impl Add for State3 {
    type Output = State3;
    fn add(self, o: State3) -> State3 {
        State3::new(self.u + o.u, self.v + o.v, self.i + o.i)
    }
}

impl Sub for State3 {
    type Output = State3;
    fn sub(self, o: State3) -> State3 {
        State3::new(self.u - o.u, self.v - o.v, self.i - o.i)
    }
}

impl Mul<f64> for State3 {
    type Output = State3;
    fn mul(self, s: f64) -> State3 {
        State3::new(self.u * s, self.v * s, self.i * s)
    }
}

/// Selects one of the three populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    U,
    V,
    I,
}

impl Component {
    pub fn index(self) -> usize {
        match self {
            Component::U => 0,
            Component::V => 1,
            Component::I => 2,
        }
    }
}

/// Reaction terms `(du/dt, dv/dt, di/dt)`.
#[inline]
pub fn reaction(u: f64, v: f64, i: f64, p: &ModelParams) -> (f64, f64, f64) {
    let infection = p.beta * u * v;
    (
        p.r_u * u * (1.0 - (u + i)) - infection,
        p.alpha * p.delta_i * i - p.delta_v * v - p.beta * (u + i) * v,
        infection - p.delta_i * i,
    )
}

pub fn rhs_ode(s: &State3, p: &ModelParams) -> State3 {
    let (du, dv, di) = reaction(s.u, s.v, s.i, p);
    State3::new(du, dv, di)
}

pub fn jacobian_ode(s: &State3, p: &ModelParams) -> Matrix3 {
    let State3 { u, v, i } = *s;
    let b = p.beta;
    [
        [p.r_u * (1.0 - i - 2.0 * u) - v * b, -u * b, -p.r_u * u],
        [-v * b, -(i + u) * b - p.delta_v, -v * b + p.alpha * p.delta_i],
        [v * b, u * b, -p.delta_i],
    ]
}

/// Partial derivative of [`rhs_ode`] with respect to a continuation parameter.
pub fn param_derivative(s: &State3, p: &ModelParams, param: ContinuationParam) -> State3 {
    let State3 { u, v, i } = *s;
    match param {
        ContinuationParam::Beta => State3::new(-u * v, -(u + i) * v, u * v),
        ContinuationParam::Alpha => State3::new(0.0, p.delta_i * i, 0.0),
        ContinuationParam::DeltaV => State3::new(0.0, -v, 0.0),
        ContinuationParam::DeltaI => State3::new(0.0, p.alpha * i, -i),
    }
}

pub fn eigen_at(s: &State3, p: &ModelParams) -> Eigentriple {
    eigensolve_3x3(&jacobian_ode(s, p))
}

/// Infectivity above which the carrying-capacity state `(1, 0, 0)` is unstable:
/// `delta_v / (alpha - 1)`.
pub fn beta_star(p: &ModelParams) -> Result<f64, ModelError> {
    if p.alpha <= 1.0 {
        return Err(ModelError::BurstSizeTooSmall(p.alpha));
    }
    Ok(p.delta_v / (p.alpha - 1.0))
}

/// Spectrum at `(1, 0, 0)` from its closed form: `-r_u` and the two roots of
/// the virus/infected block.
pub fn carrying_capacity_eigenvalues(p: &ModelParams) -> Eigentriple {
    let sum = p.beta + p.delta_i + p.delta_v;
    let disc = sum * sum - 4.0 * p.delta_i * (p.beta - p.alpha * p.beta + p.delta_v);
    let root = Complex64::new(disc, 0.0).sqrt();
    Eigentriple::new([
        Complex64::new(-p.r_u, 0.0),
        0.5 * (-sum + root),
        0.5 * (-sum - root),
    ])
}

/// A fixed point together with its spectrum. `biological` is true when
/// `0 < u <= 1` and `v, i >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub state: State3,
    pub eigen: Eigentriple,
    pub biological: bool,
}

impl Equilibrium {
    pub fn at(state: State3, p: &ModelParams) -> Self {
        let biological = state.u > 0.0 && state.u <= 1.0 && state.v >= 0.0 && state.i >= 0.0;
        Self {
            state,
            eigen: eigen_at(&state, p),
            biological,
        }
    }
}

/// Coefficients `(A, B, C)` of the quadratic `A U² + B U + C = 0` satisfied by
/// the `U` component of the two parameter-dependent equilibria.
pub fn equilibrium_quadratic(p: &ModelParams) -> (f64, f64, f64) {
    let ModelParams {
        r_u: r,
        beta: b,
        alpha: a,
        delta_v: dv,
        delta_i: di,
        ..
    } = *p;
    (
        a * b * b * r * di,
        di * b * (a * b * di - r * dv - b * di - r * b),
        -di * di * dv * b,
    )
}

/// Closed-form parameter-dependent equilibrium; `sign = +1` selects the
/// coexistence root, `-1` the other one.
fn quadratic_root_state(p: &ModelParams, sign: f64) -> Option<State3> {
    let ModelParams {
        r_u: r,
        beta: b,
        alpha: a,
        delta_v: dv,
        delta_i: di,
        ..
    } = *p;
    let (qa, _, _) = equilibrium_quadratic(p);
    if qa == 0.0 || b * di == 0.0 {
        return None;
    }
    let radicand = (a - 1.0).powi(2) * b * b * di * di
        + r * r * (b + dv).powi(2)
        + 2.0 * b * di * r * ((1.0 - a) * b + (a + 1.0) * dv);
    if radicand < 0.0 || !radicand.is_finite() {
        return None;
    }
    let s = sign * radicand.sqrt();
    let u = ((1.0 - a) * b * di + r * (b + dv) + s) / (2.0 * a * b * r);
    let v = ((a - 1.0) * b * di + r * (b + dv) - s) / (2.0 * b * b);
    let i = ((a - 1.0) * b * r - (a + 1.0) * dv * r + (a - 1.0) * (b * di * (1.0 - a) + s))
        / (2.0 * a * b * r);
    Some(newton_polish(State3::new(u, v, i), p))
}

// The closed forms lose a few digits to cancellation; a couple of Newton
// steps restore the root to working precision.
fn newton_polish(mut s: State3, p: &ModelParams) -> State3 {
    let mut res = rhs_ode(&s, p).max_abs();
    for _ in 0..3 {
        let f = rhs_ode(&s, p);
        let Some(dx) = solve3(&jacobian_ode(&s, p), [-f.u, -f.v, -f.i]) else {
            break;
        };
        let trial = s + State3::from_array(dx);
        let trial_res = rhs_ode(&trial, p).max_abs();
        if !(trial_res < res) {
            break;
        }
        s = trial;
        res = trial_res;
    }
    s
}

/// The equilibrium on which tumour, virus and infected cells coexist. It is
/// the `+√` root of the equilibrium quadratic, which is the positive root
/// whenever all rates are positive. Returned even when it is not biological
/// (below the branch point it carries negative `v` and `i`); check
/// [`Equilibrium::biological`].
pub fn coexistence_equilibrium(p: &ModelParams) -> Option<Equilibrium> {
    quadratic_root_state(p, 1.0).map(|s| Equilibrium::at(s, p))
}

/// The second root of the equilibrium quadratic; its `u` is negative for
/// positive rates.
pub fn other_root_equilibrium(p: &ModelParams) -> Option<Equilibrium> {
    quadratic_root_state(p, -1.0).map(|s| Equilibrium::at(s, p))
}

/// Spectrum of the `(0, v, 0)` equilibrium that exists when the virus never
/// decays: `(0, r_u - v beta, -delta_i)`.
pub fn immortal_virus_equilibrium_eigenvalues(
    v: f64,
    p: &ModelParams,
) -> Result<Eigentriple, ModelError> {
    if p.delta_v != 0.0 {
        return Err(ModelError::VirusNotImmortal(p.delta_v));
    }
    Ok(Eigentriple::from_real([0.0, p.r_u - v * p.beta, -p.delta_i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{eigen_residuals, frobenius, Stability};

    fn table(beta: f64) -> ModelParams {
        ModelParams::table1().with_beta(beta)
    }

    fn sorted_re(e: &Eigentriple) -> Vec<f64> {
        let mut v: Vec<f64> = e.values.iter().map(|z| z.re).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    // Magnitude of the largest individual term in the right-hand side.
    fn residual_scale(s: &State3, p: &ModelParams) -> f64 {
        (p.alpha * p.delta_i * s.i.abs())
            .max(p.delta_v * s.v.abs())
            .max(p.beta * (s.u + s.i).abs() * s.v.abs())
            .max(p.r_u)
    }

    #[test]
    fn trivial_states_are_fixed_points() {
        let p = table(0.002);
        assert_eq!(rhs_ode(&State3::ZERO, &p), State3::ZERO);
        assert_eq!(rhs_ode(&State3::CARRYING_CAPACITY, &p), State3::ZERO);
    }

    #[test]
    fn rhs_vanishes_at_coexistence_equilibrium() {
        let p = table(0.002);
        let eq = coexistence_equilibrium(&p).unwrap();
        let f = rhs_ode(&eq.state, &p);
        assert!(f.max_abs() < 1e-12 * residual_scale(&eq.state, &p), "{f:?}");
        assert!(eq.biological);
    }

    #[test]
    fn origin_spectrum() {
        let p = table(0.002);
        let e = eigen_at(&State3::ZERO, &p);
        let re = sorted_re(&e);
        assert!((re[0] + p.delta_v).abs() < 1e-12);
        assert!((re[1] + p.delta_i).abs() < 1e-12);
        assert!((re[2] - p.r_u).abs() < 1e-12);
        assert_eq!(e.stability, Stability::Unstable);
    }

    #[test]
    fn carrying_capacity_spectrum_matches_closed_form() {
        let p = table(0.002);
        let m = jacobian_ode(&State3::CARRYING_CAPACITY, &p);
        let numeric = eigensolve_3x3(&m);
        let closed = carrying_capacity_eigenvalues(&p);
        for (a, b) in numeric.values.iter().zip(closed.values.iter()) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
        assert!(eigen_residuals(&m, &numeric)
            .iter()
            .all(|r| *r < 1e-9 * frobenius(&m)));
    }

    #[test]
    fn threshold_values() {
        let p = ModelParams::table1();
        assert!((beta_star(&p).unwrap() - 4.0 / 3499.0).abs() < 1e-15);
        assert!((beta_star(&p).unwrap() - 0.0011432).abs() < 1e-7);
        let p2 = ModelParams { alpha: 2.0, ..p };
        assert_eq!(beta_star(&p2).unwrap(), 4.0);
        let p1 = ModelParams { alpha: 1.0, ..p };
        assert_eq!(beta_star(&p1), Err(ModelError::BurstSizeTooSmall(1.0)));
        // Inverting the threshold for delta_v at beta = 0.002.
        assert!((0.002 * (p.alpha - 1.0) - 6.998).abs() < 1e-12);
    }

    #[test]
    fn carrying_capacity_stability_flips_at_threshold() {
        let base = ModelParams::table1();
        let bs = beta_star(&base).unwrap();
        for factor in [0.5, 0.9, 0.99] {
            let e = eigen_at(&State3::CARRYING_CAPACITY, &base.with_beta(bs * factor));
            assert!(e.max_real() < 0.0);
        }
        for factor in [1.01, 1.1, 2.0] {
            let e = eigen_at(&State3::CARRYING_CAPACITY, &base.with_beta(bs * factor));
            assert!(e.max_real() > 0.0);
        }
        let at = eigen_at(&State3::CARRYING_CAPACITY, &base.with_beta(bs));
        assert!(at.max_real().abs() < 1e-12, "{}", at.max_real());
    }

    #[test]
    fn coexistence_at_moderate_infectivity() {
        let eq = coexistence_equilibrium(&table(0.002)).unwrap();
        assert!((eq.state.u - 0.57161).abs() < 5e-5, "{}", eq.state.u);
        assert!(eq.eigen.is_stable());
    }

    #[test]
    fn coexistence_below_branch_point_is_not_biological() {
        let eq = coexistence_equilibrium(&table(0.001)).unwrap();
        assert!(eq.state.v < 0.0 || eq.state.i < 0.0);
        assert!(!eq.biological);
    }

    /// Independent route: bisection on the quadratic over [0, 1], then the
    /// equilibrium relations v = r δ_I (1-u) / (β (r u + δ_I)), i = β u v / δ_I.
    #[test]
    fn coexistence_matches_bisection_oracle() {
        let p = table(0.005);
        let (a, b, c) = equilibrium_quadratic(&p);
        let q = |x: f64| (a * x + b) * x + c;
        let (mut lo, mut hi) = (0.0, 1.0);
        assert!(q(lo) < 0.0 && q(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        let u = 0.5 * (lo + hi);
        let v = p.r_u * p.delta_i * (1.0 - u) / (p.beta * (p.r_u * u + p.delta_i));
        let i = p.beta * u * v / p.delta_i;
        let eq = coexistence_equilibrium(&p).unwrap();
        assert!((eq.state.u - u).abs() < 1e-10);
        assert!((eq.state.v - v).abs() < 1e-8 * v);
        assert!((eq.state.i - i).abs() < 1e-10);
        assert!(rhs_ode(&eq.state, &p).max_abs() < 1e-12 * residual_scale(&eq.state, &p));
    }

    #[test]
    fn other_root_is_negative_and_satisfies_vieta() {
        let p = table(0.002);
        let other = other_root_equilibrium(&p).unwrap();
        assert!(other.state.u < 0.0);
        assert!(!other.biological);
        let co = coexistence_equilibrium(&p).unwrap();
        let (a, _, c) = equilibrium_quadratic(&p);
        assert!((co.state.u * other.state.u - c / a).abs() < 1e-12);
        let scale = other.state.max_abs();
        assert!(rhs_ode(&other.state, &p).max_abs() < 1e-10 * scale);
    }

    #[test]
    fn coexistence_u_decreases_with_beta() {
        let base = ModelParams::table1();
        let lo = beta_star(&base).unwrap();
        let hi = 10.0 * 0.00871;
        let mut prev = f64::INFINITY;
        for k in 0..=200 {
            let beta = lo + (hi - lo) * k as f64 / 200.0;
            let u = coexistence_equilibrium(&base.with_beta(beta)).unwrap().state.u;
            assert!(u < prev, "not decreasing at beta {beta}");
            prev = u;
        }
    }

    #[test]
    fn immortal_virus_spectrum() {
        let p = ModelParams {
            delta_v: 0.0,
            ..table(0.002)
        };
        let e = immortal_virus_equilibrium_eigenvalues(0.0, &p).unwrap();
        assert_eq!(sorted_re(&e), vec![-1.0, 0.0, 0.3]);
        let e = immortal_virus_equilibrium_eigenvalues(p.r_u / p.beta, &p).unwrap();
        assert!(e.values.iter().filter(|z| z.re == 0.0).count() == 2);
        let e = immortal_virus_equilibrium_eigenvalues(2.0 * p.r_u / p.beta, &p).unwrap();
        let re = sorted_re(&e);
        assert_eq!(re[0], -1.0);
        assert!((re[1] + 0.3).abs() < 1e-15);
        assert_eq!(re[2], 0.0);
        assert!(immortal_virus_equilibrium_eigenvalues(1.0, &table(0.002)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn finite_difference(s: &State3, p: &ModelParams) -> Matrix3 {
            let mut m = [[0.0; 3]; 3];
            let base = s.to_array();
            for j in 0..3 {
                let h = 1e-6 * base[j].abs().max(1.0);
                let mut plus = base;
                let mut minus = base;
                plus[j] += h;
                minus[j] -= h;
                let fp = rhs_ode(&State3::from_array(plus), p).to_array();
                let fm = rhs_ode(&State3::from_array(minus), p).to_array();
                for i in 0..3 {
                    m[i][j] = (fp[i] - fm[i]) / (2.0 * h);
                }
            }
            m
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn jacobian_matches_finite_differences(
                u in 0.0f64..1.0, v in 0.0f64..200.0, i in 0.0f64..1.0, beta in 1e-4f64..0.05
            ) {
                let p = ModelParams::table1().with_beta(beta);
                let s = State3::new(u, v, i);
                let exact = jacobian_ode(&s, &p);
                let fd = finite_difference(&s, &p);
                let scale = frobenius(&exact).max(1.0);
                for r in 0..3 {
                    for c in 0..3 {
                        prop_assert!((exact[r][c] - fd[r][c]).abs() <= 1e-5 * scale,
                            "entry ({}, {}): {} vs {}", r, c, exact[r][c], fd[r][c]);
                    }
                }
            }

            #[test]
            fn trivial_states_fixed_for_positive_rates(
                r in 0.01f64..2.0, beta in 1e-5f64..1.0, alpha in 1.1f64..1e4,
                dv in 0.01f64..10.0, di in 0.01f64..10.0
            ) {
                let p = ModelParams { r_u: r, beta, alpha, delta_v: dv, delta_i: di, ..ModelParams::table1() };
                prop_assert_eq!(rhs_ode(&State3::ZERO, &p), State3::ZERO);
                prop_assert_eq!(rhs_ode(&State3::CARRYING_CAPACITY, &p), State3::ZERO);
                prop_assert!(eigen_at(&State3::ZERO, &p).max_real() > 0.0);
            }

            #[test]
            fn param_derivative_matches_finite_differences(
                u in 0.0f64..1.0, v in 0.0f64..100.0, i in 0.0f64..1.0
            ) {
                let p = ModelParams::table1().with_beta(0.003);
                let s = State3::new(u, v, i);
                for param in ContinuationParam::ALL {
                    let x = param.get(&p);
                    let h = 1e-2 * x.abs();
                    let fp = rhs_ode(&s, &p.with(param, x + h));
                    let fm = rhs_ode(&s, &p.with(param, x - h));
                    let fd = (fp - fm) * (0.5 / h);
                    let exact = param_derivative(&s, &p, param);
                    prop_assert!((fd - exact).max_abs() <= 1e-5 * exact.max_abs().max(1.0));
                }
            }
        }
    }
}
