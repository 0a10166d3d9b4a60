//! Model parameters in scaled form.
//!
//! Tumour populations are measured in units of the carrying capacity `k`, and
//! the internalisation rate is stored pre-multiplied by `k`. The virus density
//! is scaled by the same factor so that `beta * u * v` keeps the form of the
//! dimensional mass-action term. `k` itself is kept only to convert integrated
//! densities back into cell (or virion) counts.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::ParamError;

/// Rates, diffusivities and geometry of the tumour-virus model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Tumour growth rate, 1/day.
    pub r_u: f64,
    /// Carrying capacity, cells/mm³.
    pub k: f64,
    /// Scaled internalisation rate `k * beta`, 1/day per scaled virus density.
    pub beta: f64,
    /// Burst size, virions released per lysed cell.
    pub alpha: f64,
    /// Virus clearance rate, 1/day.
    pub delta_v: f64,
    /// Infected-cell lysis rate, 1/day.
    pub delta_i: f64,
    /// Tumour (and infected-cell) diffusivity, mm²/day.
    pub d_u: f64,
    /// Virus diffusivity, mm²/day.
    pub d_v: f64,
    /// Initial uninfected density inside the tumour, fraction of `k`.
    pub u0: f64,
    /// Initial virus density inside the injection ball, scaled by `k`.
    pub v0: f64,
    /// Initial tumour radius, mm.
    pub r_t: f64,
    /// Injection radius, mm.
    pub r_v: f64,
    /// Outer radius of the computational domain, mm.
    pub domain_l: f64,
}

impl ModelParams {
    /// Field names in declaration order; these are the keys accepted by
    /// [`ModelParams::set`] and emitted by [`ModelParams::entries`].
    pub const KEYS: [&'static str; 13] = [
        "r_u", "k", "beta", "alpha", "delta_v", "delta_i", "d_u", "d_v", "u0", "v0", "r_t", "r_v",
        "domain_l",
    ];

    /// Table values: k = 1e6 cells/mm³, beta = 1.5e-9 mm³/(virus day) scaled by k,
    /// v0 = 1.9e10 virions/mm³ scaled by k.
    pub fn table1() -> Self {
        Self {
            r_u: 0.3,
            k: 1.0e6,
            beta: 1.5e-3,
            alpha: 3500.0,
            delta_v: 4.0,
            delta_i: 1.0,
            d_u: 0.006,
            d_v: 0.24,
            u0: 1.0,
            v0: 1.9e4,
            r_t: 2.6,
            r_v: 0.5,
            domain_l: 10.0,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with(mut self, param: ContinuationParam, value: f64) -> Self {
        param.set(&mut self, value);
        self
    }

    pub fn get(&self, key: &str) -> Result<f64, ParamError> {
        Ok(match key {
            "r_u" => self.r_u,
            "k" => self.k,
            "beta" => self.beta,
            "alpha" => self.alpha,
            "delta_v" => self.delta_v,
            "delta_i" => self.delta_i,
            "d_u" => self.d_u,
            "d_v" => self.d_v,
            "u0" => self.u0,
            "v0" => self.v0,
            "r_t" => self.r_t,
            "r_v" => self.r_v,
            "domain_l" => self.domain_l,
            _ => return Err(ParamError::UnknownKey(key.to_string())),
        })
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ParamError> {
        let slot = match key {
            "r_u" => &mut self.r_u,
            "k" => &mut self.k,
            "beta" => &mut self.beta,
            "alpha" => &mut self.alpha,
            "delta_v" => &mut self.delta_v,
            "delta_i" => &mut self.delta_i,
            "d_u" => &mut self.d_u,
            "d_v" => &mut self.d_v,
            "u0" => &mut self.u0,
            "v0" => &mut self.v0,
            "r_t" => &mut self.r_t,
            "r_v" => &mut self.r_v,
            "domain_l" => &mut self.domain_l,
            _ => return Err(ParamError::UnknownKey(key.to_string())),
        };
        *slot = value;
        Ok(())
    }

    /// `(key, value)` pairs in declaration order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        Self::KEYS
            .iter()
            .map(|&key| (key, self.get(key).expect("KEYS lists every field")))
            .collect()
    }

    /// Checks the biological parameter constraints: every field finite, all
    /// strictly positive except `u0` and `v0`, `alpha > 1` and
    /// `r_v <= r_t <= domain_l`.
    ///
    /// The analysis routines do not call this; continuation deliberately
    /// walks parameters to their limits (for instance `delta_v -> 0`).
    pub fn validate(&self) -> Result<(), ParamError> {
        for (key, value) in self.entries() {
            if !value.is_finite() {
                return Err(ParamError::Invalid {
                    key,
                    reason: format!("{value} is not finite"),
                });
            }
            let nonnegative_ok = matches!(key, "u0" | "v0");
            if nonnegative_ok && value < 0.0 {
                return Err(ParamError::Invalid {
                    key,
                    reason: format!("{value} is negative"),
                });
            }
            if !nonnegative_ok && value <= 0.0 {
                return Err(ParamError::Invalid {
                    key,
                    reason: format!("{value} must be strictly positive"),
                });
            }
        }
        if self.alpha <= 1.0 {
            return Err(ParamError::Invalid {
                key: "alpha",
                reason: format!("burst size {} must exceed 1", self.alpha),
            });
        }
        if self.r_v > self.r_t {
            return Err(ParamError::Invalid {
                key: "r_v",
                reason: format!("injection radius {} exceeds tumour radius {}", self.r_v, self.r_t),
            });
        }
        if self.r_t > self.domain_l {
            return Err(ParamError::Invalid {
                key: "r_t",
                reason: format!("tumour radius {} exceeds domain {}", self.r_t, self.domain_l),
            });
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::table1()
    }
}

/// Parameters that the bifurcation engine can continue in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationParam {
    Beta,
    Alpha,
    DeltaV,
    DeltaI,
}

impl ContinuationParam {
    pub const ALL: [ContinuationParam; 4] = [Self::Beta, Self::Alpha, Self::DeltaV, Self::DeltaI];

    pub fn name(self) -> &'static str {
        match self {
            Self::Beta => "beta",
            Self::Alpha => "alpha",
            Self::DeltaV => "delta_v",
            Self::DeltaI => "delta_i",
        }
    }

    pub fn get(self, p: &ModelParams) -> f64 {
        match self {
            Self::Beta => p.beta,
            Self::Alpha => p.alpha,
            Self::DeltaV => p.delta_v,
            Self::DeltaI => p.delta_i,
        }
    }

    pub fn set(self, p: &mut ModelParams, value: f64) {
        match self {
            Self::Beta => p.beta = value,
            Self::Alpha => p.alpha = value,
            Self::DeltaV => p.delta_v = value,
            Self::DeltaI => p.delta_i = value,
        }
    }
}

impl fmt::Display for ContinuationParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContinuationParam {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ParamError::UnknownKey(s.to_string()))
    }
}
