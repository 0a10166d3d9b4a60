//! Derivation of growth, diffusion and dosing constants from experimental
//! observations of untreated tumour growth and the injected dose.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use std::fmt::Write;

use crate::error::CalibrationError;
use crate::params::ModelParams;
use crate::pde::{tumour_volume, CALIPER_FACTOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationInputs {
    /// Tumour cell doubling time, days.
    pub doubling_time: f64,
    /// Tumour radius at the start and end of the observation span, mm.
    pub initial_radius: f64,
    pub final_radius: f64,
    /// Days between the two radius observations.
    pub observation_span: f64,
    /// Injected virions.
    pub dose: f64,
    /// Radius of the ball the dose is spread over, mm.
    pub injection_radius: f64,
    /// Tumour volume at injection, mm³.
    pub initial_volume: f64,
    /// Volume at which untreated hosts no longer survive, mm³.
    pub lethal_volume: f64,
}

impl Default for CalibrationInputs {
    fn default() -> Self {
        Self {
            doubling_time: 1.875,
            initial_radius: 2.6,
            final_radius: 6.0,
            observation_span: 40.0,
            dose: 1e10,
            injection_radius: 0.5,
            initial_volume: 70.0,
            lethal_volume: 2500.0,
        }
    }
}

impl CalibrationInputs {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let fields = [
            ("doubling_time", self.doubling_time),
            ("initial_radius", self.initial_radius),
            ("final_radius", self.final_radius),
            ("observation_span", self.observation_span),
            ("dose", self.dose),
            ("injection_radius", self.injection_radius),
            ("initial_volume", self.initial_volume),
            ("lethal_volume", self.lethal_volume),
        ];
        for (key, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(CalibrationError::NonPositive { key, value });
            }
        }
        if self.final_radius <= self.initial_radius {
            return Err(CalibrationError::Shrinking {
                initial_radius: self.initial_radius,
                final_radius: self.final_radius,
            });
        }
        Ok(())
    }

    /// Mean front speed over the observation span, mm/day.
    pub fn front_speed(&self) -> f64 {
        (self.final_radius - self.initial_radius) / self.observation_span
    }
}

/// `ln 2 / doubling_time`, 1/day.
pub fn growth_rate_from_doubling(doubling_time: f64) -> f64 {
    LN_2 / doubling_time
}

/// Diffusivity whose Fisher front `c = 2 sqrt(r D)` matches `speed`.
pub fn diffusivity_from_speed(speed: f64, growth_rate: f64) -> f64 {
    (0.5 * speed).powi(2) / growth_rate
}

/// [`diffusivity_from_speed`] with the speed observed in `inputs`.
pub fn diffusivity_from_front(inputs: &CalibrationInputs, growth_rate: f64) -> f64 {
    diffusivity_from_speed(inputs.front_speed(), growth_rate)
}

/// Fisher front speed `2 sqrt(r D)`, mm/day.
pub fn fisher_speed(growth_rate: f64, diffusivity: f64) -> f64 {
    2.0 * (growth_rate * diffusivity).sqrt()
}

/// Virions per mm³ when `dose` fills a ball of the given radius.
pub fn injection_density(dose: f64, radius: f64) -> f64 {
    dose / (4.0 / 3.0 * PI * radius.powi(3))
}

/// Inverse of [`tumour_volume`].
pub fn radius_from_volume(volume: f64) -> f64 {
    (volume / (8.0 * CALIPER_FACTOR)).cbrt()
}

/// Which values a calibrated parameter set carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// The published rounded constants (growth rate 0.3/day and the
    /// diffusivity derived from it).
    #[default]
    Table,
    /// Unrounded derivations throughout.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub inputs: CalibrationInputs,
    /// `ln 2 / doubling_time`, 1/day.
    pub growth_rate: f64,
    pub front_speed: f64,
    /// Diffusivity from the front speed and the rounded growth rate.
    pub diffusivity: f64,
    /// Diffusivity from the front speed and the unrounded growth rate.
    pub diffusivity_exact: f64,
    /// Virions per mm³.
    pub injection_density: f64,
    /// Radius of a tumour of the initial volume, mm.
    pub initial_radius: f64,
    /// Radius of a tumour of the lethal volume, mm.
    pub lethal_radius: f64,
    /// Volume of a tumour of the final observed radius, mm³.
    pub final_volume: f64,
}

/// Growth rate used by the published parameter set.
pub const TABLE_GROWTH_RATE: f64 = 0.3;

pub fn calibrate(inputs: &CalibrationInputs) -> Result<Calibration, CalibrationError> {
    inputs.validate()?;
    let growth_rate = growth_rate_from_doubling(inputs.doubling_time);
    Ok(Calibration {
        inputs: *inputs,
        growth_rate,
        front_speed: inputs.front_speed(),
        diffusivity: diffusivity_from_front(inputs, TABLE_GROWTH_RATE),
        diffusivity_exact: diffusivity_from_front(inputs, growth_rate),
        injection_density: injection_density(inputs.dose, inputs.injection_radius),
        initial_radius: radius_from_volume(inputs.initial_volume),
        lethal_radius: radius_from_volume(inputs.lethal_volume),
        final_volume: tumour_volume(inputs.final_radius),
    })
}

impl Calibration {
    /// `base` with the calibrated growth, diffusion, dose and geometry
    /// entries. [`Rounding::Table`] returns `base` as is, since the published
    /// set already holds the rounded values.
    pub fn params(&self, base: &ModelParams, rounding: Rounding) -> ModelParams {
        match rounding {
            Rounding::Table => *base,
            Rounding::Exact => ModelParams {
                r_u: self.growth_rate,
                d_u: self.diffusivity_exact,
                v0: self.injection_density / base.k,
                r_t: self.initial_radius,
                r_v: self.inputs.injection_radius,
                ..*base
            },
        }
    }

    /// Plain-text table of each derived quantity next to its value in
    /// `table`.
    pub fn report(&self, table: &ModelParams) -> String {
        let rows = [
            ("growth rate r_u (1/day)", self.growth_rate, Some(table.r_u)),
            ("front speed (mm/day)", self.front_speed, Some(fisher_speed(table.r_u, table.d_u))),
            ("diffusivity d_u, r_u = 0.3 (mm^2/day)", self.diffusivity, Some(table.d_u)),
            ("diffusivity d_u, exact r_u (mm^2/day)", self.diffusivity_exact, Some(table.d_u)),
            ("injection density (virions/mm^3)", self.injection_density, Some(table.v0 * table.k)),
            ("initial radius r_t (mm)", self.initial_radius, Some(table.r_t)),
            ("lethal radius (mm)", self.lethal_radius, None),
            ("domain radius L (mm)", table.domain_l, Some(table.domain_l)),
            ("final volume (mm^3)", self.final_volume, None),
        ];
        let mut out = String::new();
        writeln!(out, "{:<40} {:>16} {:>16}", "quantity", "derived", "table").unwrap();
        for (name, derived, used) in rows {
            let used = used.map_or_else(|| "-".to_string(), |x| format!("{x:.8e}"));
            writeln!(out, "{name:<40} {derived:>16.8e} {used:>16}").unwrap();
        }
        out
    }
}
