//! Scenario files: a TOML document with optional global parameter overrides
//! and a list of `[[scenario]]` tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use oncolab_core::bifurcation::StartEnd;
use oncolab_core::calibration::{CalibrationInputs, Rounding};
use oncolab_core::pde::DEFAULT_DR;
use oncolab_core::{ContinuationParam, ModelParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    PdeSnapshot,
    PdeSweep,
    OdeRun,
    Branch,
    LimitCycleBranch,
    HopfCurve,
    CalibrationReport,
    PdeVsOde,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PdeSnapshot => "pde_snapshot",
            Self::PdeSweep => "pde_sweep",
            Self::OdeRun => "ode_run",
            Self::Branch => "branch",
            Self::LimitCycleBranch => "limit_cycle_branch",
            Self::HopfCurve => "hopf_curve",
            Self::CalibrationReport => "calibration_report",
            Self::PdeVsOde => "pde_vs_ode",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default)]
    scenario: Vec<RawScenario>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    kind: Kind,
    #[serde(default)]
    description: String,
    out: Option<String>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default)]
    settings: toml::Table,
}

/// One parsed scenario. Settings are kept as a table and decoded per kind, so
/// the manifest can echo them verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub kind: Kind,
    pub description: String,
    /// Directory below the output root; defaults to the scenario name.
    pub out: String,
    pub params: BTreeMap<String, f64>,
    pub settings: toml::Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub path: PathBuf,
    /// Overrides applied to every scenario before its own.
    pub params: BTreeMap<String, f64>,
    pub scenarios: Vec<Scenario>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Parses and checks names, parameter keys and per-kind settings.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        check_keys(&raw.params, "params")?;
        let mut seen = HashSet::new();
        let mut scenarios = Vec::with_capacity(raw.scenario.len());
        for s in raw.scenario {
            if s.name.is_empty() || s.name.contains(['/', '\\']) || s.name.starts_with('.') {
                return Err(ConfigError::InvalidName(s.name));
            }
            if !seen.insert(s.name.clone()) {
                return Err(ConfigError::DuplicateScenario(s.name));
            }
            check_keys(&s.params, &s.name)?;
            let scenario = Scenario {
                out: s.out.unwrap_or_else(|| s.name.clone()),
                name: s.name,
                kind: s.kind,
                description: s.description,
                params: s.params,
                settings: s.settings,
            };
            scenario.job()?;
            scenarios.push(scenario);
        }
        Ok(Self {
            path: path.to_path_buf(),
            params: raw.params,
            scenarios,
        })
    }

    pub fn scenario(&self, name: &str) -> Result<&Scenario, ConfigError> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| ConfigError::UnknownScenario(name.to_string()))
    }

    /// Table values with the global and then the scenario overrides applied.
    pub fn resolve(&self, scenario: &Scenario) -> Result<ModelParams, ConfigError> {
        let mut p = ModelParams::table1();
        for (key, &value) in self.params.iter().chain(&scenario.params) {
            p.set(key, value).map_err(|e| ConfigError::Param {
                scenario: scenario.name.clone(),
                message: e.to_string(),
            })?;
        }
        Ok(p)
    }
}

fn check_keys(params: &BTreeMap<String, f64>, owner: &str) -> Result<(), ConfigError> {
    match params.keys().find(|k| !ModelParams::KEYS.contains(&k.as_str())) {
        Some(key) => Err(ConfigError::Param {
            scenario: owner.to_string(),
            message: format!("unknown parameter `{key}`"),
        }),
        None => Ok(()),
    }
}

fn default_dr() -> f64 {
    DEFAULT_DR
}
fn default_pde_stride() -> f64 {
    0.5
}
fn default_pde_rel_tol() -> f64 {
    1e-6
}
fn default_pde_abs_tol() -> f64 {
    1e-9
}

/// Spatial discretisation and integrator tolerances shared by the PDE kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeNumerics {
    #[serde(default = "default_dr")]
    pub dr: f64,
    #[serde(default = "default_pde_stride")]
    pub stride: f64,
    #[serde(default = "default_pde_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_pde_abs_tol")]
    pub abs_tol: f64,
}

impl Default for PdeNumerics {
    fn default() -> Self {
        Self {
            dr: default_dr(),
            stride: default_pde_stride(),
            rel_tol: default_pde_rel_tol(),
            abs_tol: default_pde_abs_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSnapshotSettings {
    pub t_end: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub probes: Vec<f64>,
    /// Also write the caliper volume of the tumour front over time.
    #[serde(default)]
    pub volume: bool,
    #[serde(default, flatten)]
    pub numerics: PdeNumerics,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSweepSettings {
    /// Any model parameter key.
    pub param: String,
    pub values: Vec<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    /// Days over which the virus front speed is measured; defaults to the
    /// whole run.
    pub speed_window: Option<[f64; 2]>,
    #[serde(default, flatten)]
    pub numerics: PdeNumerics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// Uninfected density at the probe radius.
    #[default]
    Probe,
    /// Integrated uninfected population.
    Total,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeVsOdeSettings {
    pub param: String,
    pub values: Vec<f64>,
    pub t_end: f64,
    /// Radius of the point probe, mm.
    pub probe: f64,
    /// Length of each window compared by the oscillation monitor, days.
    pub window: f64,
    #[serde(default)]
    pub monitor: Monitor,
    #[serde(default, flatten)]
    pub numerics: PdeNumerics,
}

fn default_ode_stride() -> f64 {
    0.1
}
fn default_ode_rel_tol() -> f64 {
    1e-9
}
fn default_ode_abs_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeRunSettings {
    pub t_end: f64,
    /// `[u, v, i]`; defaults to `[u0, v0, 0]`.
    pub initial: Option<[f64; 3]>,
    #[serde(default = "default_ode_stride")]
    pub stride: f64,
    #[serde(default = "default_ode_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_ode_abs_tol")]
    pub abs_tol: f64,
    /// Peaks of `u` before this day are not reported.
    #[serde(default)]
    pub discard: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStart {
    Coexistence,
    Trivial,
}

impl BranchStart {
    pub fn name(self) -> &'static str {
        match self {
            Self::Coexistence => "coexistence",
            Self::Trivial => "trivial",
        }
    }
}

fn default_starts() -> Vec<BranchStart> {
    vec![BranchStart::Coexistence]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSettings {
    pub param: ContinuationParam,
    pub range: [f64; 2],
    #[serde(default = "default_starts")]
    pub branches: Vec<BranchStart>,
    /// End of the range the coexistence branch starts from.
    #[serde(default)]
    pub from: StartEnd,
    #[serde(default)]
    pub log: bool,
    pub h_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitCycleSettings {
    pub param: ContinuationParam,
    pub values: Vec<f64>,
    pub window: Option<f64>,
    pub max_windows: Option<usize>,
    pub stride: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfCurveSettings {
    pub betas: Vec<f64>,
    pub delta_i_from: Option<f64>,
    pub delta_i_to: Option<f64>,
    pub delta_i_lines: Option<usize>,
    pub delta_v_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    #[serde(default)]
    pub inputs: CalibrationInputs,
    #[serde(default)]
    pub rounding: Rounding,
}

/// Decoded settings of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    PdeSnapshot(PdeSnapshotSettings),
    PdeSweep(PdeSweepSettings),
    OdeRun(OdeRunSettings),
    Branch(BranchSettings),
    LimitCycleBranch(LimitCycleSettings),
    HopfCurve(HopfCurveSettings),
    CalibrationReport(CalibrationSettings),
    PdeVsOde(PdeVsOdeSettings),
}

impl Scenario {
    pub fn job(&self) -> Result<Job, ConfigError> {
        Ok(match self.kind {
            Kind::PdeSnapshot => Job::PdeSnapshot(self.decode()?),
            Kind::PdeSweep => {
                let s: PdeSweepSettings = self.decode()?;
                self.check_param(&s.param)?;
                self.check_values(&s.values)?;
                Job::PdeSweep(s)
            }
            Kind::OdeRun => Job::OdeRun(self.decode()?),
            Kind::Branch => Job::Branch(self.decode()?),
            Kind::LimitCycleBranch => {
                let s: LimitCycleSettings = self.decode()?;
                self.check_values(&s.values)?;
                Job::LimitCycleBranch(s)
            }
            Kind::HopfCurve => {
                let s: HopfCurveSettings = self.decode()?;
                self.check_values(&s.betas)?;
                Job::HopfCurve(s)
            }
            Kind::CalibrationReport => Job::CalibrationReport(self.decode()?),
            Kind::PdeVsOde => {
                let s: PdeVsOdeSettings = self.decode()?;
                self.check_param(&s.param)?;
                self.check_values(&s.values)?;
                Job::PdeVsOde(s)
            }
        })
    }

    fn decode<T: DeserializeOwned>(&self) -> Result<T, ConfigError> {
        self.settings
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| self.invalid(e.message().to_string()))
    }

    fn check_param(&self, key: &str) -> Result<(), ConfigError> {
        if ModelParams::KEYS.contains(&key) {
            Ok(())
        } else {
            Err(ConfigError::Param {
                scenario: self.name.clone(),
                message: format!("unknown parameter `{key}`"),
            })
        }
    }

    fn check_values(&self, values: &[f64]) -> Result<(), ConfigError> {
        if values.is_empty() {
            Err(self.invalid("the value list is empty".into()))
        } else {
            Ok(())
        }
    }

    fn invalid(&self, message: String) -> ConfigError {
        ConfigError::Settings {
            scenario: self.name.clone(),
            message,
        }
    }
}
