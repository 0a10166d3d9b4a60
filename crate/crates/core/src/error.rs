use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("unknown parameter `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("burst size alpha = {0} must exceed 1 for the threshold to exist")]
    BurstSizeTooSmall(f64),
    #[error("the (0, V, 0) equilibrium requires delta_v = 0, got {0}")]
    VirusNotImmortal(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("invalid integration config: {0}")]
    InvalidConfig(String),
    #[error("step size underflow (h = {h:e}) at t = {t}; solution may blow up")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("exceeded {max_steps} steps at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("PDE integration failed: {source}; last finite field at t = {last_good_time}")]
    Integration {
        #[source]
        source: IntegrationError,
        last_good_time: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservableError {
    #[error("need at least {needed} samples in the fit window, got {got}")]
    DegenerateWindow { needed: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BifurcationError {
    #[error("Newton failed to converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("singular Jacobian at {param} (fold or branch point); switch parametrization")]
    SingularJacobian { param: f64 },
    #[error("branch left the state bounds at parameter {param}")]
    OutOfBounds { param: f64 },
    #[error("continuation step underflow at parameter {param}")]
    StepUnderflow { param: f64 },
    #[error("invalid bracket [{lo}, {hi}]: test function does not change sign")]
    InvalidBracket { lo: f64, hi: f64 },
    #[error("invalid continuation setup: {0}")]
    InvalidSetup(String),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("calibration input `{key}` = {value} must be positive and finite")]
    NonPositive { key: &'static str, value: f64 },
    #[error("final radius {final_radius} must exceed initial radius {initial_radius}")]
    Shrinking { initial_radius: f64, final_radius: f64 },
}
