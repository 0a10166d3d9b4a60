//! Oncolytic virotherapy model: well-mixed and radially symmetric dynamics,
//! equilibrium continuation and parameter calibration.

pub mod bifurcation;
pub mod calibration;
pub mod eigen;
pub mod export;
pub mod error;
pub mod model;
pub mod ode;
pub mod params;
pub mod pde;

pub use error::{BifurcationError, CalibrationError, IntegrationError, ModelError, ObservableError, ParamError, PdeError};
pub use model::{Component, Equilibrium, State3};
pub use params::{ContinuationParam, ModelParams};
