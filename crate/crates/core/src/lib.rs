//! Numerics for nonlinear age-structured populations with a nonlocal birth
//! law: spectral bounds of the linearized generators, the net reproduction
//! functional, strictly positive steady states obtained from a fixed-point
//! map on the zero level set of the spectral bound, and a characteristics
//! based time stepper used to cross-check them.

pub mod error;
pub mod model;
pub mod operator_lab;
pub mod ratedsl;
pub mod scenario;
pub mod sim;
pub mod spectral;
pub mod steady;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    AgeGrid, Density, ModelKind, Monotonicity, RateFamily, RateFunction, Scenario, SolverControls,
    VitalRates,
};
pub use spectral::SpectralReport;
pub use steady::SteadyStateResult;
