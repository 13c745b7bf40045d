//! Experiment orchestration for the loss-of-control detector: the two
//! simulation experiments, the hyperparameter sweep, the attitude-based
//! baseline, and report emission.

pub mod baseline;
pub mod compare;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod report;
pub mod stats;
pub mod sweep;

pub use error::HarnessError;

use nalgebra::Vector3;

use fcm_core::config::ScenarioConfig;
use fcm_core::dynamics::{rate_jacobian, ControlMoments};

/// Nominal rate-loop control effectiveness diagonal of a scenario's vehicle:
/// the model Jacobian at hover, which is what the B-only detector uses.
pub fn nominal_b_diag(cfg: &ScenarioConfig) -> Result<Vector3<f64>, HarnessError> {
    let params = cfg.quad.params()?;
    let act = cfg.actuators.params()?;
    let aero = cfg.aero.models(act.spin)?.aero;
    let (_, b) = rate_jacobian(Vector3::zeros(), &ControlMoments::default(), &params, &aero);
    Ok(Vector3::new(b[(0, 0)], b[(1, 1)], b[(2, 2)]))
}
