//! Quadrotor simulation and actuator-feasibility loss-of-control detection.
//!
//! The crate provides a nonlinear body-frame quadrotor simulator with
//! first-order rotor dynamics and fault injection, a cascaded flight
//! controller with an incremental rate loop, signal conditioning, flight-log
//! ingestion, and the feasibly-controllable-metric detector that decides,
//! sample by sample, whether the corrective control a flight would need is
//! within what its actuators can still deliver.

pub mod actuator;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod fcm;
pub mod ingest;
pub mod signal;
pub mod sim;

pub use error::{CoreError, FcmError, IngestError, SignalError};
