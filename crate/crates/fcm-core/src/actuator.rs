//! First-order rotor dynamics with saturation, fault injection, and the
//! per-axis maximum achievable control-moment change.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{axis_signs, SpinSign};
use crate::error::CoreError;

/// Rotor actuation limits and response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActuatorParams {
    /// First-order time constant [s]
    pub time_constant: f64,
    /// Idle speed [rad/s]
    pub omega_min: f64,
    /// Saturation speed [rad/s]
    pub omega_max: f64,
    /// Spin direction of rotor 1
    pub spin: SpinSign,
}

impl ActuatorParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.time_constant > 0.0) {
            return Err(CoreError::Config("actuator time constant must be > 0".into()));
        }
        if !(0.0 <= self.omega_min && self.omega_min < self.omega_max) {
            return Err(CoreError::Config(format!(
                "need 0 <= omega_min < omega_max, got [{}, {}]",
                self.omega_min, self.omega_max
            )));
        }
        Ok(())
    }
}

/// Four rotors: current speeds, last commanded speeds, and fault caps
/// (fraction of omega_max still available; 1 = healthy).
#[derive(Debug, Clone, PartialEq)]
pub struct RotorSet {
    pub speeds: [f64; 4],
    pub commanded: [f64; 4],
    pub caps: [f64; 4],
}

impl RotorSet {
    pub fn healthy(speeds: [f64; 4]) -> Self {
        Self { speeds, commanded: speeds, caps: [1.0; 4] }
    }

    /// Effective [lower, upper] speed bounds for rotor `i` under its cap.
    /// A cap that pushes the upper bound below idle wins (a dead rotor sits
    /// at 0, not at omega_min).
    pub fn bounds(&self, i: usize, params: &ActuatorParams) -> (f64, f64) {
        let hi = self.caps[i] * params.omega_max;
        let lo = params.omega_min.min(hi);
        (lo, hi)
    }

    pub fn clamp_speeds(&mut self, params: &ActuatorParams) {
        for i in 0..4 {
            let (lo, hi) = self.bounds(i, params);
            self.speeds[i] = self.speeds[i].clamp(lo, hi);
        }
    }
}

/// A scheduled actuator fault: cap rotor (1-based) to `cap`·omega_max from
/// `time_s` onward.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FaultEvent {
    pub rotor: usize,
    pub cap: f64,
    pub time_s: f64,
}

impl FaultEvent {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(1..=4).contains(&self.rotor) {
            return Err(CoreError::Config(format!("fault rotor index {} out of 1..=4", self.rotor)));
        }
        if !(0.0..=1.0).contains(&self.cap) {
            return Err(CoreError::Config(format!("fault cap {} outside [0, 1]", self.cap)));
        }
        if self.time_s < 0.0 {
            return Err(CoreError::Config("fault activation time must be >= 0".into()));
        }
        Ok(())
    }
}

/// First-order response toward the clamped command:
/// ω' = ω + (dt/τ)(clamp(cmd) − ω), result clamped to the effective bounds.
pub fn actuator_step(
    rotors: &RotorSet,
    commands: &[f64; 4],
    params: &ActuatorParams,
    dt: f64,
) -> Result<RotorSet, CoreError> {
    if !(dt > 0.0 && dt < params.time_constant) {
        return Err(CoreError::InvalidInput(format!(
            "dt {} must be in (0, tau = {})",
            dt, params.time_constant
        )));
    }
    let mut out = rotors.clone();
    out.commanded = *commands;
    let gain = dt / params.time_constant;
    for i in 0..4 {
        let (lo, hi) = rotors.bounds(i, params);
        let cmd = commands[i].clamp(lo, hi);
        out.speeds[i] = (rotors.speeds[i] + gain * (cmd - rotors.speeds[i])).clamp(lo, hi);
    }
    Ok(out)
}

/// Maximum achievable control-moment change over one step, per axis, in the
/// given needed direction (±1 per axis).
///
/// For each rotor the saturation limit is the one whose side moves the axis
/// moment in the needed direction under the allocation signs; the headroom is
/// dt·Σ_i (1/τ)·|limit_i − ω_i|, floored at zero per rotor. The caps carried
/// by `rotors` are honored, so a detector that must not be told about faults
/// passes a healthy-capped set.
pub fn max_moment_change(
    rotors: &RotorSet,
    needed_direction: Vector3<f64>,
    params: &ActuatorParams,
    dt: f64,
) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for axis in 0..3 {
        let dir = if needed_direction[axis] < 0.0 { -1.0 } else { 1.0 };
        let signs = axis_signs(axis, params.spin);
        let mut total = 0.0;
        for i in 0..4 {
            let (lo, hi) = rotors.bounds(i, params);
            let toward_upper = signs[i] * dir > 0.0;
            let room = if toward_upper { hi - rotors.speeds[i] } else { rotors.speeds[i] - lo };
            total += room.max(0.0) / params.time_constant;
        }
        out[axis] = dt * total;
    }
    out
}

/// Maximum achievable control-moment change over one step for one specific
/// corrective direction.
///
/// The correction is allocated to the four rotors through the inverse of the
/// moment construction (no collective change); each rotor's saturation limit
/// is then the one on the side of its own needed speed change. The result is
/// the single achievable-change budget dt·Σ_i (1/τ)·|limit_i − ω_i| that the
/// whole correction competes for.
pub fn max_moment_change_for(
    rotors: &RotorSet,
    correction: Vector3<f64>,
    params: &ActuatorParams,
    dt: f64,
) -> f64 {
    let s = params.spin.sign();
    let needed = [
        correction.x + correction.y + s * correction.z,
        -correction.x + correction.y - s * correction.z,
        -correction.x - correction.y + s * correction.z,
        correction.x - correction.y - s * correction.z,
    ];
    let mut total = 0.0;
    for i in 0..4 {
        let (lo, hi) = rotors.bounds(i, params);
        let room = if needed[i] >= 0.0 { hi - rotors.speeds[i] } else { rotors.speeds[i] - lo };
        total += room.max(0.0) / params.time_constant;
    }
    dt * total
}

/// Apply every fault event with activation time ≤ t as a multiplicative cap.
/// Duplicate events for the same rotor resolve last-writer-wins.
pub fn inject_fault(schedule: &[FaultEvent], t: f64, rotors: &RotorSet, params: &ActuatorParams) -> RotorSet {
    let mut out = rotors.clone();
    let mut seen = [false; 4];
    for ev in schedule.iter().filter(|ev| ev.time_s <= t) {
        let idx = ev.rotor - 1;
        if seen[idx] {
            log::warn!(
                "duplicate fault for rotor {} at t={:.3}s; last writer wins",
                ev.rotor,
                ev.time_s
            );
        }
        seen[idx] = true;
        out.caps[idx] = ev.cap;
    }
    out.clamp_speeds(params);
    out
}
