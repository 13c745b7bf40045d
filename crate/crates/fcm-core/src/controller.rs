//! Cascaded flight controller: position → velocity → attitude → body rates,
//! with an incremental inner rate loop and the rotor mixer.

use nalgebra::{UnitQuaternion, Vector3};

use crate::dynamics::{control_moments, ControlMoments, QuadParams, SpinSign};
use crate::error::CoreError;
use crate::signal::Biquad;

/// Loop gains and limits.
#[derive(Debug, Clone)]
pub struct ControllerGains {
    pub pos_p: f64,
    pub vel_p: f64,
    pub att_p: Vector3<f64>,
    pub rate_p: Vector3<f64>,
    pub vel_max: f64,
    pub acc_max: f64,
    pub rate_max: Vector3<f64>,
    pub indi_filter_hz: f64,
}

/// What a reference segment demands.
#[derive(Debug, Clone, Copy)]
pub enum SegmentMode {
    Position { target: Vector3<f64>, yaw: f64 },
    /// Spin at the given yaw rate while holding the previous position target.
    YawRate { rate: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct ReferenceSegment {
    pub duration_s: f64,
    pub mode: SegmentMode,
}

/// An ordered list of segments; yaw-rate segments hold the position target
/// of the segment before them.
#[derive(Debug, Clone)]
pub struct ReferenceProgram {
    segments: Vec<ReferenceSegment>,
    holds: Vec<Vector3<f64>>,
}

/// The reference at one instant.
#[derive(Debug, Clone, Copy)]
pub struct RefPoint {
    pub hold_position: Vector3<f64>,
    pub yaw: f64,
    /// Demanded yaw rate, if in yaw-rate mode.
    pub yaw_rate: Option<f64>,
}

impl ReferenceProgram {
    pub fn new(segments: Vec<ReferenceSegment>) -> Result<Self, CoreError> {
        if segments.is_empty() {
            return Err(CoreError::Config("reference program has no segments".into()));
        }
        let mut holds = Vec::with_capacity(segments.len());
        let mut last = Vector3::zeros();
        for seg in &segments {
            if !(seg.duration_s > 0.0) {
                return Err(CoreError::Config("segment duration must be > 0".into()));
            }
            if let SegmentMode::Position { target, .. } = seg.mode {
                last = target;
            }
            holds.push(last);
        }
        Ok(Self { segments, holds })
    }

    /// Total programmed duration [s].
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    /// First position target, used as the simulator's initial condition.
    pub fn initial_position(&self) -> Vector3<f64> {
        self.holds[0]
    }

    pub fn sample(&self, t: f64) -> RefPoint {
        let mut acc = 0.0;
        let mut idx = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            acc += seg.duration_s;
            if t < acc {
                idx = i;
                break;
            }
        }
        let seg = &self.segments[idx];
        match seg.mode {
            SegmentMode::Position { target, yaw } => {
                RefPoint { hold_position: target, yaw, yaw_rate: None }
            }
            SegmentMode::YawRate { rate } => {
                RefPoint { hold_position: self.holds[idx], yaw: 0.0, yaw_rate: Some(rate) }
            }
        }
    }

    /// First instant a yaw-rate segment is active, if any.
    pub fn first_yaw_rate_time(&self) -> Option<f64> {
        let mut acc = 0.0;
        for seg in &self.segments {
            if matches!(seg.mode, SegmentMode::YawRate { .. }) {
                return Some(acc);
            }
            acc += seg.duration_s;
        }
        None
    }
}

/// What the controller sees: noisy velocity and rates, exact position and
/// attitude.
#[derive(Debug, Clone, Copy)]
pub struct Measurement {
    pub position: Vector3<f64>,
    pub velocity_body: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub rates: Vector3<f64>,
}

/// Output of the outer cascade.
#[derive(Debug, Clone, Copy)]
pub struct RateSetpoint {
    pub rates: Vector3<f64>,
    /// Collective thrust demand [N]
    pub thrust: f64,
}

/// Invert the control-moment construction: rotor speeds from collective sum
/// and control moments.
pub fn mix_commands(total_speed: f64, u: &ControlMoments, spin: SpinSign) -> [f64; 4] {
    let s = total_speed;
    let ur = spin.sign() * u.yaw;
    [
        (s + u.roll + u.pitch + ur) / 4.0,
        (s - u.roll + u.pitch - ur) / 4.0,
        (s - u.roll - u.pitch + ur) / 4.0,
        (s + u.roll - u.pitch - ur) / 4.0,
    ]
}

fn clamp_norm(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Cascaded controller with incremental inner rate loop.
pub struct CascadedController {
    gains: ControllerGains,
    mass: f64,
    thrust_coeff: f64,
    spin: SpinSign,
    omega_min: f64,
    omega_max: f64,
    /// Rate-loop control effectiveness diagonal (∂Ω̇/∂u)
    effectiveness: Vector3<f64>,
    dt: f64,
    rate_filters: [Biquad; 3],
    prev_filtered: Option<Vector3<f64>>,
    prev_commands: [f64; 4],
    pub degraded: bool,
}

impl CascadedController {
    pub fn new(
        gains: ControllerGains,
        params: &QuadParams,
        effectiveness: Vector3<f64>,
        spin: SpinSign,
        omega_min: f64,
        omega_max: f64,
        dt: f64,
    ) -> Self {
        let hover = (params.mass * params.gravity.norm() / (4.0 * params.thrust_coeff)).sqrt();
        let bq = Biquad::lowpass(gains.indi_filter_hz, 1.0 / dt);
        Self {
            gains,
            mass: params.mass,
            thrust_coeff: params.thrust_coeff,
            spin,
            omega_min,
            omega_max,
            effectiveness,
            dt,
            rate_filters: [bq; 3],
            prev_filtered: None,
            prev_commands: [hover; 4],
            degraded: false,
        }
    }

    /// Map the reference to desired body rates and collective thrust.
    pub fn outer_loop(&self, meas: &Measurement, reference: &RefPoint) -> RateSetpoint {
        let g = &self.gains;
        let vel_inertial = meas.attitude.transform_vector(&meas.velocity_body);

        let v_des = clamp_norm((reference.hold_position - meas.position) * g.pos_p, g.vel_max);
        let a_des = clamp_norm((v_des - vel_inertial) * g.vel_p, g.acc_max);

        // specific force the thrust must supply: f = g_vec − a_des
        let g_vec = Vector3::new(0.0, 0.0, 9.81);
        let mut f = g_vec - a_des;
        if f.norm() < 1e-6 {
            f = Vector3::new(0.0, 0.0, 1e-6);
        }
        let thrust = self.mass * f.norm();

        // desired attitude: body z along f, yaw from the reference (or the
        // current yaw while a yaw-rate demand is active)
        let b3 = f.normalize();
        let yaw_des = match reference.yaw_rate {
            Some(_) => meas.attitude.euler_angles().2,
            None => reference.yaw,
        };
        let xc = Vector3::new(yaw_des.cos(), yaw_des.sin(), 0.0);
        let mut b2 = b3.cross(&xc);
        if b2.norm() < 1e-6 {
            b2 = Vector3::new(0.0, 1.0, 0.0);
        }
        let b2 = b2.normalize();
        let b1 = b2.cross(&b3);
        let r_des = nalgebra::Rotation3::from_basis_unchecked(&[b1, b2, b3]);
        let q_des = UnitQuaternion::from_rotation_matrix(&r_des);

        // attitude error in the body frame
        let q_err = meas.attitude.inverse() * q_des;
        let err = match q_err.axis_angle() {
            Some((axis, angle)) => axis.into_inner() * angle,
            None => Vector3::zeros(),
        };
        let mut rates = err.component_mul(&g.att_p);
        for i in 0..3 {
            rates[i] = rates[i].clamp(-g.rate_max[i], g.rate_max[i]);
        }
        if let Some(r_ref) = reference.yaw_rate {
            rates.z = r_ref;
        }
        RateSetpoint { rates, thrust }
    }

    /// Incremental rate loop: Δu = B⁻¹(ν − Ω̇̂) on top of the control moments
    /// reconstructed from the current rotor speeds.
    pub fn rate_loop_incremental(
        &mut self,
        measured_rates: Vector3<f64>,
        setpoint: &RateSetpoint,
        current_speeds: &[f64; 4],
    ) -> [f64; 4] {
        // filtered rates and their backward difference estimate Ω̇̂
        let mut filtered = Vector3::zeros();
        for i in 0..3 {
            filtered[i] = self.rate_filters[i].step(measured_rates[i]);
        }
        let rate_dot = match self.prev_filtered {
            Some(prev) => (filtered - prev) / self.dt,
            None => Vector3::zeros(),
        };
        self.prev_filtered = Some(filtered);

        let nu = (setpoint.rates - filtered).component_mul(&self.gains.rate_p);

        if self.effectiveness.iter().any(|b| b.abs() < 1e-9) {
            self.degraded = true;
            return self.prev_commands;
        }
        self.degraded = false;
        let delta = (nu - rate_dot).component_div(&self.effectiveness);

        let u_now = match control_moments(current_speeds, self.spin) {
            Ok(u) => u,
            Err(_) => {
                self.degraded = true;
                return self.prev_commands;
            }
        };
        let u_cmd = ControlMoments {
            roll: u_now.roll + delta.x,
            pitch: u_now.pitch + delta.y,
            yaw: u_now.yaw + delta.z,
        };

        let per_rotor = (setpoint.thrust / (4.0 * self.thrust_coeff)).max(0.0).sqrt();
        let mut cmds = mix_commands(4.0 * per_rotor, &u_cmd, self.spin);
        for c in &mut cmds {
            *c = c.clamp(self.omega_min, self.omega_max);
        }
        self.prev_commands = cmds;
        cmds
    }

    /// Prime the rate filter so the first derivative estimate is sane.
    pub fn prime(&mut self, rates: Vector3<f64>) {
        for i in 0..3 {
            self.rate_filters[i].prime(rates[i]);
        }
        self.prev_filtered = Some(rates);
    }
}
