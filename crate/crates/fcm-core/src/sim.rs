//! Closed-loop simulation: plant + actuators + cascaded controller + seeded
//! measurement noise, recording both the truth trajectory and the measured
//! channels a flight controller would log.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::actuator::{actuator_step, inject_fault, FaultEvent, RotorSet};
use crate::config::ScenarioConfig;
use crate::controller::{CascadedController, Measurement};
use crate::dynamics::{
    control_moments, integrate_step_ext, rate_jacobian, BodyState, ControlMoments,
};
use crate::error::CoreError;

/// Truth state at one step.
#[derive(Debug, Clone)]
pub struct TruthSample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity_body: Vector3<f64>,
    /// Roll, pitch, yaw [rad]
    pub euler: (f64, f64, f64),
    pub rates: Vector3<f64>,
    pub speeds: [f64; 4],
    pub commanded: [f64; 4],
}

/// Measured channels at one step (what gets logged).
#[derive(Debug, Clone, Copy)]
pub struct SimRecord {
    pub t: f64,
    /// Noisy rate measurements [rad/s]
    pub rates: Vector3<f64>,
    /// Actual rotor speeds [rad/s]
    pub speeds: [f64; 4],
    /// Truth attitude, roll/pitch/yaw [rad]
    pub euler: (f64, f64, f64),
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trajectory: Vec<TruthSample>,
    pub records: Vec<SimRecord>,
    pub rate_hz: f64,
    pub seed: u64,
    /// First instant roll or pitch magnitude exceeded 90°, if it did.
    pub crash_time_s: Option<f64>,
    /// First scheduled fault activation, if any.
    pub fault_time_s: Option<f64>,
}

/// An exponentially growing oscillatory roll/pitch disturbance torque.
#[derive(Debug, Clone, Copy)]
pub struct Disturbance {
    pub onset_s: f64,
    /// Exponential growth rate [1/s]
    pub growth: f64,
    /// Amplitude at onset [N·m]
    pub amplitude: f64,
    pub frequency_hz: f64,
}

impl Disturbance {
    fn moment(&self, t: f64) -> Vector3<f64> {
        if t < self.onset_s || self.amplitude <= 0.0 {
            return Vector3::zeros();
        }
        let a = self.amplitude * (self.growth * (t - self.onset_s)).exp();
        let phase = std::f64::consts::TAU * self.frequency_hz * (t - self.onset_s);
        Vector3::new(a * phase.sin(), a * phase.cos(), 0.0)
    }
}

/// How the run decides to stop.
#[derive(Debug, Clone, Copy)]
pub enum StopCondition {
    /// Run the full configured duration.
    FixedDuration,
    /// Stop `tail_s` after a 90° roll/pitch excursion (or at the duration cap).
    CrashThenTail { tail_s: f64 },
}

pub struct SimOptions {
    pub disturbance: Option<Disturbance>,
    pub stop: StopCondition,
    pub seed: u64,
}

/// Run a scenario closed-loop. Measurement noise is applied to velocity and
/// rate measurements only; the propagated truth state is never touched.
pub fn run_scenario(cfg: &ScenarioConfig, options: &SimOptions) -> Result<SimOutput, CoreError> {
    let params = cfg.quad.params()?;
    let act = cfg.actuators.params()?;
    let models = cfg.aero.models(act.spin)?;
    let program = cfg.reference_program()?;
    let faults: Vec<FaultEvent> = cfg.fault_schedule()?;
    let dt = cfg.dt();
    if !(dt > 0.0 && dt <= 0.02) {
        return Err(CoreError::Config(format!("sim rate {} Hz out of range", cfg.sim.rate_hz)));
    }

    // rate-loop effectiveness from the model Jacobian at hover
    let (_, b0) = rate_jacobian(Vector3::zeros(), &ControlMoments::default(), &params, &models.aero);
    let effectiveness = Vector3::new(b0[(0, 0)], b0[(1, 1)], b0[(2, 2)]);
    let mut ctrl = CascadedController::new(
        cfg.controller.gains(),
        &params,
        effectiveness,
        act.spin,
        act.omega_min,
        act.omega_max,
        dt,
    );

    let hover = (params.mass * params.gravity.norm() / (4.0 * params.thrust_coeff)).sqrt();
    let mut state = BodyState { position: program.initial_position(), ..Default::default() };
    let mut rotors = RotorSet::healthy([hover; 4]);

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let noise_v = Normal::new(0.0, cfg.noise.sigma_v)
        .map_err(|e| CoreError::Config(format!("bad sigma_v: {e}")))?;
    let noise_w = Normal::new(0.0, cfg.noise.sigma_omega)
        .map_err(|e| CoreError::Config(format!("bad sigma_omega: {e}")))?;

    ctrl.prime(Vector3::zeros());

    let steps = (cfg.sim.duration_s / dt).round() as usize;
    let mut trajectory = Vec::with_capacity(steps);
    let mut records = Vec::with_capacity(steps);
    let mut crash_time: Option<f64> = None;

    for k in 0..steps {
        let t = k as f64 * dt;
        rotors = inject_fault(&faults, t, &rotors, &act);

        let meas = Measurement {
            position: state.position,
            velocity_body: state.velocity_body
                + Vector3::new(
                    noise_v.sample(&mut rng),
                    noise_v.sample(&mut rng),
                    noise_v.sample(&mut rng),
                ),
            attitude: state.attitude,
            rates: state.rates
                + Vector3::new(
                    noise_w.sample(&mut rng),
                    noise_w.sample(&mut rng),
                    noise_w.sample(&mut rng),
                ),
        };

        let reference = program.sample(t);
        let setpoint = ctrl.outer_loop(&meas, &reference);
        let commands = ctrl.rate_loop_incremental(meas.rates, &setpoint, &rotors.speeds);

        let euler = state.euler_angles();
        trajectory.push(TruthSample {
            t,
            position: state.position,
            velocity_body: state.velocity_body,
            euler,
            rates: state.rates,
            speeds: rotors.speeds,
            commanded: commands,
        });
        records.push(SimRecord { t, rates: meas.rates, speeds: rotors.speeds, euler });

        if crash_time.is_none() && (euler.0.abs() > std::f64::consts::FRAC_PI_2
            || euler.1.abs() > std::f64::consts::FRAC_PI_2)
        {
            crash_time = Some(t);
        }
        if let StopCondition::CrashThenTail { tail_s } = options.stop {
            if let Some(tc) = crash_time {
                if t >= tc + tail_s {
                    break;
                }
            }
        }

        let ext = options
            .disturbance
            .map(|d| d.moment(t))
            .unwrap_or_else(Vector3::zeros);
        rotors = actuator_step(&rotors, &commands, &act, dt)?;
        state = integrate_step_ext(&state, &rotors.speeds, &params, &models, dt, t, ext)?;
    }

    Ok(SimOutput {
        trajectory,
        records,
        rate_hz: cfg.sim.rate_hz,
        seed: options.seed,
        crash_time_s: crash_time,
        fault_time_s: faults.first().map(|f| f.time_s),
    })
}

/// Reconstruct the control moments actually achieved at each recorded step.
pub fn achieved_control_moments(
    output: &SimOutput,
    spin: crate::dynamics::SpinSign,
) -> Vec<ControlMoments> {
    output
        .records
        .iter()
        .map(|r| control_moments(&r.speeds, spin).unwrap_or_default())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ReferenceSegmentConfig, ScenarioConfig};

    fn hover_scenario(duration_s: f64) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.sim.duration_s = duration_s;
        cfg.reference = vec![ReferenceSegmentConfig {
            duration_s,
            mode: "position".into(),
            position: Some([0.0, 0.0, -1.5]),
            yaw_deg: None,
            yaw_rate_deg_s: None,
        }];
        cfg
    }

    #[test]
    fn hover_stays_put() {
        let cfg = hover_scenario(4.0);
        let out = run_scenario(
            &cfg,
            &SimOptions { disturbance: None, stop: StopCondition::FixedDuration, seed: 5 },
        )
        .unwrap();
        let last = out.trajectory.last().unwrap();
        let err = (last.position - Vector3::new(0.0, 0.0, -1.5)).norm();
        assert!(err < 0.05, "hover drifted {err} m");
        assert!(out.crash_time_s.is_none());
    }

    #[test]
    fn offset_hover_settles_without_sustained_saturation() {
        let mut cfg = hover_scenario(6.0);
        // start 1 m away from the hold point by pointing the program there
        cfg.reference[0].position = Some([1.0, 0.0, -1.5]);
        let out = run_scenario(
            &cfg,
            &SimOptions { disturbance: None, stop: StopCondition::FixedDuration, seed: 9 },
        )
        .unwrap();
        let target = Vector3::new(1.0, 0.0, -1.5);
        let dt = cfg.dt();
        // position error < 5 cm at the end
        let last = out.trajectory.last().unwrap();
        assert!((last.position - target).norm() < 0.05);
        // no rotor pinned at a limit for more than 0.5 s straight
        let mut run_len = 0usize;
        let mut worst = 0usize;
        for s in &out.trajectory {
            let saturated = s
                .speeds
                .iter()
                .any(|w| *w <= 150.0 + 1e-9 || *w >= 3500.0 - 1e-9);
            run_len = if saturated { run_len + 1 } else { 0 };
            worst = worst.max(run_len);
        }
        assert!(
            (worst as f64) * dt <= 0.5,
            "saturation persisted {:.2} s",
            worst as f64 * dt
        );
    }

    #[test]
    fn determinism_per_seed() {
        let cfg = hover_scenario(2.0);
        let opts = SimOptions { disturbance: None, stop: StopCondition::FixedDuration, seed: 42 };
        let a = run_scenario(&cfg, &opts).unwrap();
        let b = run_scenario(&cfg, &opts).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.rates, y.rates);
            assert_eq!(x.speeds, y.speeds);
        }
    }

    #[test]
    fn rotor_fault_causes_crash() {
        let mut cfg = hover_scenario(6.0);
        cfg.faults = vec![crate::config::FaultConfig { rotor: 3, cap: 0.0, time_s: 2.0 }];
        let out = run_scenario(
            &cfg,
            &SimOptions { disturbance: None, stop: StopCondition::FixedDuration, seed: 3 },
        )
        .unwrap();
        // speeds clamp to zero from the fault on
        let idx = (2.0 / cfg.dt()) as usize + 2;
        assert_eq!(out.records[idx].speeds[2], 0.0);
        let max_tilt = out
            .trajectory
            .iter()
            .map(|s| s.euler.0.abs().max(s.euler.1.abs()))
            .fold(0.0f64, f64::max);
        assert!(max_tilt > 0.5, "fault produced max tilt of only {max_tilt} rad");
    }
}
