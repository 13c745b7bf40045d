//! TOML configuration schema: vehicle, actuators, controller, noise,
//! reference program, fault schedule, detector, and synthetic-flight
//! generation. All units SI unless a key says otherwise.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::actuator::{ActuatorParams, FaultEvent};
use crate::controller::{ControllerGains, ReferenceProgram, ReferenceSegment, SegmentMode};
use crate::dynamics::{AeroMomentModel, AxisPoly, PolyTerm, QuadParams, SpinSign, VehicleModels};
use crate::error::CoreError;
use crate::fcm::{FcmConfig, HeadroomRule, MEstimator};
use crate::signal::FilterMode;

fn de_vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

/// `[quad]` — physical properties.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadConfig {
    /// Mass [kg]
    pub mass: f64,
    /// Inertia diagonal [kg·m²]
    pub inertia: [f64; 3],
    /// Gravity in NED [m/s²]
    pub gravity: [f64; 3],
    /// Diagonal hub-to-hub diameter [m]
    pub hub_diameter: f64,
    /// Rotor thrust coefficient [N·s²/rad²]
    pub thrust_coeff: f64,
    /// Permit gravity magnitudes outside [9.0, 10.5] m/s²
    pub allow_gravity_override: bool,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            mass: 0.433,
            inertia: [0.865e-3, 1.07e-3, 1.71e-3],
            gravity: [0.0, 0.0, 9.81],
            hub_diameter: 0.217,
            thrust_coeff: 4.72e-7,
            allow_gravity_override: false,
        }
    }
}

impl QuadConfig {
    pub fn params(&self) -> Result<QuadParams, CoreError> {
        let p = QuadParams {
            mass: self.mass,
            inertia_diag: de_vec3(self.inertia),
            gravity: de_vec3(self.gravity),
            hub_diameter: self.hub_diameter,
            thrust_coeff: self.thrust_coeff,
        };
        p.validate(self.allow_gravity_override)?;
        Ok(p)
    }
}

/// One polynomial term as `[rate_exp, input_exp, coeff]`.
pub type PolyTermSpec = (u32, u32, f64);

/// `[aero]` — moment model and drag. The linear `ku`/`kd` pairs are the
/// default; a full polynomial per axis overrides them when present.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AeroConfig {
    /// Control-moment effectiveness per axis [N·m per rad/s of u]
    pub ku: [f64; 3],
    /// Rate damping per axis [N·m per rad/s]
    pub kd: [f64; 3],
    /// Linear body drag [N·s/m]
    pub drag: [f64; 3],
    /// Optional full polynomial per axis, terms of (rate_exp, input_exp, coeff)
    pub poly_roll: Option<Vec<PolyTermSpec>>,
    pub poly_pitch: Option<Vec<PolyTermSpec>>,
    pub poly_yaw: Option<Vec<PolyTermSpec>>,
}

impl Default for AeroConfig {
    fn default() -> Self {
        Self {
            ku: [1.086e-4, 1.086e-4, 1.70e-5],
            kd: [-2.0e-4, -2.0e-4, -5.0e-5],
            drag: [0.30, 0.30, 0.40],
            poly_roll: None,
            poly_pitch: None,
            poly_yaw: None,
        }
    }
}

impl AeroConfig {
    fn axis(&self, idx: usize, poly: &Option<Vec<PolyTermSpec>>) -> AxisPoly {
        match poly {
            Some(terms) => AxisPoly {
                terms: terms
                    .iter()
                    .map(|&(r, i, c)| PolyTerm { rate_exp: r, input_exp: i, coeff: c })
                    .collect(),
            },
            None => AxisPoly::linear(self.kd[idx], self.ku[idx]),
        }
    }

    pub fn moment_model(&self) -> Result<AeroMomentModel, CoreError> {
        let m = AeroMomentModel {
            roll: self.axis(0, &self.poly_roll),
            pitch: self.axis(1, &self.poly_pitch),
            yaw: self.axis(2, &self.poly_yaw),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn models(&self, spin: SpinSign) -> Result<VehicleModels, CoreError> {
        Ok(VehicleModels {
            aero: self.moment_model()?,
            drag_coeff: de_vec3(self.drag),
            spin,
        })
    }
}

/// `[actuators]` — rotor limits and response.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ActuatorConfig {
    /// First-order time constant [s] (Table-style "60 Hz" means 1/60 here)
    pub time_constant: f64,
    /// Idle speed [rad/s]
    pub omega_min: f64,
    /// Saturation speed [rad/s]
    pub omega_max: f64,
    /// Spin direction of rotor 1: 1 = clockwise, -1 = counter-clockwise
    pub s_r: i8,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        Self { time_constant: 1.0 / 60.0, omega_min: 150.0, omega_max: 3500.0, s_r: 1 }
    }
}

impl ActuatorConfig {
    pub fn params(&self) -> Result<ActuatorParams, CoreError> {
        let spin = SpinSign::try_from(self.s_r).map_err(CoreError::Config)?;
        let p = ActuatorParams {
            time_constant: self.time_constant,
            omega_min: self.omega_min,
            omega_max: self.omega_max,
            spin,
        };
        p.validate()?;
        Ok(p)
    }
}

/// `[controller]` — cascaded loop gains and limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub pos_p: f64,
    pub vel_p: f64,
    pub att_p: [f64; 3],
    pub rate_p: [f64; 3],
    /// Velocity setpoint clamp [m/s]
    pub vel_max: f64,
    /// Acceleration setpoint clamp [m/s²]
    pub acc_max: f64,
    /// Rate setpoint clamp per axis [rad/s]
    pub rate_max: [f64; 3],
    /// Cutoff of the rate filter feeding the incremental loop [Hz]
    pub indi_filter_hz: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            pos_p: 1.2,
            vel_p: 3.0,
            att_p: [9.0, 9.0, 5.0],
            rate_p: [22.0, 22.0, 12.0],
            vel_max: 4.0,
            acc_max: 10.0,
            rate_max: [7.0, 7.0, 45.0],
            indi_filter_hz: 40.0,
        }
    }
}

impl ControllerConfig {
    pub fn gains(&self) -> ControllerGains {
        ControllerGains {
            pos_p: self.pos_p,
            vel_p: self.vel_p,
            att_p: de_vec3(self.att_p),
            rate_p: de_vec3(self.rate_p),
            vel_max: self.vel_max,
            acc_max: self.acc_max,
            rate_max: de_vec3(self.rate_max),
            indi_filter_hz: self.indi_filter_hz,
        }
    }
}

/// `[noise]` — measurement noise, applied to measurements only.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Velocity noise std [m/s]
    pub sigma_v: f64,
    /// Rate noise std [rad/s]
    pub sigma_omega: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma_v: 0.01, sigma_omega: 8.73e-5 }
    }
}

/// `[sim]` — integration rate and horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { rate_hz: 250.0, duration_s: 21.0, seed: 1 }
    }
}

/// One `[[reference]]` segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceSegmentConfig {
    pub duration_s: f64,
    /// "position" or "yaw_rate"
    pub mode: String,
    pub position: Option<[f64; 3]>,
    pub yaw_deg: Option<f64>,
    pub yaw_rate_deg_s: Option<f64>,
}

impl ReferenceSegmentConfig {
    pub fn segment(&self) -> Result<ReferenceSegment, CoreError> {
        if !(self.duration_s > 0.0) {
            return Err(CoreError::Config("reference segment duration must be > 0".into()));
        }
        let mode = match self.mode.as_str() {
            "position" => SegmentMode::Position {
                target: de_vec3(self.position.ok_or_else(|| {
                    CoreError::Config("position segment needs a position".into())
                })?),
                yaw: self.yaw_deg.unwrap_or(0.0).to_radians(),
            },
            "yaw_rate" => SegmentMode::YawRate {
                rate: self
                    .yaw_rate_deg_s
                    .ok_or_else(|| CoreError::Config("yaw_rate segment needs yaw_rate_deg_s".into()))?
                    .to_radians(),
            },
            other => {
                return Err(CoreError::Config(format!(
                    "unknown reference mode \"{other}\" (expected position|yaw_rate)"
                )))
            }
        };
        Ok(ReferenceSegment { duration_s: self.duration_s, mode })
    }
}

/// One `[[faults]]` entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultConfig {
    pub rotor: usize,
    pub cap: f64,
    pub time_s: f64,
}

impl FaultConfig {
    pub fn event(&self) -> Result<FaultEvent, CoreError> {
        let ev = FaultEvent { rotor: self.rotor, cap: self.cap, time_s: self.time_s };
        ev.validate()?;
        Ok(ev)
    }
}

/// `[detector]` — FCM hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Majority voting window [s]
    pub mvw_s: f64,
    /// Low-pass cutoff [Hz]
    pub cf_hz: f64,
    /// Effectiveness estimation window [s]
    pub m_window_s: f64,
    /// Relative singular-value tolerance for the rank test
    pub rank_tol: f64,
    /// Use the dẋ ≈ B·du approximation (no A term, rank assumed full)
    pub b_only: bool,
    /// Zero-phase (offline) filtering; false = causal
    pub zero_phase: bool,
    /// Alignment shift applied to the derived acceleration difference;
    /// None picks 1 sample plus the causal group delay
    pub shift_samples: Option<i32>,
    /// Minimum predicted-excitation level (std of predicted dẋ divided by
    /// dt, [rad/s³]) below which the effectiveness estimate holds
    pub excitation_floor: f64,
    /// "correlation" (default) or "regression"
    pub m_estimator: String,
    /// "allocation" (default) or "per_axis"
    pub headroom_rule: String,
    /// Let the detector see fault caps in its headroom computation
    pub disclose_faults: bool,
    /// Low-pass the derived accelerations a second time
    pub filter_acceleration: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            mvw_s: 0.2,
            cf_hz: 30.0,
            m_window_s: 0.2,
            rank_tol: 1e-8,
            b_only: false,
            zero_phase: true,
            shift_samples: None,
            excitation_floor: 250.0,
            m_estimator: "correlation".into(),
            headroom_rule: "allocation".into(),
            disclose_faults: false,
            filter_acceleration: false,
        }
    }
}

impl DetectorConfig {
    pub fn fcm_config(&self, dt: f64) -> Result<FcmConfig, CoreError> {
        let estimator = match self.m_estimator.as_str() {
            "correlation" => MEstimator::Correlation,
            "regression" => MEstimator::RegressionSlope,
            other => {
                return Err(CoreError::Config(format!(
                    "unknown m_estimator \"{other}\" (expected correlation|regression)"
                )))
            }
        };
        let headroom_rule = match self.headroom_rule.as_str() {
            "allocation" => HeadroomRule::Allocation,
            "per_axis" => HeadroomRule::PerAxis,
            other => {
                return Err(CoreError::Config(format!(
                    "unknown headroom_rule \"{other}\" (expected allocation|per_axis)"
                )))
            }
        };
        let cfg = FcmConfig {
            mvw_s: self.mvw_s,
            cf_hz: self.cf_hz,
            m_window_s: self.m_window_s,
            dt,
            rank_tol: self.rank_tol,
            b_only: self.b_only,
            filter_mode: if self.zero_phase { FilterMode::ZeroPhase } else { FilterMode::Causal },
            shift_samples: self.shift_samples,
            excitation_floor: self.excitation_floor,
            m_estimator: estimator,
            headroom_rule,
            disclose_faults: self.disclose_faults,
            filter_acceleration: self.filter_acceleration,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Synthetic yaw loss-of-control generation parameters. Ranges are sampled
/// uniformly per seed; a zero growth-rate range makes a non-LOC flight.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    /// Hover time before the yaw manoeuvre starts [s]
    pub maneuver_start_s: f64,
    /// Demanded yaw rate [deg/s]; sign is drawn per seed
    pub yaw_rate_deg_s: f64,
    /// Delay from manoeuvre start to disturbance onset [s], sampled range
    pub disturbance_delay_s: [f64; 2],
    /// Exponential growth rate of the off-axis disturbance [1/s], sampled range
    pub growth_rate: [f64; 2],
    /// Initial disturbance torque amplitude [N·m]
    pub disturbance_amplitude: f64,
    /// Off-axis oscillation frequency [Hz], sampled range
    pub oscillation_hz: [f64; 2],
    /// For non-LOC flights: manoeuvre duration before it is stopped [s], range
    pub maneuver_stop_s: [f64; 2],
    /// Extra log recorded past the crash [s]
    pub post_crash_s: f64,
    /// Hard cap on flight duration [s]
    pub max_duration_s: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            maneuver_start_s: 1.2,
            yaw_rate_deg_s: 2000.0,
            disturbance_delay_s: [0.6, 1.2],
            growth_rate: [4.0, 6.0],
            disturbance_amplitude: 1.0e-4,
            oscillation_hz: [2.0, 4.0],
            maneuver_stop_s: [0.8, 1.5],
            post_crash_s: 0.6,
            max_duration_s: 9.0,
        }
    }
}

impl SyntheticParams {
    pub fn non_loc(&self) -> Self {
        Self { growth_rate: [0.0, 0.0], ..self.clone() }
    }

    pub fn is_loc(&self) -> bool {
        self.growth_rate[1] > 0.0
    }
}

/// A full scenario file: vehicle + control + experiment.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ScenarioConfig {
    pub quad: QuadConfig,
    pub aero: AeroConfig,
    pub actuators: ActuatorConfig,
    pub controller: ControllerConfig,
    pub noise: NoiseConfig,
    pub sim: SimConfig,
    pub detector: DetectorConfig,
    pub reference: Vec<ReferenceSegmentConfig>,
    pub faults: Vec<FaultConfig>,
    pub synthetic: SyntheticParams,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CoreError> {
        toml::from_str(text).map_err(|e| CoreError::Config(format!("scenario parse error: {e}")))
    }

    pub fn reference_program(&self) -> Result<ReferenceProgram, CoreError> {
        let mut segments = Vec::with_capacity(self.reference.len());
        for seg in &self.reference {
            segments.push(seg.segment()?);
        }
        if segments.is_empty() {
            // default: hold 1.5 m altitude
            segments.push(ReferenceSegment {
                duration_s: self.sim.duration_s.max(1.0),
                mode: SegmentMode::Position { target: Vector3::new(0.0, 0.0, -1.5), yaw: 0.0 },
            });
        }
        ReferenceProgram::new(segments)
    }

    pub fn fault_schedule(&self) -> Result<Vec<FaultEvent>, CoreError> {
        let mut events = Vec::with_capacity(self.faults.len());
        for f in &self.faults {
            events.push(f.event()?);
        }
        events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        Ok(events)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sim.rate_hz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_is_valid() {
        let cfg = ScenarioConfig::default();
        cfg.quad.params().unwrap();
        cfg.aero.models(SpinSign::Clockwise).unwrap();
        cfg.actuators.params().unwrap();
        cfg.detector.fcm_config(cfg.dt()).unwrap();
        cfg.reference_program().unwrap();
    }

    #[test]
    fn scenario_roundtrip_through_toml() {
        let cfg = ScenarioConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(back.quad.mass, cfg.quad.mass);
        assert_eq!(back.actuators.omega_max, cfg.actuators.omega_max);
    }

    #[test]
    fn bad_reference_mode_is_rejected() {
        let toml_text = r#"
            [[reference]]
            duration_s = 1.0
            mode = "warp"
        "#;
        let cfg = ScenarioConfig::from_toml(toml_text).unwrap();
        assert!(cfg.reference_program().is_err());
    }

    #[test]
    fn gravity_guard() {
        let mut cfg = QuadConfig { gravity: [0.0, 0.0, 3.7], ..Default::default() };
        assert!(cfg.params().is_err());
        cfg.allow_gravity_override = true;
        assert!(cfg.params().is_ok());
    }
}
