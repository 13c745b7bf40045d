//! The two simulation experiments: nominal position tracking and single-rotor
//! failure, each followed by full-model detection.

use fcm_core::config::ScenarioConfig;
use fcm_core::fcm::{detect, DetectionResult, ModelSource};
use fcm_core::ingest::{record_sim, FlightLog, LogLabel};
use fcm_core::sim::{run_scenario, SimOptions, SimOutput, StopCondition};

use crate::error::HarnessError;

pub struct ExperimentResult {
    pub output: SimOutput,
    pub log: FlightLog,
    pub detection: DetectionResult,
}

fn detect_on(cfg: &ScenarioConfig, log: &FlightLog) -> Result<DetectionResult, HarnessError> {
    let params = cfg.quad.params()?;
    let act = cfg.actuators.params()?;
    let aero = cfg.aero.models(act.spin)?.aero;
    let fcm_cfg = cfg.detector.fcm_config(log.dt())?;
    let source = ModelSource::Scheduled { params, aero };
    let faults = cfg.fault_schedule()?;
    Ok(detect(log, &source, &fcm_cfg, &act, &faults)?)
}

/// Nominal configuration, no faults: the detector is expected to stay quiet.
pub fn run_nominal_experiment(
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<ExperimentResult, HarnessError> {
    if !cfg.faults.is_empty() {
        return Err(HarnessError::Setup(
            "nominal experiment given a fault schedule; use run_fault_experiment".into(),
        ));
    }
    let output = run_scenario(
        cfg,
        &SimOptions { disturbance: None, stop: StopCondition::FixedDuration, seed },
    )?;
    let log = record_sim(&output, LogLabel::NonLoc)?;
    let detection = detect_on(cfg, &log)?;
    Ok(ExperimentResult { output, log, detection })
}

/// Rotor-failure configuration. The detector is not told about the fault
/// unless the config explicitly discloses it.
pub fn run_fault_experiment(
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<ExperimentResult, HarnessError> {
    if cfg.faults.is_empty() {
        return Err(HarnessError::Setup("fault experiment needs a fault schedule".into()));
    }
    let output = run_scenario(
        cfg,
        &SimOptions { disturbance: None, stop: StopCondition::FixedDuration, seed },
    )?;
    let log = record_sim(&output, LogLabel::Unknown)?;
    let detection = detect_on(cfg, &log)?;
    Ok(ExperimentResult { output, log, detection })
}

/// The committed nominal scenario: a 21 s waypoint square at 250 Hz with the
/// detector windows the simulation experiments use.
pub fn nominal_scenario() -> ScenarioConfig {
    let text = include_str!("../../../configs/nominal.toml");
    ScenarioConfig::from_toml(text).expect("embedded nominal scenario parses")
}

/// The committed fault scenario: the nominal flight with one rotor capped to
/// zero thrust at t = 5.2 s.
pub fn fault_scenario() -> ScenarioConfig {
    let text = include_str!("../../../configs/fault.toml");
    ScenarioConfig::from_toml(text).expect("embedded fault scenario parses")
}
