//! The MVW × CF hyperparameter sweep and the optimum-selection rule.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fcm_core::actuator::ActuatorParams;
use fcm_core::fcm::{detect, FcmConfig, LinearizedModel, ModelSource};
use fcm_core::ingest::{Dataset, FlightLog, LogLabel};

use crate::baseline::maneuver_start;
use crate::error::HarnessError;
use crate::stats::{iqr, median};

/// Sorted grids of voting-window durations and cutoff frequencies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepGrid {
    pub mvw_s: Vec<f64>,
    pub cf_hz: Vec<f64>,
}

impl SweepGrid {
    pub fn new(mvw_s: Vec<f64>, cf_hz: Vec<f64>) -> Result<Self, HarnessError> {
        for (name, v) in [("mvw_s", &mvw_s), ("cf_hz", &cf_hz)] {
            if v.is_empty() {
                return Err(HarnessError::BadGrid(format!("{name} is empty")));
            }
            if v.iter().any(|x| !(*x > 0.0)) {
                return Err(HarnessError::BadGrid(format!("{name} has non-positive entries")));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(HarnessError::BadGrid(format!("{name} not strictly ascending")));
            }
        }
        Ok(Self { mvw_s, cf_hz })
    }

    pub fn cells(&self) -> usize {
        self.mvw_s.len() * self.cf_hz.len()
    }
}

/// Result of one detector run on one flight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlightOutcome {
    pub flight: usize,
    pub label: LogLabel,
    pub detection_s: Option<f64>,
    pub onset_s: Option<f64>,
    pub maneuver_start_s: f64,
    /// Per-flight failures are recorded, not fatal.
    pub error: Option<String>,
}

/// Aggregates for one (MVW, CF) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub mvw_s: f64,
    pub cf_hz: f64,
    pub nonloc_total: usize,
    /// Ran cleanly with no detection
    pub nonloc_passed: usize,
    /// Detections on non-LOC flights
    pub nonloc_false_positives: usize,
    pub nonloc_errors: usize,
    pub loc_total: usize,
    pub loc_detected: usize,
    pub loc_errors: usize,
    /// Median of (detection − manoeuvre start) over detected LOC flights [s]
    pub detection_delay_median_s: Option<f64>,
    pub detection_delay_iqr_s: Option<f64>,
    pub outcomes: Vec<FlightOutcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimumCell {
    pub mvw_s: f64,
    pub cf_hz: f64,
    pub loc_detected: usize,
    pub loc_total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub grid: SweepGrid,
    pub nominal_b: [f64; 3],
    /// Cells ordered by (MVW, CF) grid position.
    pub cells: Vec<CellReport>,
    pub optimum: Option<OptimumCell>,
}

/// Run the detector for every flight at every grid cell, in B-only mode.
/// Cells and flights are independent work items; aggregation preserves grid
/// order so reports are deterministic.
pub fn run_sweep(
    dataset: &Dataset,
    grid: &SweepGrid,
    base: &FcmConfig,
    actuators: &ActuatorParams,
    nominal_b: Vector3<f64>,
) -> SweepReport {
    let model = ModelSource::Fixed(LinearizedModel::b_only(nominal_b));
    let cells: Vec<CellReport> = grid
        .mvw_s
        .iter()
        .flat_map(|mvw| grid.cf_hz.iter().map(move |cf| (*mvw, *cf)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(mvw, cf)| {
            let mut cfg = base.clone();
            cfg.mvw_s = *mvw;
            cfg.cf_hz = *cf;
            cfg.b_only = true;
            run_cell(dataset, &cfg, actuators, &model, *mvw, *cf)
        })
        .collect();

    let optimum = select_optimum(&cells);
    SweepReport {
        grid: grid.clone(),
        nominal_b: [nominal_b.x, nominal_b.y, nominal_b.z],
        cells,
        optimum,
    }
}

fn run_cell(
    dataset: &Dataset,
    cfg: &FcmConfig,
    actuators: &ActuatorParams,
    model: &ModelSource,
    mvw_s: f64,
    cf_hz: f64,
) -> CellReport {
    let outcomes: Vec<FlightOutcome> = dataset
        .flights
        .iter()
        .enumerate()
        .map(|(idx, log)| run_flight(idx, log, cfg, actuators, model))
        .collect();

    let mut cell = CellReport {
        mvw_s,
        cf_hz,
        nonloc_total: 0,
        nonloc_passed: 0,
        nonloc_false_positives: 0,
        nonloc_errors: 0,
        loc_total: 0,
        loc_detected: 0,
        loc_errors: 0,
        detection_delay_median_s: None,
        detection_delay_iqr_s: None,
        outcomes: Vec::new(),
    };
    let mut delays = Vec::new();
    for o in &outcomes {
        match o.label {
            LogLabel::NonLoc => {
                cell.nonloc_total += 1;
                if o.error.is_some() {
                    cell.nonloc_errors += 1;
                } else if o.detection_s.is_some() {
                    cell.nonloc_false_positives += 1;
                } else {
                    cell.nonloc_passed += 1;
                }
            }
            LogLabel::YawManeuver => {
                cell.loc_total += 1;
                if o.error.is_some() {
                    cell.loc_errors += 1;
                } else if let Some(det) = o.detection_s {
                    cell.loc_detected += 1;
                    delays.push(det - o.maneuver_start_s);
                }
            }
            LogLabel::Unknown => {}
        }
    }
    cell.detection_delay_median_s = median(&delays);
    cell.detection_delay_iqr_s = iqr(&delays);
    cell.outcomes = outcomes;
    cell
}

fn run_flight(
    idx: usize,
    log: &FlightLog,
    cfg: &FcmConfig,
    actuators: &ActuatorParams,
    model: &ModelSource,
) -> FlightOutcome {
    let start = maneuver_start(log);
    match detect(log, model, cfg, actuators, &[]) {
        Ok(res) => FlightOutcome {
            flight: idx,
            label: log.metadata.label,
            detection_s: res.detection_time_s,
            onset_s: log.metadata.onset_s,
            maneuver_start_s: start,
            error: None,
        },
        Err(e) => FlightOutcome {
            flight: idx,
            label: log.metadata.label,
            detection_s: None,
            onset_s: log.metadata.onset_s,
            maneuver_start_s: start,
            error: Some(e.to_string()),
        },
    }
}

/// The paper's selection rule: among cells that identify every non-LOC
/// flight correctly (no false positives, no failures), take the most
/// sensitive one. Ties prefer the shorter window, then the higher cutoff.
pub fn select_optimum(cells: &[CellReport]) -> Option<OptimumCell> {
    cells
        .iter()
        .filter(|c| c.nonloc_false_positives == 0 && c.nonloc_errors == 0 && c.nonloc_total > 0)
        .max_by(|a, b| {
            a.loc_detected
                .cmp(&b.loc_detected)
                .then(b.mvw_s.total_cmp(&a.mvw_s))
                .then(a.cf_hz.total_cmp(&b.cf_hz))
        })
        .map(|c| OptimumCell {
            mvw_s: c.mvw_s,
            cf_hz: c.cf_hz,
            loc_detected: c.loc_detected,
            loc_total: c.loc_total,
        })
}

impl SweepReport {
    pub fn cell(&self, mvw_s: f64, cf_hz: f64) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| (c.mvw_s - mvw_s).abs() < 1e-12 && (c.cf_hz - cf_hz).abs() < 1e-12)
    }

    /// (detection − manoeuvre start) values per MVW at one cutoff, the
    /// non-triviality view of the detection times.
    pub fn delays_by_mvw(&self, cf_hz: f64) -> Vec<(f64, Vec<f64>)> {
        let mut out = Vec::new();
        for mvw in &self.grid.mvw_s {
            if let Some(cell) = self.cell(*mvw, cf_hz) {
                let delays = cell
                    .outcomes
                    .iter()
                    .filter(|o| o.label == LogLabel::YawManeuver)
                    .filter_map(|o| o.detection_s.map(|d| d - o.maneuver_start_s))
                    .collect();
                out.push((*mvw, delays));
            }
        }
        out
    }

    /// False-positive counts per MVW at one cutoff.
    pub fn false_positives_by_mvw(&self, cf_hz: f64) -> Vec<(f64, usize)> {
        self.grid
            .mvw_s
            .iter()
            .filter_map(|mvw| self.cell(*mvw, cf_hz).map(|c| (*mvw, c.nonloc_false_positives)))
            .collect()
    }
}
