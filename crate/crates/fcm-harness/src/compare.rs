//! Side-by-side comparison of the windowed metric against the attitude-based
//! LOC definition.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use fcm_core::actuator::ActuatorParams;
use fcm_core::fcm::{detect, FcmConfig, LinearizedModel, ModelSource};
use fcm_core::ingest::{Dataset, LogLabel};

use crate::baseline::attitude_loc_detector;
use crate::stats::median;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub flight: usize,
    pub label: LogLabel,
    pub fcmw_s: Option<f64>,
    pub attitude_s: Option<f64>,
    /// attitude minus FCMW detection time, when both detect [s]
    pub difference_s: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: FcmConfig,
    pub rows: Vec<CompareRow>,
    pub fcmw_detections: usize,
    pub attitude_detections: usize,
    pub difference_median_s: Option<f64>,
}

/// Run both detectors over every flight. Flights detected by neither
/// contribute no difference entry.
pub fn compare_detectors(
    dataset: &Dataset,
    cfg: &FcmConfig,
    actuators: &ActuatorParams,
    nominal_b: Vector3<f64>,
) -> ComparisonReport {
    let model = ModelSource::Fixed(LinearizedModel::b_only(nominal_b));
    let mut rows = Vec::with_capacity(dataset.flights.len());
    for (idx, log) in dataset.flights.iter().enumerate() {
        let mut cfg = cfg.clone();
        cfg.b_only = true;
        let (fcmw_s, mut err) = match detect(log, &model, &cfg, actuators, &[]) {
            Ok(r) => (r.detection_time_s, None),
            Err(e) => (None, Some(format!("fcmw: {e}"))),
        };
        let attitude_s = match attitude_loc_detector(log) {
            Ok(t) => t,
            Err(e) => {
                err = Some(match err {
                    Some(prev) => format!("{prev}; attitude: {e}"),
                    None => format!("attitude: {e}"),
                });
                None
            }
        };
        let difference_s = match (attitude_s, fcmw_s) {
            (Some(a), Some(f)) => Some(a - f),
            _ => None,
        };
        rows.push(CompareRow {
            flight: idx,
            label: log.metadata.label,
            fcmw_s,
            attitude_s,
            difference_s,
            error: err,
        });
    }
    let fcmw_detections = rows.iter().filter(|r| r.fcmw_s.is_some()).count();
    let attitude_detections = rows.iter().filter(|r| r.attitude_s.is_some()).count();
    let diffs: Vec<f64> = rows.iter().filter_map(|r| r.difference_s).collect();
    ComparisonReport {
        config: cfg.clone(),
        rows,
        fcmw_detections,
        attitude_detections,
        difference_median_s: median(&diffs),
    }
}
