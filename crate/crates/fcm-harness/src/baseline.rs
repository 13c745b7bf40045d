//! Attitude-based LOC baseline: the first time roll or pitch exceeds, and
//! continues to exceed, 90 degrees after the start of the yaw manoeuvre.

use fcm_core::ingest::FlightLog;

use crate::error::HarnessError;

/// Yaw-rate magnitude that marks the manoeuvre start on logs without ground
/// truth [rad/s]. A harness convention, flagged as such in reports.
pub const MANEUVER_RATE_THRESHOLD: f64 = 10.0;

/// Manoeuvre start: ground truth when the log carries it, otherwise the
/// first |r| threshold crossing, otherwise the log start.
pub fn maneuver_start(log: &FlightLog) -> f64 {
    if let Some(t) = log.metadata.maneuver_start_s {
        return t;
    }
    for (k, r) in log.rates[2].iter().enumerate() {
        if r.abs() > MANEUVER_RATE_THRESHOLD {
            return log.time[k];
        }
    }
    log.time[0]
}

/// First time t* at or after the manoeuvre start such that
/// max(|roll|, |pitch|) > 90° holds from t* to the end of the log.
pub fn attitude_loc_detector(log: &FlightLog) -> Result<Option<f64>, HarnessError> {
    let att = log.attitude.as_ref().ok_or(HarnessError::MissingAttitude)?;
    let n = log.len();
    let start_t = maneuver_start(log);
    let limit = std::f64::consts::FRAC_PI_2;

    // longest suffix on which the exceedance holds at every sample
    let mut suffix_start = n;
    for k in (0..n).rev() {
        if att[0][k].abs() > limit || att[1][k].abs() > limit {
            suffix_start = k;
        } else {
            break;
        }
    }
    if suffix_start >= n {
        return Ok(None);
    }
    let t_star = log.time[suffix_start].max(start_t);
    if t_star > log.time[n - 1] {
        return Ok(None);
    }
    Ok(Some(t_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fcm_core::ingest::{LogLabel, LogMetadata, LogSource};

    fn log_with_roll(roll: Vec<f64>) -> FlightLog {
        let n = roll.len();
        FlightLog {
            sample_rate_hz: 250.0,
            time: (0..n).map(|k| k as f64 / 250.0).collect(),
            rates: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            speeds: [vec![1500.0; n], vec![1500.0; n], vec![1500.0; n], vec![1500.0; n]],
            attitude: Some([roll, vec![0.0; n], vec![0.0; n]]),
            metadata: LogMetadata {
                label: LogLabel::Unknown,
                source: LogSource::Synthetic,
                onset_s: None,
                maneuver_start_s: Some(0.0),
                jitter: None,
                seed: None,
            },
        }
    }

    #[test]
    fn never_exceeding_yields_none() {
        let log = log_with_roll(vec![0.3; 500]);
        assert_eq!(attitude_loc_detector(&log).unwrap(), None);
    }

    #[test]
    fn step_held_to_end_detects_at_step() {
        let mut roll = vec![0.0; 1000];
        let k0 = 750; // t = 3.0 s
        for v in roll.iter_mut().skip(k0) {
            *v = 120f64.to_radians();
        }
        let log = log_with_roll(roll);
        let t = attitude_loc_detector(&log).unwrap().unwrap();
        assert!((t - 3.0).abs() < 1e-9);
    }

    #[test]
    fn transient_excursion_is_ignored() {
        let mut roll = vec![0.0; 1000];
        // 95° for 0.2 s, then recovery
        for v in roll.iter_mut().skip(300).take(50) {
            *v = 95f64.to_radians();
        }
        let log = log_with_roll(roll);
        assert_eq!(attitude_loc_detector(&log).unwrap(), None);
    }

    #[test]
    fn missing_attitude_errors() {
        let mut log = log_with_roll(vec![0.0; 100]);
        log.attitude = None;
        assert!(matches!(attitude_loc_detector(&log), Err(HarnessError::MissingAttitude)));
    }
}
