//! Flight-log loading, validation, resampling, and synthetic LOC-flight
//! generation.
//!
//! The canonical interchange format is CSV with one header row and columns
//! `t, p, q, r, w1, w2, w3, w4` plus optional `phi, theta, psi`; comma
//! separated, '.' decimal, UTF-8. Lines starting with '#' are metadata
//! comments of the form `# key: value`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ReferenceSegmentConfig, ScenarioConfig, SyntheticParams};
use crate::error::IngestError;
use crate::sim::{run_scenario, Disturbance, SimOptions, SimOutput, StopCondition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogLabel {
    NonLoc,
    YawManeuver,
    Unknown,
}

impl std::fmt::Display for LogLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LogLabel::NonLoc => write!(f, "non-loc"),
            LogLabel::YawManeuver => write!(f, "yaw-maneuver"),
            LogLabel::Unknown => write!(f, "unknown"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogSource {
    Sim,
    File,
    Synthetic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogMetadata {
    pub label: LogLabel,
    pub source: LogSource,
    /// Ground-truth LOC onset (disturbance activation) [s]
    pub onset_s: Option<f64>,
    /// Start of the yaw manoeuvre [s]
    pub maneuver_start_s: Option<f64>,
    /// Relative timestamp jitter found before resampling
    pub jitter: Option<f64>,
    pub seed: Option<u64>,
}

impl Default for LogMetadata {
    fn default() -> Self {
        Self {
            label: LogLabel::Unknown,
            source: LogSource::File,
            onset_s: None,
            maneuver_start_s: None,
            jitter: None,
            seed: None,
        }
    }
}

/// Uniformly sampled measured series consumed by the detector.
#[derive(Debug, Clone)]
pub struct FlightLog {
    pub sample_rate_hz: f64,
    pub time: Vec<f64>,
    /// p, q, r [rad/s]
    pub rates: [Vec<f64>; 3],
    /// ω1..ω4 [rad/s]
    pub speeds: [Vec<f64>; 4],
    /// roll, pitch, yaw [rad], when available
    pub attitude: Option<[Vec<f64>; 3]>,
    pub metadata: LogMetadata,
}

impl FlightLog {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        if self.time.is_empty() { 0.0 } else { self.time[self.len() - 1] - self.time[0] }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let n = self.len();
        if n < 2 {
            return Err(IngestError::TooFewRows(n));
        }
        for (name, ch) in self.channels() {
            if ch.len() != n {
                return Err(IngestError::BadValue {
                    row: ch.len(),
                    column: name.to_string(),
                    what: format!("length {} != {}", ch.len(), n),
                });
            }
            if let Some(bad) = ch.iter().position(|v| !v.is_finite()) {
                return Err(IngestError::BadValue {
                    row: bad,
                    column: name.to_string(),
                    what: "non-finite value".into(),
                });
            }
        }
        let dt = self.dt();
        for k in 1..n {
            let step = self.time[k] - self.time[k - 1];
            if (step - dt).abs() / dt > 1e-6 {
                return Err(IngestError::ExcessiveJitter { jitter: (step - dt).abs() / dt });
            }
        }
        Ok(())
    }

    fn channels(&self) -> Vec<(&'static str, &Vec<f64>)> {
        let mut out: Vec<(&'static str, &Vec<f64>)> = vec![
            ("p", &self.rates[0]),
            ("q", &self.rates[1]),
            ("r", &self.rates[2]),
            ("w1", &self.speeds[0]),
            ("w2", &self.speeds[1]),
            ("w3", &self.speeds[2]),
            ("w4", &self.speeds[3]),
        ];
        if let Some(att) = &self.attitude {
            out.push(("phi", &att[0]));
            out.push(("theta", &att[1]));
            out.push(("psi", &att[2]));
        }
        out
    }
}

/// Column-mapping options for [`load_csv`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Rotor-speed columns are eRPM; convert with 2π/(60·pole_pairs).
    pub erpm_pole_pairs: Option<u32>,
}

const MANDATORY: [&str; 8] = ["t", "p", "q", "r", "w1", "w2", "w3", "w4"];
const ATTITUDE: [&str; 3] = ["phi", "theta", "psi"];

fn lerp_at(ts: &[f64], vs: &[f64], t: f64) -> f64 {
    match ts.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => vs[i],
        Err(0) => vs[0],
        Err(i) if i >= ts.len() => vs[ts.len() - 1],
        Err(i) => {
            let w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
            vs[i - 1] * (1.0 - w) + vs[i] * w
        }
    }
}

/// Load a flight log, mapping columns by name, filling sparse NaNs by linear
/// interpolation, and resampling jittered timestamps onto the median step.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<FlightLog, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })?;

    // leading '# key: value' metadata comments
    let mut meta_kv = BTreeMap::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                meta_kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut col_index = BTreeMap::new();
    for (i, name) in headers.iter().enumerate() {
        col_index.insert(name.to_string(), i);
    }
    for name in MANDATORY {
        if !col_index.contains_key(name) {
            return Err(IngestError::MissingColumn(name.to_string()));
        }
    }
    let has_attitude = ATTITUDE.iter().all(|c| col_index.contains_key(*c));

    let mut names: Vec<&str> = MANDATORY.to_vec();
    if has_attitude {
        names.extend(ATTITUDE);
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record?;
        for (ci, name) in names.iter().enumerate() {
            let idx = col_index[*name];
            let field = record.get(idx).unwrap_or("");
            let v = field.parse::<f64>().unwrap_or(f64::NAN);
            columns[ci].push(v);
        }
    }
    let rows = columns[0].len();
    if rows < 2 {
        return Err(IngestError::TooFewRows(rows));
    }

    // NaN policy: more than 1% in any column is an error, the rest is
    // linearly interpolated over
    for (ci, name) in names.iter().enumerate() {
        let bad = columns[ci].iter().filter(|v| !v.is_finite()).count();
        if bad * 100 > rows {
            return Err(IngestError::TooManyNans {
                column: name.to_string(),
                bad,
                total: rows,
            });
        }
        if bad > 0 {
            interpolate_nans(&mut columns[ci]);
        }
    }

    let time = columns[0].clone();
    for k in 1..rows {
        if time[k] <= time[k - 1] {
            return Err(IngestError::NonMonotonicTime(k));
        }
    }

    // uniformity check against the median step
    let mut steps: Vec<f64> = time.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(|a, b| a.total_cmp(b));
    let median_dt = steps[steps.len() / 2];
    let jitter = steps
        .iter()
        .map(|s| (s - median_dt).abs() / median_dt)
        .fold(0.0f64, f64::max);

    let (time, mut data_cols, jitter_meta) = if jitter > 1e-6 {
        let t0 = time[0];
        let t_end = time[rows - 1];
        let n_out = ((t_end - t0) / median_dt).floor() as usize + 1;
        let grid: Vec<f64> = (0..n_out).map(|k| t0 + k as f64 * median_dt).collect();
        let resampled: Vec<Vec<f64>> = columns[1..]
            .iter()
            .map(|col| grid.iter().map(|t| lerp_at(&time, col, *t)).collect())
            .collect();
        (grid, resampled, Some(jitter))
    } else {
        (time, columns[1..].to_vec(), None)
    };

    if let Some(pp) = options.erpm_pole_pairs {
        let factor = std::f64::consts::TAU / (60.0 * pp as f64);
        for col in data_cols[3..7].iter_mut() {
            for v in col.iter_mut() {
                *v *= factor;
            }
        }
    }

    let sample_rate_hz = 1.0 / median_dt;
    let attitude = if has_attitude {
        Some([data_cols[7].clone(), data_cols[8].clone(), data_cols[9].clone()])
    } else {
        None
    };

    let parse_f64 = |k: &str| meta_kv.get(k).and_then(|v| v.parse::<f64>().ok());
    let label = match meta_kv.get("label").map(String::as_str) {
        Some("non-loc") => LogLabel::NonLoc,
        Some("yaw-maneuver") => LogLabel::YawManeuver,
        _ => LogLabel::Unknown,
    };

    let log = FlightLog {
        sample_rate_hz,
        time,
        rates: [data_cols[0].clone(), data_cols[1].clone(), data_cols[2].clone()],
        speeds: [
            data_cols[3].clone(),
            data_cols[4].clone(),
            data_cols[5].clone(),
            data_cols[6].clone(),
        ],
        attitude,
        metadata: LogMetadata {
            label,
            source: LogSource::File,
            onset_s: parse_f64("onset_s"),
            maneuver_start_s: parse_f64("maneuver_start_s"),
            jitter: jitter_meta,
            seed: meta_kv.get("seed").and_then(|v| v.parse().ok()),
        },
    };
    log.validate()?;
    Ok(log)
}

fn interpolate_nans(col: &mut [f64]) {
    let n = col.len();
    let mut k = 0;
    while k < n {
        if col[k].is_finite() {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && !col[k].is_finite() {
            k += 1;
        }
        let left = if start > 0 { Some(col[start - 1]) } else { None };
        let right = if k < n { Some(col[k]) } else { None };
        for (j, slot) in (start..k).enumerate() {
            col[slot] = match (left, right) {
                (Some(l), Some(r)) => {
                    let w = (j + 1) as f64 / (k - start + 1) as f64;
                    l * (1.0 - w) + r * w
                }
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => 0.0,
            };
        }
    }
}

/// Write a log in the canonical CSV schema, with metadata as '#' comments.
/// Values carry 9 significant digits.
pub fn save_csv(log: &FlightLog, path: &Path, extra_comments: &[String]) -> Result<(), IngestError> {
    let mut out = String::new();
    for c in extra_comments {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str(&format!("# label: {}\n", log.metadata.label));
    if let Some(v) = log.metadata.onset_s {
        out.push_str(&format!("# onset_s: {v:.9}\n"));
    }
    if let Some(v) = log.metadata.maneuver_start_s {
        out.push_str(&format!("# maneuver_start_s: {v:.9}\n"));
    }
    if let Some(v) = log.metadata.seed {
        out.push_str(&format!("# seed: {v}\n"));
    }
    let has_att = log.attitude.is_some();
    out.push_str("t,p,q,r,w1,w2,w3,w4");
    if has_att {
        out.push_str(",phi,theta,psi");
    }
    out.push('\n');
    let fmt = |v: f64| format!("{:.8e}", v);
    for k in 0..log.len() {
        out.push_str(&fmt(log.time[k]));
        for ch in &log.rates {
            out.push(',');
            out.push_str(&fmt(ch[k]));
        }
        for ch in &log.speeds {
            out.push(',');
            out.push_str(&fmt(ch[k]));
        }
        if let Some(att) = &log.attitude {
            for ch in att {
                out.push(',');
                out.push_str(&fmt(ch[k]));
            }
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    file.write_all(out.as_bytes()).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Assemble the measured channels of a finished simulation into a log.
pub fn record_sim(output: &SimOutput, label: LogLabel) -> Result<FlightLog, IngestError> {
    if output.records.is_empty() {
        return Err(IngestError::Generation("simulation produced no samples".into()));
    }
    let n = output.records.len();
    let mut log = FlightLog {
        sample_rate_hz: output.rate_hz,
        time: Vec::with_capacity(n),
        rates: [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)],
        speeds: [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ],
        attitude: Some([Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)]),
        metadata: LogMetadata {
            label,
            source: LogSource::Sim,
            onset_s: None,
            maneuver_start_s: None,
            jitter: None,
            seed: Some(output.seed),
        },
    };
    for r in &output.records {
        log.time.push(r.t);
        for i in 0..3 {
            log.rates[i].push(r.rates[i]);
        }
        for i in 0..4 {
            log.speeds[i].push(r.speeds[i]);
        }
        let att = log.attitude.as_mut().unwrap();
        att[0].push(r.euler.0);
        att[1].push(r.euler.1);
        att[2].push(r.euler.2);
    }
    log.validate()?;
    Ok(log)
}

/// A labeled collection of flights.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub flights: Vec<FlightLog>,
}

/// Generate one synthetic aggressive-yaw flight. A zero growth-rate range
/// yields a non-LOC flight: the manoeuvre is stopped early and no disturbance
/// is injected. Otherwise an exponentially growing off-axis torque drives the
/// vehicle into oscillation and crash; the returned onset is the disturbance
/// activation time.
pub fn generate_synthetic_yaw_loc(
    base: &ScenarioConfig,
    params: &SyntheticParams,
    seed: u64,
) -> Result<(FlightLog, Option<f64>), IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5955_4c4f); // decorrelate from sim noise
    let sample = |rng: &mut ChaCha8Rng, range: [f64; 2]| -> f64 {
        if range[1] > range[0] {
            rng.random_range(range[0]..range[1])
        } else {
            range[0]
        }
    };

    let is_loc = params.is_loc();
    let yaw_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let maneuver_start = params.maneuver_start_s;
    let delay = sample(&mut rng, params.disturbance_delay_s);
    let growth = sample(&mut rng, params.growth_rate);
    let freq = sample(&mut rng, params.oscillation_hz);
    let stop_after = sample(&mut rng, params.maneuver_stop_s);

    let hold = [0.0, 0.0, -1.5];
    let mut cfg = base.clone();
    cfg.faults.clear();
    cfg.sim.duration_s = params.max_duration_s;
    cfg.reference = vec![ReferenceSegmentConfig {
        duration_s: maneuver_start,
        mode: "position".into(),
        position: Some(hold),
        yaw_deg: None,
        yaw_rate_deg_s: None,
    }];
    if is_loc {
        cfg.reference.push(ReferenceSegmentConfig {
            duration_s: params.max_duration_s,
            mode: "yaw_rate".into(),
            position: None,
            yaw_deg: None,
            yaw_rate_deg_s: Some(yaw_sign * params.yaw_rate_deg_s),
        });
    } else {
        cfg.reference.push(ReferenceSegmentConfig {
            duration_s: stop_after,
            mode: "yaw_rate".into(),
            position: None,
            yaw_deg: None,
            yaw_rate_deg_s: Some(yaw_sign * params.yaw_rate_deg_s),
        });
        cfg.reference.push(ReferenceSegmentConfig {
            duration_s: params.max_duration_s,
            mode: "position".into(),
            position: Some(hold),
            yaw_deg: None,
            yaw_rate_deg_s: None,
        });
    }

    let disturbance = if is_loc {
        Some(Disturbance {
            onset_s: maneuver_start + delay,
            growth,
            amplitude: params.disturbance_amplitude,
            frequency_hz: freq,
        })
    } else {
        None
    };

    let output = run_scenario(
        &cfg,
        &SimOptions {
            disturbance,
            stop: StopCondition::CrashThenTail { tail_s: params.post_crash_s },
            seed,
        },
    )
    .map_err(|e| IngestError::Generation(e.to_string()))?;

    if is_loc && output.crash_time_s.is_none() {
        return Err(IngestError::Generation(format!(
            "LOC flight (seed {seed}) never crashed within {} s; raise growth_rate or duration",
            params.max_duration_s
        )));
    }

    let label = if is_loc { LogLabel::YawManeuver } else { LogLabel::NonLoc };
    let mut log = record_sim(&output, label)?;
    log.metadata.source = LogSource::Synthetic;
    log.metadata.maneuver_start_s = Some(maneuver_start);
    let onset = if is_loc { Some(maneuver_start + delay) } else { None };
    log.metadata.onset_s = onset;
    Ok((log, onset))
}
