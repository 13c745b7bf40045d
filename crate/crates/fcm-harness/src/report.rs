//! Report emission: JSON with a reproducibility envelope, flat CSV for
//! plotting, and the trajectory/log CSVs of simulation runs.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use fcm_core::sim::SimOutput;

use crate::error::HarnessError;
use crate::sweep::SweepReport;

fn create(path: &Path) -> Result<std::fs::File, HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| HarnessError::Io {
                path: parent.display().to_string(),
                source: e,
            })?;
        }
    }
    std::fs::File::create(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Write pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut f = create(path)?;
    let text = serde_json::to_string_pretty(value)?;
    writeln!(f, "{text}").map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// JSON artifact wrapped with the resolved run configuration and seed.
#[derive(Serialize)]
pub struct Envelope<C: Serialize, T: Serialize> {
    pub config: C,
    pub seed: u64,
    pub data: T,
}

/// '#'-comment reproducibility header lines for CSV artifacts: the full
/// resolved config (one JSON line) plus the seed.
pub fn csv_header<C: Serialize>(config: &C, seed: u64) -> Result<Vec<String>, HarnessError> {
    Ok(vec![
        format!("config: {}", serde_json::to_string(config)?),
        format!("seed: {seed}"),
    ])
}

/// Truth-trajectory CSV of a simulation run.
pub fn write_trajectory_csv(
    path: &Path,
    output: &SimOutput,
    header: &[String],
) -> Result<(), HarnessError> {
    let mut f = create(path)?;
    let mut text = String::new();
    for line in header {
        text.push_str(&format!("# {line}\n"));
    }
    text.push_str(
        "t,px,py,pz,u,v,w,phi,theta,psi,p,q,r,w1,w2,w3,w4,c1,c2,c3,c4\n",
    );
    for s in &output.trajectory {
        text.push_str(&format!(
            "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
            s.t,
            s.position.x,
            s.position.y,
            s.position.z,
            s.velocity_body.x,
            s.velocity_body.y,
            s.velocity_body.z,
            s.euler.0,
            s.euler.1,
            s.euler.2,
            s.rates.x,
            s.rates.y,
            s.rates.z,
            s.speeds[0],
            s.speeds[1],
            s.speeds[2],
            s.speeds[3],
            s.commanded[0],
            s.commanded[1],
            s.commanded[2],
            s.commanded[3],
        ));
    }
    f.write_all(text.as_bytes()).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Flat per-(cell, flight) rows of a sweep, for plotting.
pub fn write_sweep_csv(
    path: &Path,
    report: &SweepReport,
    header: &[String],
) -> Result<(), HarnessError> {
    let mut f = create(path)?;
    let mut text = String::new();
    for line in header {
        text.push_str(&format!("# {line}\n"));
    }
    text.push_str("mvw_s,cf_hz,flight,label,detection_s,onset_s,maneuver_start_s,error\n");
    let opt_fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for cell in &report.cells {
        for o in &cell.outcomes {
            text.push_str(&format!(
                "{},{},{},{},{},{},{:.6},{}\n",
                cell.mvw_s,
                cell.cf_hz,
                o.flight,
                o.label,
                opt_fmt(o.detection_s),
                opt_fmt(o.onset_s),
                o.maneuver_start_s,
                o.error.as_deref().unwrap_or("").replace(',', ";"),
            ));
        }
    }
    f.write_all(text.as_bytes()).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// One console line per sweep cell.
pub fn sweep_summary(report: &SweepReport) -> String {
    let mut out = String::new();
    out.push_str("  MVW[s]  CF[Hz]  nonloc pass/total  FP  loc det/total  median delay[s]\n");
    for c in &report.cells {
        out.push_str(&format!(
            "  {:>5.2}  {:>6.1}  {:>8}/{:<8} {:>3}  {:>6}/{:<6}  {}\n",
            c.mvw_s,
            c.cf_hz,
            c.nonloc_passed,
            c.nonloc_total,
            c.nonloc_false_positives,
            c.loc_detected,
            c.loc_total,
            c.detection_delay_median_s
                .map(|v| format!("{v:.3}"))
                .unwrap_or_else(|| "-".into()),
        ));
    }
    if let Some(opt) = &report.optimum {
        out.push_str(&format!(
            "  optimum: MVW = {} s, CF = {} Hz ({}/{} LOC flights detected, zero false positives)\n",
            opt.mvw_s, opt.cf_hz, opt.loc_detected, opt.loc_total
        ));
    } else {
        out.push_str("  optimum: none (every cell mislabels a non-LOC flight)\n");
    }
    out
}
