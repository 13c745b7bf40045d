//! Dataset manifests: a TOML file listing flights (synthetic generator
//! entries or CSV paths) plus the sweep grid and detector settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fcm_core::config::ScenarioConfig;
use fcm_core::ingest::{generate_synthetic_yaw_loc, load_csv, CsvOptions, Dataset, LogLabel};

use crate::error::HarnessError;
use crate::sweep::SweepGrid;

/// One `[[flights]]` manifest entry: either a generator batch or a file.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FlightEntry {
    /// "yaw_loc" or "yaw_nonloc" for generated flights
    pub kind: Option<String>,
    pub count: Option<usize>,
    pub base_seed: Option<u64>,
    /// CSV path (relative to the manifest) for recorded flights
    pub path: Option<String>,
    /// Label override for file entries: "non-loc" | "yaw-maneuver" | "unknown"
    pub label: Option<String>,
    pub erpm_pole_pairs: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub mvw_s: Vec<f64>,
    pub cf_hz: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            mvw_s: vec![0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 1.0, 1.2, 1.5],
            cf_hz: vec![1.0, 5.0, 10.0, 30.0, 50.0, 100.0],
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> Result<SweepGrid, HarnessError> {
        SweepGrid::new(self.mvw_s.clone(), self.cf_hz.clone())
    }
}

/// The manifest file: `[scenario.*]` vehicle/detector sections, `[grid]`,
/// and `[[flights]]`.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ManifestConfig {
    pub scenario: ScenarioConfig,
    pub grid: GridConfig,
    pub flights: Vec<FlightEntry>,
}

impl ManifestConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Manifest(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml(&text)
    }
}

/// Expand a manifest into flight logs. Generated entries draw consecutive
/// seeds from `base_seed`; file entries load relative to `base_dir`.
pub fn build_dataset(manifest: &ManifestConfig, base_dir: &Path) -> Result<Dataset, HarnessError> {
    let mut flights = Vec::new();
    for (idx, entry) in manifest.flights.iter().enumerate() {
        match (&entry.kind, &entry.path) {
            (Some(kind), None) => {
                let params = match kind.as_str() {
                    "yaw_loc" => manifest.scenario.synthetic.clone(),
                    "yaw_nonloc" => manifest.scenario.synthetic.non_loc(),
                    other => {
                        return Err(HarnessError::Manifest(format!(
                            "flight entry {idx}: unknown kind \"{other}\""
                        )))
                    }
                };
                let count = entry.count.unwrap_or(1);
                let base_seed = entry.base_seed.unwrap_or(1000 * (idx as u64 + 1));
                for i in 0..count {
                    let (log, _) =
                        generate_synthetic_yaw_loc(&manifest.scenario, &params, base_seed + i as u64)?;
                    flights.push(log);
                }
            }
            (None, Some(rel)) => {
                let path = base_dir.join(rel);
                let mut log = load_csv(
                    &path,
                    &CsvOptions { erpm_pole_pairs: entry.erpm_pole_pairs },
                )?;
                if let Some(label) = &entry.label {
                    log.metadata.label = match label.as_str() {
                        "non-loc" => LogLabel::NonLoc,
                        "yaw-maneuver" => LogLabel::YawManeuver,
                        "unknown" => LogLabel::Unknown,
                        other => {
                            return Err(HarnessError::Manifest(format!(
                                "flight entry {idx}: unknown label \"{other}\""
                            )))
                        }
                    };
                }
                flights.push(log);
            }
            _ => {
                return Err(HarnessError::Manifest(format!(
                    "flight entry {idx}: exactly one of kind/path required"
                )))
            }
        }
    }
    if flights.is_empty() {
        return Err(HarnessError::Manifest("manifest lists no flights".into()));
    }
    Ok(Dataset { flights })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_matches_sweep_set() {
        let g = GridConfig::default();
        assert_eq!(g.mvw_s.len(), 9);
        assert_eq!(g.cf_hz.len(), 6);
        g.grid().unwrap();
    }

    #[test]
    fn manifest_expansion_counts() {
        let text = r#"
            [scenario.sim]
            duration_s = 6.0

            [scenario.synthetic]
            max_duration_s = 6.0

            [[flights]]
            kind = "yaw_nonloc"
            count = 2
            base_seed = 40

            [[flights]]
            kind = "yaw_loc"
            count = 1
            base_seed = 77
        "#;
        let manifest = ManifestConfig::from_toml(text).unwrap();
        let ds = build_dataset(&manifest, Path::new(".")).unwrap();
        assert_eq!(ds.flights.len(), 3);
        assert_eq!(ds.flights[0].metadata.label, LogLabel::NonLoc);
        assert_eq!(ds.flights[2].metadata.label, LogLabel::YawManeuver);
    }

    #[test]
    fn bad_entry_rejected() {
        let text = r#"
            [[flights]]
            kind = "yaw_loc"
            path = "x.csv"
        "#;
        let manifest = ManifestConfig::from_toml(text).unwrap();
        assert!(build_dataset(&manifest, Path::new(".")).is_err());
    }
}
