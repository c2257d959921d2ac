//! JSON dataset records and the batch manifest. Records preserve unknown
//! fields on round trip and reload value-identically.

use crate::geometry::{GeneratorSpec, ShapeSpec};
use crate::metrics::MetricsVector;
use crate::upscaling::{ClampStats, UpscaledSample};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Generator { spec: GeneratorSpec },
    Shape { spec: ShapeSpec },
    File { origin: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RecordStatus {
    Ok,
    Failed {
        stage: String,
        code: String,
        message: String,
    },
}

impl RecordStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RecordStatus::Ok)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub resolution: [usize; 2],
    pub momentum_tol: f64,
    pub mass_tol: f64,
    pub cfl: f64,
    pub samples: usize,
    pub navier_stokes: bool,
    pub timestamp_unix: u64,
    pub software_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub time: f64,
    pub neg_grad_c: Vec2,
    pub pert: Vec2,
    pub alpha_l: f64,
    pub alpha_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub schema_version: u32,
    pub id: String,
    pub geometry_path: String,
    pub provenance: Provenance,
    #[serde(flatten)]
    pub status: RecordStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_bar: Option<Vec2>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp_stats: Option<ClampStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_sample: Option<Vec<SampleRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsVector>,
    pub run_metadata: RunMetadata,
    /// Unknown fields survive load/save cycles.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl DatasetRecord {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("record serializes"))
    }

    pub fn load(path: &Path) -> std::io::Result<DatasetRecord> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Copy with the timestamp zeroed, for determinism comparisons.
    pub fn without_timestamp(&self) -> DatasetRecord {
        let mut r = self.clone();
        r.run_metadata.timestamp_unix = 0;
        r
    }

    pub fn sample_rows(samples: &[UpscaledSample], pairs: &[crate::upscaling::DispersivityPair]) -> Vec<SampleRow> {
        samples
            .iter()
            .zip(pairs)
            .map(|(s, p)| SampleRow {
                time: s.time,
                neg_grad_c: s.neg_grad_c,
                pert: s.pert,
                alpha_l: p.alpha_l,
                alpha_t: p.alpha_t,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub record_file: String,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub n_per_kind: usize,
    pub successful: usize,
    pub flagged: usize,
    pub records: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("manifest serializes"))
    }

    pub fn load(path: &Path) -> std::io::Result<Manifest> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GeneratorKind, GeneratorSpec};

    fn sample_record() -> DatasetRecord {
        DatasetRecord {
            schema_version: SCHEMA_VERSION,
            id: "perlin-0001".into(),
            geometry_path: "perlin-0001.pbm".into(),
            provenance: Provenance::Generator {
                spec: GeneratorSpec::new(GeneratorKind::Perlin, 42, 0.7),
            },
            status: RecordStatus::Ok,
            alpha_l: Some(0.731234567890123),
            alpha_t: Some(0.04),
            v_bar: Some(Vec2::new(3.3e-4, -1.2e-6)),
            window: Some((12.5, 310.75)),
            clamp_stats: None,
            per_sample: None,
            metrics: None,
            run_metadata: RunMetadata {
                resolution: [64, 64],
                momentum_tol: 1e-9,
                mass_tol: 1e-12,
                cfl: 0.45,
                samples: 20,
                navier_stokes: false,
                timestamp_unix: 1_700_000_000,
                software_version: "0.1.0".into(),
            },
            extra: serde_json::Map::new(),
        }
    }

    #[test]
    fn record_round_trip_is_value_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let r = sample_record();
        r.save(&path).unwrap();
        let loaded = DatasetRecord::load(&path).unwrap();
        assert_eq!(r, loaded);
        // Second cycle stays identical too.
        loaded.save(&path).unwrap();
        assert_eq!(DatasetRecord::load(&path).unwrap(), loaded);
    }

    #[test]
    fn unknown_fields_are_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let mut raw = serde_json::to_value(sample_record()).unwrap();
        raw.as_object_mut()
            .unwrap()
            .insert("future_field".into(), serde_json::json!({"a": [1, 2.5]}));
        std::fs::write(&path, serde_json::to_string(&raw).unwrap()).unwrap();
        let loaded = DatasetRecord::load(&path).unwrap();
        assert!(loaded.extra.contains_key("future_field"));
        loaded.save(&path).unwrap();
        let reloaded = DatasetRecord::load(&path).unwrap();
        assert_eq!(reloaded.extra["future_field"], raw["future_field"]);
    }

    #[test]
    fn failed_status_round_trips() {
        let mut r = sample_record();
        r.status = RecordStatus::Failed {
            stage: "transport".into(),
            code: "stagnation".into(),
            message: "zero maximum face speed".into(),
        };
        r.alpha_l = None;
        r.alpha_t = None;
        let json = serde_json::to_string(&r).unwrap();
        let back: DatasetRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(r, back);
        assert!(!back.status.is_ok());
    }
}
