//! Batch orchestration: generation -> flow -> transport -> upscaling ->
//! metrics for single cases, shape-family sweeps, and seeded datasets with
//! JSON records, plus the training-table export and metric/dispersivity
//! correlation report.

mod configfile;
mod record;

pub use configfile::{ConfigError, ConfigFile};
pub use record::{
    DatasetRecord, Manifest, ManifestEntry, Provenance, RecordStatus, RunMetadata, SampleRow,
    SCHEMA_VERSION,
};

use crate::flow::{mean_face_speed, solve_flow, FluidProps, SolverOptions};
use crate::geometry::{
    filter_periodic_connectivity, generate, rasterize_shape, save_pbm, GeneratorKind,
    GeneratorSpec, PbmFormat, PoreImage, ShapeKind, ShapeSpec,
};
use crate::metrics::{assemble_metrics, pearson, METRIC_LABELS};
use crate::transport::{advect, build_extended, AdvectOptions};
use crate::upscaling::extract_dispersivities;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("case {id} failed at {stage}: {message}")]
    CaseFailed {
        id: String,
        stage: String,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    BadManifest(String),
    #[error("table error: {0}")]
    BadTable(String),
    #[error("metrics error: {0}")]
    Metrics(#[from] crate::metrics::MetricsError),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub resolution: usize,
    pub fluid: FluidProps,
    pub solver: SolverOptions,
    pub advect: AdvectOptions,
    /// Flag the case as stagnant when |v_bar| falls below this fraction of
    /// the open-channel velocity scale |q| L^2 / (12 mu).
    pub stagnation_rel: f64,
    pub workers: usize,
    /// Persist per-sample closure vectors in the record.
    pub keep_per_sample: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            resolution: 64,
            fluid: FluidProps::default(),
            solver: SolverOptions::default(),
            advect: AdvectOptions::default(),
            stagnation_rel: 1e-9,
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4),
            keep_per_sample: true,
        }
    }
}

#[derive(Clone, Debug)]
pub enum CaseInput {
    /// Pre-built image (preprocessing still applied) with its provenance.
    Image(PoreImage, Provenance),
    Generator(GeneratorSpec),
    Shape(ShapeSpec),
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn metadata(config: &RunConfig) -> RunMetadata {
    RunMetadata {
        resolution: [config.resolution, config.resolution],
        momentum_tol: config.solver.momentum_tol,
        mass_tol: config.solver.mass_tol,
        cfl: config.advect.cfl,
        samples: config.advect.samples,
        navier_stokes: config.solver.navier_stokes,
        timestamp_unix: now_unix(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Runs the full pipeline for one case. Failures are flagged in the record
/// (with the failing stage) rather than returned as errors; `out_dir`, when
/// given, receives `{id}.pbm` and `{id}.json`.
pub fn run_case(
    id: &str,
    input: &CaseInput,
    config: &RunConfig,
    out_dir: Option<&Path>,
) -> DatasetRecord {
    let provenance = match input {
        CaseInput::Image(_, p) => p.clone(),
        CaseInput::Generator(spec) => Provenance::Generator { spec: *spec },
        CaseInput::Shape(spec) => Provenance::Shape { spec: *spec },
    };
    let mut rec = DatasetRecord {
        schema_version: SCHEMA_VERSION,
        id: id.to_string(),
        geometry_path: String::new(),
        provenance,
        status: RecordStatus::Ok,
        alpha_l: None,
        alpha_t: None,
        v_bar: None,
        window: None,
        clamp_stats: None,
        per_sample: None,
        metrics: None,
        run_metadata: metadata(config),
        extra: serde_json::Map::new(),
    };
    let fail = |rec: &mut DatasetRecord, stage: &str, code: &str, message: String| {
        rec.status = RecordStatus::Failed {
            stage: stage.to_string(),
            code: code.to_string(),
            message,
        };
    };

    // Geometry stage: materialize and preprocess.
    let image = match input {
        CaseInput::Image(img, _) => match filter_periodic_connectivity(img) {
            Ok((filtered, _removed)) => Some(filtered),
            Err(e) => {
                fail(&mut rec, "geometry", "degenerate", e.to_string());
                None
            }
        },
        CaseInput::Generator(spec) => match generate(spec, config.resolution) {
            Ok(img) => Some(img),
            Err(e) => {
                fail(&mut rec, "geometry", "generation", e.to_string());
                None
            }
        },
        CaseInput::Shape(spec) => match rasterize_shape(spec, config.resolution) {
            Ok(img) => match filter_periodic_connectivity(&img) {
                Ok((filtered, _)) => Some(filtered),
                Err(e) => {
                    fail(&mut rec, "geometry", "degenerate", e.to_string());
                    None
                }
            },
            Err(e) => {
                fail(&mut rec, "geometry", "shape", e.to_string());
                None
            }
        },
    };
    let Some(image) = image else {
        persist(&rec, out_dir, None);
        return rec;
    };

    rec.metrics = Some(assemble_metrics(&image));

    let field = match solve_flow(&image, &config.fluid, &config.solver) {
        Ok((field, _report)) => field,
        Err(e) => {
            let code = match e {
                crate::flow::FlowError::NoDrag => "no_drag",
                crate::flow::FlowError::Convergence { .. } => "convergence",
                _ => "flow",
            };
            fail(&mut rec, "flow", code, e.to_string());
            persist(&rec, out_dir, Some(&image));
            return rec;
        }
    };

    // Stagnation guard: blocked geometries recirculate with near-zero mean
    // velocity; flag them instead of waiting out the advection budget.
    let q = config.fluid.body_force;
    let open_channel_scale =
        q.norm() / (12.0 * config.fluid.viscosity) + f64::MIN_POSITIVE;
    let v_bar_early = crate::upscaling::average_velocity(&image, &field);
    if v_bar_early.norm() <= config.stagnation_rel * open_channel_scale
        || mean_face_speed(&image, &field) == 0.0
    {
        fail(
            &mut rec,
            "transport",
            "stagnation",
            format!("averaged speed {:.3e} below stagnation threshold", v_bar_early.norm()),
        );
        persist(&rec, out_dir, Some(&image));
        return rec;
    }

    let domain = match build_extended(&image, &field) {
        Ok(d) => d,
        Err(e) => {
            fail(&mut rec, "transport", "extend", e.to_string());
            persist(&rec, out_dir, Some(&image));
            return rec;
        }
    };
    let run = match advect(&domain, &config.advect) {
        Ok(r) => r,
        Err(e) => {
            let code = match e {
                crate::transport::TransportError::Stagnation => "stagnation",
                crate::transport::TransportError::Timeout { .. } => "timeout",
                _ => "transport",
            };
            fail(&mut rec, "transport", code, e.to_string());
            persist(&rec, out_dir, Some(&image));
            return rec;
        }
    };
    rec.window = Some(run.window);

    match extract_dispersivities(&image, &field, &domain, &run.snapshots) {
        Ok(result) => {
            rec.alpha_l = Some(result.pair.alpha_l);
            rec.alpha_t = Some(result.pair.alpha_t);
            rec.v_bar = Some(result.v_bar);
            rec.clamp_stats = Some(result.stats);
            if config.keep_per_sample {
                rec.per_sample = Some(DatasetRecord::sample_rows(
                    &result.samples,
                    &result.per_sample,
                ));
            }
        }
        Err(e) => {
            let code = match e {
                crate::upscaling::UpscalingError::Stagnation => "stagnation",
                crate::upscaling::UpscalingError::DegenerateGradient => "degenerate_gradient",
                _ => "upscaling",
            };
            fail(&mut rec, "upscaling", code, e.to_string());
        }
    }
    persist(&rec, out_dir, Some(&image));
    rec
}

fn persist(rec: &DatasetRecord, out_dir: Option<&Path>, image: Option<&PoreImage>) {
    let Some(dir) = out_dir else { return };
    let _ = std::fs::create_dir_all(dir);
    let mut rec = rec.clone();
    if let Some(img) = image {
        let name = format!("{}.pbm", rec.id);
        if save_pbm(img, &dir.join(&name), PbmFormat::Binary).is_ok() {
            rec.geometry_path = name;
        }
    }
    let _ = rec.save(&dir.join(format!("{}.json", rec.id)));
}

/// Fail-fast variant for single cases.
pub fn run_case_strict(
    id: &str,
    input: &CaseInput,
    config: &RunConfig,
    out_dir: Option<&Path>,
) -> Result<DatasetRecord, PipelineError> {
    let rec = run_case(id, input, config, out_dir);
    match &rec.status {
        RecordStatus::Ok => Ok(rec),
        RecordStatus::Failed { stage, message, .. } => Err(PipelineError::CaseFailed {
            id: id.to_string(),
            stage: stage.clone(),
            message: message.clone(),
        }),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSpec {
    pub family: ShapeKind,
    pub sizes: Vec<f64>,
    pub aspects: Vec<f64>,
    pub rotations: Vec<f64>,
}

impl SweepSpec {
    pub fn new(family: ShapeKind, sizes: Vec<f64>) -> Self {
        SweepSpec {
            family,
            sizes,
            aspects: vec![1.0],
            rotations: vec![0.0],
        }
    }
}

/// Ordered sweep over the size x aspect x rotation grid. Returns the records
/// plus a CSV summary of (parameters, alpha_L, alpha_T).
pub fn run_sweep(
    spec: &SweepSpec,
    config: &RunConfig,
    out_dir: Option<&Path>,
) -> Result<(Vec<DatasetRecord>, String), PipelineError> {
    if spec.sizes.is_empty() || spec.aspects.is_empty() || spec.rotations.is_empty() {
        return Err(PipelineError::Validation(
            "sweep grids must be non-empty".into(),
        ));
    }
    let mut records = Vec::new();
    let mut csv = String::from("id,size,aspect,rotation_deg,alpha_l,alpha_t,status\n");
    let mut idx = 0usize;
    for &size in &spec.sizes {
        for &aspect in &spec.aspects {
            for &rot in &spec.rotations {
                let shape = ShapeSpec {
                    kind: spec.family,
                    size,
                    aspect,
                    rotation_deg: rot,
                };
                let id = format!("{:?}-{idx:03}", spec.family).to_lowercase();
                let rec = run_case(&id, &CaseInput::Shape(shape), config, out_dir);
                let (al, at) = (
                    rec.alpha_l.map(|v| v.to_string()).unwrap_or_default(),
                    rec.alpha_t.map(|v| v.to_string()).unwrap_or_default(),
                );
                let status = if rec.status.is_ok() { "ok" } else { "failed" };
                csv.push_str(&format!("{id},{size},{aspect},{rot},{al},{at},{status}\n"));
                records.push(rec);
                idx += 1;
            }
        }
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.csv"), &csv)?;
    }
    Ok((records, csv))
}

/// Deterministic per-case seed from the master seed and the case id
/// (FNV-1a over the id, mixed with splitmix64).
pub fn derive_seed(master: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub const DATASET_KINDS: [GeneratorKind; 3] = [
    GeneratorKind::Perlin,
    GeneratorKind::Fractal,
    GeneratorKind::Voronoi,
];

/// Generator spec for one dataset case: knob ranges are drawn from the
/// case's own seeded stream, so the whole dataset is a pure function of
/// (master seed, id).
pub fn dataset_case_spec(kind: GeneratorKind, master_seed: u64, id: &str) -> GeneratorSpec {
    let seed = derive_seed(master_seed, id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target_porosity = rng.random_range(0.55..0.80);
    let scale = rng.random_range(3..=6);
    let octaves = rng.random_range(3..=5);
    let points = rng.random_range(16..=40);
    GeneratorSpec {
        kind,
        seed: rng.random(),
        target_porosity,
        scale,
        octaves,
        points,
    }
}

/// Builds `n_per_kind` cases per generator kind under `out_dir`, in parallel
/// over a bounded worker pool. Failures are flagged records, never dropped.
pub fn build_dataset(
    n_per_kind: usize,
    master_seed: u64,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<Manifest, PipelineError> {
    if n_per_kind == 0 {
        return Err(PipelineError::Validation("n_per_kind must be >= 1".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let ids: Vec<(GeneratorKind, String)> = DATASET_KINDS
        .iter()
        .flat_map(|&kind| {
            (0..n_per_kind).map(move |i| {
                (kind, format!("{kind:?}-{i:04}").to_lowercase())
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| PipelineError::Validation(format!("worker pool: {e}")))?;
    let records: Vec<DatasetRecord> = pool.install(|| {
        use rayon::prelude::*;
        ids.par_iter()
            .map(|(kind, id)| {
                let spec = dataset_case_spec(*kind, master_seed, id);
                run_case(id, &CaseInput::Generator(spec), config, Some(out_dir))
            })
            .collect()
    });
    let successful = records.iter().filter(|r| r.status.is_ok()).count();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        master_seed,
        n_per_kind,
        successful,
        flagged: records.len() - successful,
        records: records
            .iter()
            .map(|r| ManifestEntry {
                id: r.id.clone(),
                record_file: format!("{}.json", r.id),
                ok: r.status.is_ok(),
            })
            .collect(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Loads every record listed in a dataset manifest, ordered by id.
pub fn load_dataset(dir: &Path) -> Result<Vec<DatasetRecord>, PipelineError> {
    let manifest = Manifest::load(&dir.join("manifest.json"))
        .map_err(|e| PipelineError::BadManifest(e.to_string()))?;
    let mut entries = manifest.records.clone();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = Vec::with_capacity(entries.len());
    for e in &entries {
        let rec = DatasetRecord::load(&dir.join(&e.record_file))
            .map_err(|err| PipelineError::BadManifest(format!("{}: {err}", e.record_file)))?;
        out.push(rec);
    }
    Ok(out)
}

/// One row per unflagged record: 21 metric columns, alpha_L, alpha_T, and
/// the geometry path (24 columns), ordered by id.
pub fn export_training_table(dir: &Path) -> Result<String, PipelineError> {
    let records = load_dataset(dir)?;
    let usable: Vec<&DatasetRecord> = records
        .iter()
        .filter(|r| r.status.is_ok())
        .filter(|r| r.metrics.as_ref().is_some_and(|m| m.fully_valid()))
        .filter(|r| r.alpha_l.is_some() && r.alpha_t.is_some())
        .collect();
    if usable.is_empty() {
        return Err(PipelineError::BadTable("no usable records".into()));
    }
    let mut csv = String::new();
    csv.push_str(&METRIC_LABELS.join(","));
    csv.push_str(",alpha_l,alpha_t,geometry\n");
    for r in usable {
        let m = r.metrics.as_ref().unwrap().to_array();
        let row: Vec<String> = m.iter().map(|v| v.to_string()).collect();
        csv.push_str(&row.join(","));
        csv.push_str(&format!(
            ",{},{},{}\n",
            r.alpha_l.unwrap(),
            r.alpha_t.unwrap(),
            r.geometry_path
        ));
    }
    Ok(csv)
}

/// Parsed training table: metric rows, targets, geometry paths.
pub struct TrainingTable {
    pub features: Vec<[f64; 21]>,
    pub targets: Vec<[f64; 2]>,
    pub geometries: Vec<String>,
}

pub fn parse_training_table(csv: &str) -> Result<TrainingTable, PipelineError> {
    let mut lines = csv.lines();
    let header = lines
        .next()
        .ok_or_else(|| PipelineError::BadTable("empty table".into()))?;
    let expected_cols = METRIC_LABELS.len() + 3;
    if header.split(',').count() != expected_cols {
        return Err(PipelineError::BadTable(format!(
            "expected {expected_cols} columns, found {}",
            header.split(',').count()
        )));
    }
    let mut table = TrainingTable {
        features: Vec::new(),
        targets: Vec::new(),
        geometries: Vec::new(),
    };
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != expected_cols {
            return Err(PipelineError::BadTable(format!(
                "row {}: {} columns",
                lineno + 2,
                cells.len()
            )));
        }
        let mut feats = [0.0; 21];
        for (k, f) in feats.iter_mut().enumerate() {
            *f = cells[k]
                .parse()
                .map_err(|e| PipelineError::BadTable(format!("row {}: {e}", lineno + 2)))?;
        }
        let al: f64 = cells[21]
            .parse()
            .map_err(|e| PipelineError::BadTable(format!("row {}: {e}", lineno + 2)))?;
        let at: f64 = cells[22]
            .parse()
            .map_err(|e| PipelineError::BadTable(format!("row {}: {e}", lineno + 2)))?;
        table.features.push(feats);
        table.targets.push([al, at]);
        table.geometries.push(cells[23].to_string());
    }
    Ok(table)
}

/// Pearson correlations of each metric against alpha_L and alpha_T, overall
/// and per generator kind. Rows are sorted by |rho| against the requested
/// target; undefined correlations print as empty cells.
pub fn correlate(dir: &Path, target_alpha_t: bool) -> Result<String, PipelineError> {
    let records = load_dataset(dir)?;
    let usable: Vec<&DatasetRecord> = records
        .iter()
        .filter(|r| r.status.is_ok())
        .filter(|r| r.metrics.as_ref().is_some_and(|m| m.fully_valid()))
        .filter(|r| r.alpha_l.is_some() && r.alpha_t.is_some())
        .collect();
    if usable.len() < 2 {
        return Err(PipelineError::BadTable(
            "need at least 2 usable records to correlate".into(),
        ));
    }
    let kind_of = |r: &DatasetRecord| -> Option<GeneratorKind> {
        match &r.provenance {
            Provenance::Generator { spec } => Some(spec.kind),
            _ => None,
        }
    };
    let series = |recs: &[&DatasetRecord], k: usize| -> Vec<f64> {
        recs.iter()
            .map(|r| r.metrics.as_ref().unwrap().to_array()[k])
            .collect()
    };
    let alphas = |recs: &[&DatasetRecord], t: bool| -> Vec<f64> {
        recs.iter()
            .map(|r| if t { r.alpha_t.unwrap() } else { r.alpha_l.unwrap() })
            .collect()
    };
    let rho_cell = |x: &[f64], y: &[f64]| -> String {
        pearson(x, y).map(|r| format!("{r}")).unwrap_or_default()
    };
    let mut header = String::from("metric,rho_alpha_l,rho_alpha_t");
    for kind in DATASET_KINDS {
        let k = format!("{kind:?}").to_lowercase();
        header.push_str(&format!(",rho_alpha_l_{k},rho_alpha_t_{k}"));
    }
    let mut rows: Vec<(f64, String)> = Vec::new();
    for (k, label) in METRIC_LABELS.iter().enumerate() {
        let x = series(&usable, k);
        let yl = alphas(&usable, false);
        let yt = alphas(&usable, true);
        let mut row = format!("{label},{},{}", rho_cell(&x, &yl), rho_cell(&x, &yt));
        for kind in DATASET_KINDS {
            let sub: Vec<&DatasetRecord> = usable
                .iter()
                .copied()
                .filter(|r| kind_of(r) == Some(kind))
                .collect();
            if sub.len() < 2 {
                row.push_str(",,");
            } else {
                let xs = series(&sub, k);
                row.push_str(&format!(
                    ",{},{}",
                    rho_cell(&xs, &alphas(&sub, false)),
                    rho_cell(&xs, &alphas(&sub, true))
                ));
            }
        }
        let sort_key = pearson(&x, &alphas(&usable, target_alpha_t))
            .map(|r| r.abs())
            .unwrap_or(-1.0);
        rows.push((sort_key, row));
    }
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut csv = header;
    csv.push('\n');
    for (_, row) in rows {
        csv.push_str(&row);
        csv.push('\n');
    }
    Ok(csv)
}
