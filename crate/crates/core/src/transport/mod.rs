//! Tracer advection through the longitudinally extended domain: explicit
//! first-order upwind two-point-flux finite volumes, constant-concentration
//! inlet, outflow outlet, tangential periodic wrap, no diffusive flux.

use crate::container::{read_arrays, write_arrays, ContainerError};
use crate::flow::FlowField;
use crate::geometry::PoreImage;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("geometry/flow dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("stagnant flow: zero maximum face speed")]
    Stagnation,
    #[error("evaluation window did not open/close within {max_steps} steps (mean concentration reached {reached:.4})")]
    Timeout { max_steps: usize, reached: f64 },
    #[error("window thresholds never reached in the recorded history")]
    WindowNotFound,
    #[error("invalid options: {0}")]
    BadOptions(String),
    #[error("snapshot container error: {0}")]
    Container(#[from] ContainerError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot index error: {0}")]
    BadIndex(String),
}

/// Base geometry replicated 3x along the flow direction with the unit-cell
/// flow field tiled onto it; periodic in the tangential (y) direction only.
#[derive(Clone, Debug)]
pub struct ExtendedDomain {
    pub geometry: PoreImage,
    pub base_width: usize,
    pub pixel_size: f64,
    /// x-velocities on the (3W+1) x H vertical faces, row-major
    /// (u[j*(3W+1)+i]); columns 0 and 3W are the inlet/outlet faces.
    pub u: Vec<f64>,
    /// y-velocities on the 3W x H horizontal faces (wraps in y).
    pub v: Vec<f64>,
}

impl ExtendedDomain {
    pub fn width(&self) -> usize {
        3 * self.base_width
    }

    pub fn height(&self) -> usize {
        self.geometry.height()
    }
}

/// Tiles the unit-cell geometry and flow three times along x.
pub fn build_extended(
    image: &PoreImage,
    field: &FlowField,
) -> Result<ExtendedDomain, TransportError> {
    if !field.matches(image) {
        return Err(TransportError::DimensionMismatch(format!(
            "geometry {}x{} (h={}) vs field {}x{} (h={})",
            image.width(),
            image.height(),
            image.pixel_size(),
            field.width,
            field.height,
            field.pixel_size
        )));
    }
    let (w, h) = (image.width(), image.height());
    let ew = 3 * w;
    let geometry = PoreImage::from_fn(ew, h, |x, y| image.is_void(x % w, y));
    let mut u = vec![0.0; (ew + 1) * h];
    let mut v = vec![0.0; ew * h];
    for j in 0..h {
        for i in 0..=ew {
            u[j * (ew + 1) + i] = field.u[j * w + i % w];
        }
        for i in 0..ew {
            v[j * ew + i] = field.v[j * w + i % w];
        }
    }
    Ok(ExtendedDomain {
        geometry,
        base_width: w,
        pixel_size: image.pixel_size(),
        u,
        v,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationSnapshot {
    pub time: f64,
    /// Cell-centered concentration on the 3W x H extended domain; exact zero
    /// in solid cells.
    pub c: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdvectOptions {
    /// CFL fraction of the face-speed stability limit (0, 1].
    pub cfl: f64,
    /// Window-open threshold on the center-block intrinsic mean.
    pub eps_in: f64,
    /// Window-close threshold: mean exceeds 1 - eps_out.
    pub eps_out: f64,
    pub max_steps: usize,
    /// Number of equally spaced snapshots inside the window.
    pub samples: usize,
}

impl Default for AdvectOptions {
    fn default() -> Self {
        AdvectOptions {
            cfl: 0.45,
            eps_in: 0.01,
            eps_out: 0.05,
            max_steps: 2_000_000,
            samples: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdvectionRun {
    pub snapshots: Vec<ConcentrationSnapshot>,
    pub window: (f64, f64),
    pub dt: f64,
    pub steps: usize,
    /// (time, center-block void-intrinsic mean) after every step.
    pub mean_history: Vec<(f64, f64)>,
}

/// One explicit upwind step. Each face flux is evaluated once and every cell
/// gathers its four fluxes in a fixed order (west, east, south, north), so
/// internal contributions cancel exactly and the update is bitwise
/// equivariant under tangential shifts. Returns (inlet, outlet) flux rates
/// in tracer volume per time.
pub fn step(domain: &ExtendedDomain, c: &mut [f64], dt: f64) -> (f64, f64) {
    let ew = domain.width();
    let h = domain.height();
    let hp = domain.pixel_size;
    let mut fx = vec![0.0; (ew + 1) * h];
    let mut fy = vec![0.0; ew * h];
    let mut inlet = 0.0;
    let mut outlet = 0.0;
    for j in 0..h {
        for i in 0..=ew {
            let uf = domain.u[j * (ew + 1) + i];
            if uf == 0.0 {
                continue;
            }
            let upwind = if uf > 0.0 {
                if i == 0 {
                    1.0 // inlet ghost held at c = 1
                } else {
                    c[j * ew + i - 1]
                }
            } else if i == ew {
                c[j * ew + i - 1] // outflow ghost copies the interior
            } else {
                c[j * ew + i]
            };
            let flux = uf * upwind;
            fx[j * (ew + 1) + i] = flux;
            if i == 0 {
                inlet += flux * hp;
            }
            if i == ew {
                outlet += flux * hp;
            }
        }
        for i in 0..ew {
            let vf = domain.v[j * ew + i];
            if vf == 0.0 {
                continue;
            }
            let js = (j + h - 1) % h;
            let upwind = if vf > 0.0 { c[js * ew + i] } else { c[j * ew + i] };
            fy[j * ew + i] = vf * upwind;
        }
    }
    let k = dt / hp;
    for j in 0..h {
        let jn = (j + 1) % h;
        for i in 0..ew {
            let cell = j * ew + i;
            let delta = fx[j * (ew + 1) + i] - fx[j * (ew + 1) + i + 1] + fy[cell] - fy[jn * ew + i];
            c[cell] += k * delta;
        }
    }
    (inlet, outlet)
}

/// Void-intrinsic mean concentration of the center block.
pub fn center_block_mean(domain: &ExtendedDomain, c: &[f64]) -> f64 {
    let ew = domain.width();
    let w = domain.base_width;
    let h = domain.height();
    let mut sum = 0.0;
    let mut count = 0usize;
    for j in 0..h {
        for i in w..2 * w {
            if domain.geometry.is_void(i, j) {
                sum += c[j * ew + i];
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Window bounds from a recorded (time, mean) history: opens at the first
/// mean > eps_in, closes at the first mean > 1 - eps_out.
pub fn detect_window(
    history: &[(f64, f64)],
    eps_in: f64,
    eps_out: f64,
) -> Result<(f64, f64), TransportError> {
    let start = history.iter().find(|(_, m)| *m > eps_in);
    let end = history.iter().find(|(_, m)| *m > 1.0 - eps_out);
    match (start, end) {
        (Some(&(t0, _)), Some(&(t1, _))) => Ok((t0, t1)),
        _ => Err(TransportError::WindowNotFound),
    }
}

/// Runs the advection with c(t=0) = 0 until the evaluation window closes,
/// then replays it to capture `samples` equally spaced snapshots inside the
/// window. Two passes keep memory flat and results deterministic.
pub fn advect(domain: &ExtendedDomain, opts: &AdvectOptions) -> Result<AdvectionRun, TransportError> {
    if !(opts.cfl > 0.0 && opts.cfl <= 1.0) {
        return Err(TransportError::BadOptions(format!("cfl {} not in (0, 1]", opts.cfl)));
    }
    if opts.samples == 0 {
        return Err(TransportError::BadOptions("samples must be >= 1".into()));
    }
    let max_speed = domain
        .u
        .iter()
        .chain(domain.v.iter())
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    if max_speed == 0.0 {
        return Err(TransportError::Stagnation);
    }
    let dt = opts.cfl * domain.pixel_size / max_speed;

    let ew = domain.width();
    let h = domain.height();
    let mut c = vec![0.0; ew * h];
    let mut history = Vec::new();
    let mut steps = 0usize;
    let close = 1.0 - opts.eps_out;
    loop {
        if steps >= opts.max_steps {
            let reached = history.last().map(|&(_, m)| m).unwrap_or(0.0);
            return Err(TransportError::Timeout {
                max_steps: opts.max_steps,
                reached,
            });
        }
        step(domain, &mut c, dt);
        steps += 1;
        let mean = center_block_mean(domain, &c);
        history.push((steps as f64 * dt, mean));
        if mean > close {
            break;
        }
    }
    let window = detect_window(&history, opts.eps_in, opts.eps_out)?;
    let sample_times: Vec<f64> = if opts.samples == 1 {
        vec![window.0]
    } else {
        (0..opts.samples)
            .map(|k| window.0 + k as f64 * (window.1 - window.0) / (opts.samples - 1) as f64)
            .collect()
    };

    // Replay and capture the first step state at or after each sample time.
    let mut c = vec![0.0; ew * h];
    let mut snapshots = Vec::with_capacity(opts.samples);
    let mut next = 0usize;
    for s in 1..=steps {
        step(domain, &mut c, dt);
        let t = s as f64 * dt;
        while next < sample_times.len() && t >= sample_times[next] - 1e-9 * dt {
            snapshots.push(ConcentrationSnapshot { time: t, c: c.clone() });
            next += 1;
        }
    }
    debug_assert_eq!(snapshots.len(), opts.samples);
    Ok(AdvectionRun {
        snapshots,
        window,
        dt,
        steps,
        mean_history: history,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotIndex {
    pub schema_version: u32,
    pub times: Vec<f64>,
    pub window: (f64, f64),
    pub dt: f64,
    pub files: Vec<String>,
}

/// Writes snapshots as one binary container per sample plus a JSON sidecar.
pub fn save_snapshots(
    dir: &Path,
    domain: &ExtendedDomain,
    run: &AdvectionRun,
) -> Result<(), TransportError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (k, snap) in run.snapshots.iter().enumerate() {
        let name = format!("snap_{k:03}.bin");
        write_arrays(
            &dir.join(&name),
            domain.width(),
            domain.height(),
            domain.pixel_size,
            &[&snap.c],
        )?;
        files.push(name);
    }
    let index = SnapshotIndex {
        schema_version: 1,
        times: run.snapshots.iter().map(|s| s.time).collect(),
        window: run.window,
        dt: run.dt,
        files,
    };
    let json = serde_json::to_string_pretty(&index).expect("index serializes");
    std::fs::write(dir.join("index.json"), json)?;
    Ok(())
}

pub fn load_snapshots(dir: &Path) -> Result<(SnapshotIndex, Vec<ConcentrationSnapshot>), TransportError> {
    let raw = std::fs::read_to_string(dir.join("index.json"))?;
    let index: SnapshotIndex =
        serde_json::from_str(&raw).map_err(|e| TransportError::BadIndex(e.to_string()))?;
    if index.files.len() != index.times.len() {
        return Err(TransportError::BadIndex(format!(
            "{} files vs {} times",
            index.files.len(),
            index.times.len()
        )));
    }
    let mut snaps = Vec::with_capacity(index.files.len());
    for (file, &time) in index.files.iter().zip(&index.times) {
        let a = read_arrays(&dir.join(file))?;
        if a.arrays.len() != 1 {
            return Err(TransportError::BadIndex(format!(
                "snapshot {file} carries {} arrays, expected 1",
                a.arrays.len()
            )));
        }
        snaps.push(ConcentrationSnapshot {
            time,
            c: a.arrays.into_iter().next().unwrap(),
        });
    }
    Ok((index, snaps))
}
