//! Geometry descriptors: interface metrics, volume metrics, connectivity
//! metrics, the fixed 21-entry metrics vector, and Pearson correlation.

mod graph;
mod pores;
mod surface;

pub use graph::{max_flow, oracle as graph_oracle, tortuosity, Axis};
pub use pores::{periodic_distance_sq, segment_pores, PoreSegmentation};
pub use surface::{box_counts, directionality, roughness_dimension, surface_area, Directionality};

use crate::geometry::PoreImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("axis is blocked: no void path connects the opposing boundaries")]
    BlockedAxis,
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("series length mismatch or too short: {0}")]
    BadSeries(String),
}

/// Sentinel stored for a blocked tortuosity; the validity flag marks the
/// record for exclusion from training.
pub const BLOCKED_TAU_SENTINEL: f64 = 1e6;

/// Porosity: connected-void pixel count over total pixels. Assumes a
/// preprocessed image (void already filtered to one component).
pub fn porosity(image: &PoreImage) -> f64 {
    image.porosity()
}

/// The fixed 21-entry descriptor, in order: tau_x, tau_y, F_x, F_y, N_pore,
/// theta_pore, sigma_pore, phi, R_dim, S, Gamma_d[8], sigma_d, gamma_d,
/// kappa_d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsVector {
    pub tau_x: f64,
    pub tau_y: f64,
    pub tau_x_blocked: bool,
    pub tau_y_blocked: bool,
    pub f_x: f64,
    pub f_y: f64,
    pub n_pore: f64,
    pub theta_pore: f64,
    pub sigma_pore: f64,
    pub phi: f64,
    pub r_dim: f64,
    pub r_dim_defined: bool,
    pub surface: f64,
    pub gamma: [f64; 8],
    pub gamma_defined: bool,
    pub sigma_d: f64,
    pub gamma_d: f64,
    pub kappa_d: f64,
}

pub const METRIC_LABELS: [&str; 21] = [
    "tau_x", "tau_y", "f_x", "f_y", "n_pore", "theta_pore", "sigma_pore", "phi", "r_dim",
    "surface", "gamma_e", "gamma_ne", "gamma_n", "gamma_nw", "gamma_w", "gamma_sw", "gamma_s",
    "gamma_se", "sigma_d", "gamma_d", "kappa_d",
];

impl MetricsVector {
    pub fn to_array(&self) -> [f64; 21] {
        let mut a = [0.0; 21];
        a[0] = self.tau_x;
        a[1] = self.tau_y;
        a[2] = self.f_x;
        a[3] = self.f_y;
        a[4] = self.n_pore;
        a[5] = self.theta_pore;
        a[6] = self.sigma_pore;
        a[7] = self.phi;
        a[8] = self.r_dim;
        a[9] = self.surface;
        a[10..18].copy_from_slice(&self.gamma);
        a[18] = self.sigma_d;
        a[19] = self.gamma_d;
        a[20] = self.kappa_d;
        a
    }

    /// True when no component carries a degeneracy flag; flagged vectors are
    /// excluded from training tables.
    pub fn fully_valid(&self) -> bool {
        !self.tau_x_blocked && !self.tau_y_blocked && self.r_dim_defined && self.gamma_defined
    }
}

/// Computes every metric family in the fixed order. Component errors become
/// flags (blocked axes, undefined interface metrics); this never panics on a
/// valid image.
pub fn assemble_metrics(image: &PoreImage) -> MetricsVector {
    let (tau_x, tau_x_blocked) = match tortuosity(image, Axis::X) {
        Ok(t) => (t, false),
        Err(_) => (BLOCKED_TAU_SENTINEL, true),
    };
    let (tau_y, tau_y_blocked) = match tortuosity(image, Axis::Y) {
        Ok(t) => (t, false),
        Err(_) => (BLOCKED_TAU_SENTINEL, true),
    };
    let f_x = max_flow(image, Axis::X) as f64;
    let f_y = max_flow(image, Axis::Y) as f64;
    let seg = segment_pores(image);
    let phi = porosity(image);
    let (r_dim, r_dim_defined) = roughness_dimension(image);
    let s = surface_area(image);
    let d = directionality(image);
    MetricsVector {
        tau_x,
        tau_y,
        tau_x_blocked,
        tau_y_blocked,
        f_x,
        f_y,
        n_pore: seg.n_pores as f64,
        theta_pore: seg.mean_size,
        sigma_pore: seg.std_size,
        phi,
        r_dim,
        r_dim_defined,
        surface: s,
        gamma: d.gamma,
        gamma_defined: d.defined,
        sigma_d: d.sigma,
        gamma_d: d.skewness,
        kappa_d: d.kurtosis,
    }
}

/// Pearson's correlation coefficient between two equal-length series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::BadSeries(format!(
            "lengths {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(MetricsError::BadSeries("need at least 2 samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::UndefinedCorrelation(
            "zero variance in a series".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
