//! Volume averaging of pore-scale fields, assembly of the three closure
//! vectors (averaged velocity, negative averaged-concentration gradient,
//! perturbation product), least-squares-optimal dispersivities under the
//! semidefiniteness constraints, and the velocity-dependent dispersion
//! tensor they parameterize.
//!
//! All averages are superficial: fields are zero-extended into solid cells
//! and divided by the full averaging volume.

use crate::flow::{interpolate_to_centers, FlowField};
use crate::geometry::PoreImage;
use crate::transport::{ConcentrationSnapshot, ExtendedDomain};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UpscalingError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty field")]
    EmptyField,
    #[error("stagnant averaged velocity (zero norm)")]
    Stagnation,
    #[error("degenerate longitudinal gradient: |(-grad c) . v_hat| below threshold")]
    DegenerateGradient,
    #[error("no samples to aggregate")]
    NoSamples,
}

/// Relative threshold below which the transversal denominator counts as the
/// symmetric 0/0 limit and alpha_T is pinned to zero with a flag. Mirror
/// symmetry survives the solve to rounding (~1e-15); genuine asymmetry sits
/// many orders above this.
const TRANSVERSAL_DEGENERACY_REL: f64 = 1e-12;

/// Relative threshold for the longitudinal denominator (an error, not a
/// flag: without a longitudinal gradient there is nothing to fit).
const LONGITUDINAL_DEGENERACY_REL: f64 = 1e-14;

/// The three averaged vectors entering the dispersivity fit at one sample
/// time.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct UpscaledSample {
    pub v_bar: Vec2,
    pub neg_grad_c: Vec2,
    pub pert: Vec2,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampFlags {
    /// Raw alpha_T was negative and clamped to 0.
    pub t_negative: bool,
    /// alpha_T was capped down to alpha_L.
    pub t_capped: bool,
    /// Raw alpha_L was negative and clamped to 0.
    pub l_negative: bool,
    /// Transversal denominator was in the symmetric 0/0 regime.
    pub t_degenerate: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DispersivityPair {
    pub alpha_l: f64,
    pub alpha_t: f64,
    pub flags: ClampFlags,
}

/// 2x2 symmetric dispersion tensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionTensor {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl DispersionTensor {
    pub fn zero() -> Self {
        DispersionTensor { xx: 0.0, xy: 0.0, yy: 0.0 }
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }
}

/// D = (alpha_L - alpha_T) v v^T / |v| + alpha_T |v| I; zero velocity gives
/// the zero tensor by convention.
pub fn build_tensor(v_bar: Vec2, alphas: &DispersivityPair) -> DispersionTensor {
    let n = v_bar.norm();
    if n == 0.0 {
        return DispersionTensor::zero();
    }
    let k = (alphas.alpha_l - alphas.alpha_t) / n;
    DispersionTensor {
        xx: k * v_bar.x * v_bar.x + alphas.alpha_t * n,
        xy: k * v_bar.x * v_bar.y,
        yy: k * v_bar.y * v_bar.y + alphas.alpha_t * n,
    }
}

/// Moving-window mean of an extended-domain cell field over windows the size
/// and shape of the unit cell. The tangential extent covers one full period,
/// so the averaged field depends on x only; it is evaluated for the center
/// block plus one column on each side (the gradient stencil needs them).
#[derive(Clone, Debug)]
pub struct ConvAverage {
    pub base_width: usize,
    pub height: usize,
    /// values[k] is the window mean centered at extended column x0 + k.
    pub values: Vec<f64>,
    pub x0: usize,
}

impl ConvAverage {
    /// Window mean centered at extended-domain cell (x, y); constant in y.
    pub fn at(&self, x: usize, _y: usize) -> f64 {
        self.values[x - self.x0]
    }

    /// Builds directly from per-column values (test support).
    pub fn from_columns(base_width: usize, height: usize, x0: usize, values: Vec<f64>) -> Self {
        ConvAverage { base_width, height, values, x0 }
    }
}

/// Unweighted window mean of `field` (3W x H extended grid, row-major) over
/// a W x H window centered at every center-block cell (and one column beyond
/// each side). Even window widths take the half-open span [x - W/2,
/// x + W/2 - 1]; odd widths are exactly centered.
pub fn convolutional_average(
    field: &[f64],
    ext_width: usize,
    height: usize,
    base_width: usize,
) -> Result<ConvAverage, UpscalingError> {
    if ext_width != 3 * base_width || field.len() != ext_width * height {
        return Err(UpscalingError::DimensionMismatch(format!(
            "field len {} vs {}x{} (base {})",
            field.len(),
            ext_width,
            height,
            base_width
        )));
    }
    if base_width < 2 {
        return Err(UpscalingError::DimensionMismatch(
            "base width must be >= 2".into(),
        ));
    }
    let w = base_width;
    let mut colsum = vec![0.0; ext_width];
    for (i, s) in colsum.iter_mut().enumerate() {
        *s = (0..height).map(|j| field[j * ext_width + i]).sum();
    }
    let x0 = w - 1;
    let count = (w * height) as f64;
    let lo_off = w / 2;
    let mut values = Vec::with_capacity(w + 2);
    for x in x0..=(2 * w) {
        let lo = x - lo_off;
        let sum: f64 = colsum[lo..lo + w].iter().sum();
        values.push(sum / count);
    }
    Ok(ConvAverage {
        base_width: w,
        height,
        values,
        x0,
    })
}

/// Single unweighted mean over a cell grid (superficial unit average).
pub fn unit_average(field: &[f64]) -> Result<f64, UpscalingError> {
    if field.is_empty() {
        return Err(UpscalingError::EmptyField);
    }
    Ok(field.iter().sum::<f64>() / field.len() as f64)
}

/// Superficial unit average of the cell-centered velocity over the unit
/// cell (solid cells contribute zero).
pub fn average_velocity(image: &PoreImage, field: &FlowField) -> Vec2 {
    let centers = interpolate_to_centers(image, field);
    let n = centers.len() as f64;
    let mut sum = Vec2::ZERO;
    for c in centers {
        sum += c;
    }
    sum.scale(1.0 / n)
}

/// Negative gradient of the convolutionally averaged concentration, unit
/// averaged over the center block. Central differences with spacing h; the
/// tangential component vanishes identically because the averaging window
/// spans one full period in y.
pub fn averaged_gradient(conv: &ConvAverage, pixel_size: f64) -> Vec2 {
    let w = conv.base_width;
    let mut ddx_sum = 0.0;
    for x in w..2 * w {
        ddx_sum += (conv.at(x + 1, 0) - conv.at(x - 1, 0)) / (2.0 * pixel_size);
    }
    let ddx = ddx_sum / w as f64;
    Vec2::new(-ddx, 0.0)
}

/// Superficial unit average of the pointwise perturbation product over the
/// center block: (v_center - v_bar)(c - <c>_conv), with v = 0 and c = 0 in
/// solid cells (zero extension).
pub fn perturbation_product(
    domain: &ExtendedDomain,
    centers: &[Vec2],
    c: &[f64],
    conv: &ConvAverage,
    v_bar: Vec2,
) -> Result<Vec2, UpscalingError> {
    let w = domain.base_width;
    let h = domain.height();
    let ew = domain.width();
    if centers.len() != w * h || c.len() != ew * h {
        return Err(UpscalingError::DimensionMismatch(format!(
            "centers {} vs {}, c {} vs {}",
            centers.len(),
            w * h,
            c.len(),
            ew * h
        )));
    }
    let mut sum = Vec2::ZERO;
    for j in 0..h {
        for x in w..2 * w {
            let v_center = centers[j * w + (x - w)];
            let vtil = v_center - v_bar;
            let ctil = c[j * ew + x] - conv.at(x, j);
            sum += vtil.scale(ctil);
        }
    }
    Ok(sum.scale(1.0 / (w * h) as f64))
}

/// Optimal dispersivities for one sample: project the perturbation product
/// and gradient onto the averaged-velocity frame and divide, then apply the
/// semidefiniteness clamps (alpha_T >= 0, alpha_T <= alpha_L, alpha_L >= 0).
pub fn fit_alphas(sample: &UpscaledSample) -> Result<DispersivityPair, UpscalingError> {
    let n = sample.v_bar.norm();
    if n == 0.0 {
        return Err(UpscalingError::Stagnation);
    }
    let vhat = sample.v_bar.scale(1.0 / n);
    let vperp = vhat.perp();
    let g = sample.neg_grad_c;
    let gnorm = g.norm();
    let denom_l = g.dot(vhat);
    if gnorm == 0.0 || denom_l.abs() < LONGITUDINAL_DEGENERACY_REL * gnorm {
        return Err(UpscalingError::DegenerateGradient);
    }
    let mut flags = ClampFlags::default();
    let mut alpha_l = sample.pert.dot(vhat) / (n * denom_l);
    let denom_t = g.dot(vperp);
    let mut alpha_t = if denom_t.abs() < TRANSVERSAL_DEGENERACY_REL * gnorm {
        flags.t_degenerate = true;
        0.0
    } else {
        sample.pert.dot(vperp) / (n * denom_t)
    };
    if alpha_t < 0.0 {
        alpha_t = 0.0;
        flags.t_negative = true;
    }
    if alpha_l < 0.0 {
        alpha_l = 0.0;
        flags.l_negative = true;
    }
    if alpha_t > alpha_l {
        alpha_t = alpha_l;
        flags.t_capped = true;
    }
    Ok(DispersivityPair { alpha_l, alpha_t, flags })
}

/// Arithmetic mean of the per-sample dispersivities, with the constraints
/// re-checked on the means (clamped per-sample values keep the order, so
/// re-clamping only fires on rounding).
pub fn aggregate_alphas(pairs: &[DispersivityPair]) -> Result<DispersivityPair, UpscalingError> {
    if pairs.is_empty() {
        return Err(UpscalingError::NoSamples);
    }
    let n = pairs.len() as f64;
    let mut alpha_l = pairs.iter().map(|p| p.alpha_l).sum::<f64>() / n;
    let mut alpha_t = pairs.iter().map(|p| p.alpha_t).sum::<f64>() / n;
    let mut flags = ClampFlags::default();
    if alpha_t < 0.0 {
        alpha_t = 0.0;
        flags.t_negative = true;
    }
    if alpha_l < 0.0 {
        alpha_l = 0.0;
        flags.l_negative = true;
    }
    if alpha_t > alpha_l {
        alpha_t = alpha_l;
        flags.t_capped = true;
    }
    Ok(DispersivityPair { alpha_l, alpha_t, flags })
}

/// Fraction of samples on which each clamp fired.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ClampStats {
    pub samples: usize,
    pub frac_t_negative: f64,
    pub frac_t_capped: f64,
    pub frac_l_negative: f64,
    pub frac_t_degenerate: f64,
}

impl ClampStats {
    pub fn from_pairs(pairs: &[DispersivityPair]) -> Self {
        let n = pairs.len();
        if n == 0 {
            return ClampStats::default();
        }
        let frac = |f: fn(&ClampFlags) -> bool| {
            pairs.iter().filter(|p| f(&p.flags)).count() as f64 / n as f64
        };
        ClampStats {
            samples: n,
            frac_t_negative: frac(|f| f.t_negative),
            frac_t_capped: frac(|f| f.t_capped),
            frac_l_negative: frac(|f| f.l_negative),
            frac_t_degenerate: frac(|f| f.t_degenerate),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UpscaleResult {
    pub pair: DispersivityPair,
    pub v_bar: Vec2,
    pub samples: Vec<UpscaledSample>,
    pub per_sample: Vec<DispersivityPair>,
    pub stats: ClampStats,
}

/// Full closure extraction for one run: builds the three vectors for every
/// snapshot, fits per-sample dispersivities, and averages them.
pub fn extract_dispersivities(
    image: &PoreImage,
    field: &FlowField,
    domain: &ExtendedDomain,
    snapshots: &[ConcentrationSnapshot],
) -> Result<UpscaleResult, UpscalingError> {
    if snapshots.is_empty() {
        return Err(UpscalingError::NoSamples);
    }
    let centers = interpolate_to_centers(image, field);
    let v_bar = average_velocity(image, field);
    let w = image.width();
    let h = image.height();
    let mut samples = Vec::with_capacity(snapshots.len());
    let mut per_sample = Vec::with_capacity(snapshots.len());
    for snap in snapshots {
        let conv = convolutional_average(&snap.c, 3 * w, h, w)?;
        let neg_grad_c = averaged_gradient(&conv, image.pixel_size());
        let pert = perturbation_product(domain, &centers, &snap.c, &conv, v_bar)?;
        let sample = UpscaledSample {
            v_bar,
            neg_grad_c,
            pert,
            time: snap.time,
        };
        per_sample.push(fit_alphas(&sample)?);
        samples.push(sample);
    }
    let pair = aggregate_alphas(&per_sample)?;
    let stats = ClampStats::from_pairs(&per_sample);
    Ok(UpscaleResult {
        pair,
        v_bar,
        samples,
        per_sample,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(l: f64, t: f64) -> DispersivityPair {
        DispersivityPair {
            alpha_l: l,
            alpha_t: t,
            flags: ClampFlags::default(),
        }
    }

    /// Direct summation oracle for the window mean on one odd-width case:
    /// the mean of a field linear in x over the window support equals the
    /// value at the window center.
    #[test]
    fn conv_average_linear_field_odd_width() {
        let (w, h) = (5usize, 5usize);
        let ew = 3 * w;
        let a = 0.7;
        let field: Vec<f64> = (0..ew * h).map(|k| a * (k % ew) as f64).collect();
        let conv = convolutional_average(&field, ew, h, w).unwrap();
        for x in (w - 1)..=(2 * w) {
            // Naive double-loop oracle over the centered window.
            let mut s = 0.0;
            for dx in 0..w {
                let col = x - w / 2 + dx;
                for j in 0..h {
                    s += field[j * ew + col];
                }
            }
            let oracle = s / (w * h) as f64;
            assert!((conv.at(x, 0) - oracle).abs() < 1e-12);
            assert!((conv.at(x, 0) - a * x as f64).abs() < 1e-10, "center value");
        }
    }

    #[test]
    fn conv_average_constant_and_all_void() {
        let (w, h) = (6usize, 4usize);
        let field = vec![3.25; 3 * w * h];
        let conv = convolutional_average(&field, 3 * w, h, w).unwrap();
        for x in (w - 1)..=(2 * w) {
            assert_eq!(conv.at(x, 2), 3.25);
        }
        // All-void domain with c = 1 everywhere averages to exactly 1.
        let ones = vec![1.0; 3 * w * h];
        let conv = convolutional_average(&ones, 3 * w, h, w).unwrap();
        assert_eq!(conv.at(w, 0), 1.0);
    }

    /// Even window widths use the half-open centered span; check against the
    /// naive oracle.
    #[test]
    fn conv_average_even_width_matches_naive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (w, h) = (6usize, 3usize);
        let ew = 3 * w;
        let field: Vec<f64> = (0..ew * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let conv = convolutional_average(&field, ew, h, w).unwrap();
        for x in (w - 1)..=(2 * w) {
            let lo = x - w / 2;
            let mut s = 0.0;
            for col in lo..lo + w {
                for j in 0..h {
                    s += field[j * ew + col];
                }
            }
            assert!((conv.at(x, 1) - s / (w * h) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_average_trivials() {
        assert_eq!(unit_average(&[7.5; 12]).unwrap(), 7.5);
        assert_eq!(unit_average(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        // Checkerboard of 0/2 on even dims.
        let checker: Vec<f64> = (0..16)
            .map(|k| if (k / 4 + k % 4) % 2 == 0 { 0.0 } else { 2.0 })
            .collect();
        assert_eq!(unit_average(&checker).unwrap(), 1.0);
        assert!(matches!(unit_average(&[]), Err(UpscalingError::EmptyField)));
    }

    #[test]
    fn averaged_gradient_constant_and_linear() {
        let conv = ConvAverage::from_columns(5, 4, 4, vec![2.0; 7]);
        assert_eq!(averaged_gradient(&conv, 0.1), Vec2::ZERO);
        // Averaged field a*x -> -grad = (-a, 0); central differences are
        // exact on linear fields.
        let a = 1.3;
        let h = 0.2;
        let cols: Vec<f64> = (4..=10).map(|x| a * x as f64 * h).collect();
        let conv = ConvAverage::from_columns(5, 4, 4, cols);
        let g = averaged_gradient(&conv, h);
        assert!((g.x + a).abs() < 1e-12);
        assert_eq!(g.y, 0.0);
    }

    /// Synthetic quadratic averaged field: matches a direct finite-difference
    /// oracle.
    #[test]
    fn averaged_gradient_quadratic_matches_fd_oracle() {
        let w = 5usize;
        let h = 0.25;
        let f = |x: usize| 0.3 * (x as f64 * h).powi(2) - 0.7 * (x as f64 * h) + 1.0;
        let cols: Vec<f64> = ((w - 1)..=(2 * w)).map(f).collect();
        let conv = ConvAverage::from_columns(w, 5, w - 1, cols);
        let g = averaged_gradient(&conv, h);
        let mut oracle = 0.0;
        for x in w..2 * w {
            oracle += (f(x + 1) - f(x - 1)) / (2.0 * h);
        }
        oracle /= w as f64;
        assert!((g.x + oracle).abs() < 1e-12);
    }

    /// Hand-summed perturbation product on a 3x1 toy block.
    #[test]
    fn perturbation_product_hand_case() {
        use crate::flow::FlowField;
        let img = PoreImage::filled(3, 1, true);
        let mut field = FlowField::zeros(3, 1, img.pixel_size());
        // Faces chosen so cell-centered u = (1, 2, 3) across the row.
        field.u = vec![0.0, 2.0, 2.0];
        // centers: cell0 = (u0+u1)/2 = 1, cell1 = 2, cell2 = (2+0)/2 = 1.
        let domain = crate::transport::build_extended(&img, &field).unwrap();
        let centers = crate::flow::interpolate_to_centers(&img, &field);
        let c: Vec<f64> = (0..9).map(|k| 0.1 * k as f64).collect();
        let conv = convolutional_average(&c, 9, 1, 3).unwrap();
        let v_bar = average_velocity(&img, &field);
        let got = perturbation_product(&domain, &centers, &c, &conv, v_bar).unwrap();
        // Hand sum over center cells x = 3, 4, 5.
        let mut hand = Vec2::ZERO;
        for (local, x) in (3..6).enumerate() {
            let vtil = centers[local] - v_bar;
            let ctil = c[x] - conv.at(x, 0);
            hand += vtil.scale(ctil);
        }
        hand = hand.scale(1.0 / 3.0);
        assert!((got.x - hand.x).abs() < 1e-14);
        assert!((got.y - hand.y).abs() < 1e-14);
    }

    #[test]
    fn perturbation_trivial_zeros() {
        let img = PoreImage::filled(4, 4, true);
        let mut field = FlowField::zeros(4, 4, img.pixel_size());
        field.u.fill(1.0);
        let domain = crate::transport::build_extended(&img, &field).unwrap();
        let centers = crate::flow::interpolate_to_centers(&img, &field);
        let v_bar = average_velocity(&img, &field);
        // c constant: ctil = 0 everywhere in an all-void domain.
        let c = vec![0.6; 48];
        let conv = convolutional_average(&c, 12, 4, 4).unwrap();
        let p = perturbation_product(&domain, &centers, &c, &conv, v_bar).unwrap();
        assert_eq!(p, Vec2::ZERO);
        // v uniform: vtil = 0 everywhere in an all-void domain.
        let c: Vec<f64> = (0..48).map(|k| (k as f64 * 0.37).sin().abs()).collect();
        let conv = convolutional_average(&c, 12, 4, 4).unwrap();
        let p = perturbation_product(&domain, &centers, &c, &conv, v_bar).unwrap();
        assert!(p.norm() < 1e-15);
    }

    /// Forward-construction oracle: pert = D(v_bar, alpha) . neg_grad_c must
    /// recover alpha exactly (spec's worked numbers).
    #[test]
    fn fit_recovers_forward_constructed_alphas() {
        let v_bar = Vec2::new(1.0, 0.3);
        let g = Vec2::new(0.8, 0.1);
        let truth = pair(2.0, 0.5);
        let pert = build_tensor(v_bar, &truth).mul_vec(g);
        let s = UpscaledSample {
            v_bar,
            neg_grad_c: g,
            pert,
            time: 0.0,
        };
        let fitted = fit_alphas(&s).unwrap();
        assert!((fitted.alpha_l - 2.0).abs() < 1e-10);
        assert!((fitted.alpha_t - 0.5).abs() < 1e-10);
        assert_eq!(fitted.flags, ClampFlags::default());
    }

    /// Perfectly longitudinal case: transversal denominator is 0/0,
    /// alpha_T pinned to zero with the degeneracy flag.
    #[test]
    fn perfectly_longitudinal_case() {
        let s = UpscaledSample {
            v_bar: Vec2::new(1.0, 0.0),
            neg_grad_c: Vec2::new(1.0, 0.0),
            pert: Vec2::new(3.0, 0.0),
            time: 0.0,
        };
        let fitted = fit_alphas(&s).unwrap();
        assert_eq!(fitted.alpha_l, 3.0);
        assert_eq!(fitted.alpha_t, 0.0);
        assert!(fitted.flags.t_degenerate);
    }

    /// A perturbation product rotated out of the velocity/gradient quadrant
    /// produces a negative raw alpha_T, which clamps to zero with the flag.
    #[test]
    fn negative_alpha_t_clamps() {
        let v_bar = Vec2::new(1.0, 0.0);
        let g = Vec2::new(1.0, 0.5);
        // pert with a component against g's transversal part.
        let pert = Vec2::new(2.0, -0.4);
        let s = UpscaledSample {
            v_bar,
            neg_grad_c: g,
            pert,
            time: 0.0,
        };
        let fitted = fit_alphas(&s).unwrap();
        assert_eq!(fitted.alpha_t, 0.0);
        assert!(fitted.flags.t_negative);
    }

    #[test]
    fn stagnation_and_degenerate_gradient_errors() {
        let s = UpscaledSample {
            v_bar: Vec2::ZERO,
            neg_grad_c: Vec2::new(1.0, 0.0),
            pert: Vec2::ZERO,
            time: 0.0,
        };
        assert!(matches!(fit_alphas(&s), Err(UpscalingError::Stagnation)));
        let s = UpscaledSample {
            v_bar: Vec2::new(1.0, 0.0),
            neg_grad_c: Vec2::new(0.0, 1.0),
            pert: Vec2::ZERO,
            time: 0.0,
        };
        assert!(matches!(
            fit_alphas(&s),
            Err(UpscalingError::DegenerateGradient)
        ));
    }

    #[test]
    fn aggregate_examples() {
        let one = pair(1.5, 0.25);
        let agg = aggregate_alphas(&[one]).unwrap();
        assert_eq!((agg.alpha_l, agg.alpha_t), (1.5, 0.25));
        let agg = aggregate_alphas(&[pair(1.0, 0.0), pair(3.0, 0.0)]).unwrap();
        assert_eq!((agg.alpha_l, agg.alpha_t), (2.0, 0.0));
        assert!(matches!(
            aggregate_alphas(&[]),
            Err(UpscalingError::NoSamples)
        ));
    }

    /// 20 synthetic samples from one fixed tensor aggregate back to its
    /// alphas exactly.
    #[test]
    fn aggregate_synthetic_tensor_samples() {
        let v_bar = Vec2::new(0.8, -0.25);
        let truth = pair(1.2, 0.3);
        let tensor = build_tensor(v_bar, &truth);
        let mut fitted = Vec::new();
        for k in 0..20 {
            let angle = 0.1 + 0.08 * k as f64;
            let g = Vec2::new(angle.cos(), 0.4 * angle.sin());
            let s = UpscaledSample {
                v_bar,
                neg_grad_c: g,
                pert: tensor.mul_vec(g),
                time: k as f64,
            };
            fitted.push(fit_alphas(&s).unwrap());
        }
        let agg = aggregate_alphas(&fitted).unwrap();
        assert!((agg.alpha_l - 1.2).abs() < 1e-10);
        assert!((agg.alpha_t - 0.3).abs() < 1e-10);
    }

    #[test]
    fn tensor_examples() {
        // Axis-aligned eigen case.
        let d = build_tensor(Vec2::new(1.0, 0.0), &pair(2.0, 1.0));
        assert_eq!(d, DispersionTensor { xx: 2.0, xy: 0.0, yy: 1.0 });
        // Direct evaluation along the diagonal.
        let d = build_tensor(Vec2::new(1.0, 1.0), &pair(2.0, 0.0));
        let s = std::f64::consts::SQRT_2;
        assert!((d.xx - s).abs() < 1e-12);
        assert!((d.xy - s).abs() < 1e-12);
        assert!((d.yy - s).abs() < 1e-12);
        assert_eq!(build_tensor(Vec2::ZERO, &pair(2.0, 1.0)), DispersionTensor::zero());
    }

    /// Eigenvector identity: D v = alpha_L |v| v and D v_perp = alpha_T |v| v_perp.
    #[test]
    fn eigenvector_identity() {
        let v = Vec2::new(0.6, -1.1);
        let alphas = pair(1.7, 0.4);
        let d = build_tensor(v, &alphas);
        let n = v.norm();
        let dv = d.mul_vec(v);
        assert!((dv - v.scale(alphas.alpha_l * n)).norm() <= 1e-12 * dv.norm());
        let dp = d.mul_vec(v.perp());
        assert!((dp - v.perp().scale(alphas.alpha_t * n)).norm() <= 1e-12 * dp.norm().max(1e-30));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        /// Fit-build round trip for any non-degenerate configuration.
        #[test]
        fn fit_build_round_trip(
            vx in -2.0f64..2.0, vy in -2.0f64..2.0,
            gx in -2.0f64..2.0, gy in -2.0f64..2.0,
            al in 0.01f64..3.0, frac in 0.0f64..1.0,
        ) {
            let v = Vec2::new(vx, vy);
            let g = Vec2::new(gx, gy);
            let n = v.norm();
            prop_assume!(n > 1e-3);
            let vhat = v.scale(1.0 / n);
            prop_assume!(g.norm() > 1e-3);
            prop_assume!(g.dot(vhat).abs() > 1e-3 * g.norm());
            let at = al * frac;
            let pert = build_tensor(v, &pair(al, at)).mul_vec(g);
            let fitted = fit_alphas(&UpscaledSample {
                v_bar: v,
                neg_grad_c: g,
                pert,
                time: 0.0,
            }).unwrap();
            prop_assert!((fitted.alpha_l - al).abs() <= 1e-8 * al.max(1.0));
            if g.dot(vhat.perp()).abs() > 1e-3 * g.norm() {
                prop_assert!((fitted.alpha_t - at).abs() <= 1e-8 * al.max(1.0));
            }
        }

        /// Rotating v, g, pert jointly by any angle leaves the fit unchanged.
        #[test]
        fn rotation_equivariance(angle in 0.0f64..std::f64::consts::TAU) {
            let v = Vec2::new(1.0, 0.3);
            let g = Vec2::new(0.8, 0.1);
            let truth = pair(2.0, 0.5);
            let pert = build_tensor(v, &truth).mul_vec(g);
            let fitted = fit_alphas(&UpscaledSample {
                v_bar: v.rotated(angle),
                neg_grad_c: g.rotated(angle),
                pert: pert.rotated(angle),
                time: 0.0,
            }).unwrap();
            prop_assert!((fitted.alpha_l - 2.0).abs() < 1e-10);
            prop_assert!((fitted.alpha_t - 0.5).abs() < 1e-10);
        }

        /// Superficial-average consistency: the unit average of the
        /// convolutional average equals the unit average of the field when
        /// the field is exactly periodic with the unit-cell period.
        #[test]
        fn conv_then_unit_equals_unit(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (6usize, 5usize);
            let ew = 3 * w;
            let base: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
            let field: Vec<f64> = (0..ew * h)
                .map(|k| base[(k / ew) * w + (k % ew) % w])
                .collect();
            let conv = convolutional_average(&field, ew, h, w).unwrap();
            let conv_center: Vec<f64> = (w..2 * w)
                .flat_map(|x| std::iter::repeat(conv.at(x, 0)).take(h))
                .collect();
            let a = unit_average(&conv_center).unwrap();
            let b = unit_average(&base).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
