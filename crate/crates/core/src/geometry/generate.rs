//! Seeded random pore-geometry generators. All three produce fields that are
//! exactly periodic (opposite edges continue seamlessly), threshold them to
//! hit the target porosity within +/-0.02 before connectivity filtering, and
//! then apply the periodic connectivity filter.

use super::{filter_periodic_connectivity, GeneratorKind, GeneratorSpec, GeometryError, PoreImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const POROSITY_TOL: f64 = 0.02;
const BISECTION_STEPS: usize = 20;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GenerationReport {
    /// Threshold on the noise value (perlin/fractal) or channel half-width in
    /// pixels (voronoi) selected by bisection.
    pub threshold: f64,
    pub pre_filter_porosity: f64,
    pub removed_pixels: usize,
}

pub fn generate(spec: &GeneratorSpec, resolution: usize) -> Result<PoreImage, GeometryError> {
    generate_with_report(spec, resolution).map(|(img, _)| img)
}

pub fn generate_with_report(
    spec: &GeneratorSpec,
    resolution: usize,
) -> Result<(PoreImage, GenerationReport), GeometryError> {
    if resolution < 2 {
        return Err(GeometryError::BadDimensions {
            width: resolution,
            height: resolution,
        });
    }
    if !(spec.target_porosity > 0.0 && spec.target_porosity < 1.0) {
        return Err(GeometryError::InvalidGenerator(format!(
            "target porosity must be in (0, 1), got {}",
            spec.target_porosity
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Per-pixel scalar field; a pixel is void iff field >= threshold, and the
    // void fraction is monotone non-increasing in the threshold.
    let field = match spec.kind {
        GeneratorKind::Perlin => {
            if spec.scale == 0 {
                return Err(GeometryError::InvalidGenerator("scale must be >= 1".into()));
            }
            periodic_perlin(resolution, resolution, spec.scale, &mut rng)
        }
        GeneratorKind::Fractal => {
            if spec.scale == 0 || spec.octaves == 0 {
                return Err(GeometryError::InvalidGenerator(
                    "scale and octaves must be >= 1".into(),
                ));
            }
            periodic_fractal(resolution, resolution, spec.scale, spec.octaves, &mut rng)
        }
        GeneratorKind::Voronoi => {
            if spec.points == 0 {
                return Err(GeometryError::InvalidGenerator("points must be >= 1".into()));
            }
            // Channel field: negated edge distance so that *larger* values are
            // closer to a Voronoi edge; thresholding keeps edge channels void.
            voronoi_channel_field(resolution, resolution, spec.points, &mut rng)
        }
    };

    let (threshold, porosity) = bisect_threshold(&field, spec.target_porosity)?;
    let raw = PoreImage::new(
        resolution,
        resolution,
        field.iter().map(|&v| v >= threshold).collect(),
    )?;
    let (filtered, removed) = filter_periodic_connectivity(&raw)?;
    Ok((
        filtered,
        GenerationReport {
            threshold,
            pre_filter_porosity: porosity,
            removed_pixels: removed,
        },
    ))
}

/// Bisection on the void threshold: void fraction of {v >= t} decreases in t.
fn bisect_threshold(field: &[f64], target: f64) -> Result<(f64, f64), GeometryError> {
    let n = field.len() as f64;
    let porosity_at = |t: f64| field.iter().filter(|&&v| v >= t).count() as f64 / n;
    let mut lo = field.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Nudge the bracket so porosity(lo) = 1 and porosity(hi + eps) = 0.
    hi += (hi - lo).max(1.0) * 1e-9 + 1e-12;
    let mut best = (lo, porosity_at(lo));
    for _ in 0..BISECTION_STEPS {
        if (best.1 - target).abs() <= POROSITY_TOL {
            return Ok(best);
        }
        let mid = 0.5 * (lo + hi);
        let p = porosity_at(mid);
        if (p - target).abs() < (best.1 - target).abs() {
            best = (mid, p);
        }
        if p > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - target).abs() <= POROSITY_TOL {
        Ok(best)
    } else {
        Err(GeometryError::PorosityUnreachable {
            target,
            achieved: best.1,
            steps: BISECTION_STEPS,
        })
    }
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Perlin noise with the gradient lattice defined on a torus: lattice indices
/// wrap modulo `lattice`, so the field is exactly periodic in both axes.
fn periodic_perlin(width: usize, height: usize, lattice: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = lattice;
    let grads: Vec<(f64, f64)> = (0..n * n)
        .map(|_| {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            (a.cos(), a.sin())
        })
        .collect();
    let grad = |gx: usize, gy: usize| grads[(gy % n) * n + (gx % n)];
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let px = (x as f64 + 0.5) * n as f64 / width as f64;
            let py = (y as f64 + 0.5) * n as f64 / height as f64;
            let x0 = px.floor() as usize;
            let y0 = py.floor() as usize;
            let fx = px - x0 as f64;
            let fy = py - y0 as f64;
            let dot = |cx: usize, cy: usize, ox: f64, oy: f64| {
                let (gx, gy) = grad(cx, cy);
                gx * (fx - ox) + gy * (fy - oy)
            };
            let d00 = dot(x0, y0, 0.0, 0.0);
            let d10 = dot(x0 + 1, y0, 1.0, 0.0);
            let d01 = dot(x0, y0 + 1, 0.0, 1.0);
            let d11 = dot(x0 + 1, y0 + 1, 1.0, 1.0);
            let (ux, uy) = (fade(fx), fade(fy));
            out.push(lerp(lerp(d00, d10, ux), lerp(d01, d11, ux), uy));
        }
    }
    out
}

/// Octave sum of periodic perlin fields with persistence 0.5. Octave o uses a
/// lattice of `scale << o` cells; octaves finer than half the resolution are
/// skipped to avoid sub-pixel gradients.
fn periodic_fractal(
    width: usize,
    height: usize,
    scale: usize,
    octaves: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    let mut amplitude = 1.0;
    for o in 0..octaves {
        let lattice = scale << o;
        if lattice > width.min(height) / 2 && o > 0 {
            break;
        }
        let layer = periodic_perlin(width, height, lattice, rng);
        for (acc, v) in out.iter_mut().zip(layer) {
            *acc += amplitude * v;
        }
        amplitude *= 0.5;
    }
    out
}

/// Negated Voronoi edge distance (d2 - d1 between the two nearest sites),
/// with sites replicated into the 8 neighbor tiles so the tessellation is
/// exactly periodic. Larger values are closer to an inter-cell edge.
fn voronoi_channel_field(
    width: usize,
    height: usize,
    points: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let w = width as f64;
    let h = height as f64;
    let sites: Vec<(f64, f64)> = (0..points)
        .map(|_| (rng.random_range(0.0..w), rng.random_range(0.0..h)))
        .collect();
    let offsets: Vec<(f64, f64)> = (-1..=1)
        .flat_map(|ty| (-1..=1).map(move |tx| (tx as f64 * w, ty as f64 * h)))
        .collect();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;
            let mut d1 = f64::INFINITY;
            let mut d2 = f64::INFINITY;
            for &(sx, sy) in &sites {
                for &(ox, oy) in &offsets {
                    let dx = px - (sx + ox);
                    let dy = py - (sy + oy);
                    let d = (dx * dx + dy * dy).sqrt();
                    if d < d1 {
                        d2 = d1;
                        d1 = d;
                    } else if d < d2 {
                        d2 = d;
                    }
                }
            }
            out.push(-(d2 - d1));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs() -> Vec<GeneratorSpec> {
        vec![
            GeneratorSpec::new(GeneratorKind::Perlin, 11, 0.7),
            GeneratorSpec::new(GeneratorKind::Fractal, 12, 0.65),
            GeneratorSpec::new(GeneratorKind::Voronoi, 13, 0.5),
        ]
    }

    #[test]
    fn same_seed_is_bit_identical() {
        for spec in specs() {
            let a = generate(&spec, 48).unwrap();
            let b = generate(&spec, 48).unwrap();
            assert_eq!(a, b, "{:?}", spec.kind);
        }
    }

    #[test]
    fn different_seed_differs() {
        let a = generate(&GeneratorSpec::new(GeneratorKind::Perlin, 1, 0.7), 48).unwrap();
        let b = generate(&GeneratorSpec::new(GeneratorKind::Perlin, 2, 0.7), 48).unwrap();
        assert_ne!(a, b);
    }

    /// Measured by the porosity counter: realized pre-filter porosity is
    /// within the +/-0.02 contract of the target.
    #[test]
    fn pre_filter_porosity_within_tolerance() {
        for spec in specs() {
            let (_, report) = generate_with_report(&spec, 64).unwrap();
            assert!(
                (report.pre_filter_porosity - spec.target_porosity).abs() <= POROSITY_TOL,
                "{:?}: pre-filter porosity {} vs target {}",
                spec.kind,
                report.pre_filter_porosity,
                spec.target_porosity
            );
        }
    }

    /// The underlying fields are exactly periodic, so a periodic shift of the
    /// generated geometry must filter to the same void-pixel count.
    #[test]
    fn periodic_shift_preserves_filtered_void_count() {
        for spec in specs() {
            let (filtered, _) = generate_with_report(&spec, 48).unwrap();
            let shifted = filtered.shifted(37, 11);
            let (refiltered, removed) = filter_periodic_connectivity(&shifted).unwrap();
            assert_eq!(removed, 0, "already-filtered image stays intact");
            assert_eq!(refiltered.void_count(), filtered.void_count());
        }
    }

    #[test]
    fn generated_geometry_is_connected() {
        for spec in specs() {
            let img = generate(&spec, 48).unwrap();
            assert!(img.is_connected(), "{:?}", spec.kind);
        }
    }

    /// Raw noise fields must wrap seamlessly: shifting the *raw threshold
    /// image* by the period is literal equality, so any sub-period shift of
    /// the field equals sampling the torus elsewhere. Spot-check by comparing
    /// the field's wrap columns/rows for continuity of the generated image
    /// across the seam after a shift.
    #[test]
    fn shifted_generation_equals_wrapped_shift() {
        for spec in specs() {
            let img = generate(&spec, 48).unwrap();
            let s = img.shifted(17, 29);
            for y in 0..img.height() {
                for x in 0..img.width() {
                    assert_eq!(
                        s.is_void(x, y),
                        img.is_void_wrapped(x as isize - 17, y as isize - 29)
                    );
                }
            }
        }
    }

    #[test]
    fn invalid_target_porosity_rejected() {
        let err = generate(&GeneratorSpec::new(GeneratorKind::Perlin, 1, 0.0), 32).unwrap_err();
        assert!(matches!(err, GeometryError::InvalidGenerator(_)));
    }
}
