//! Void-solid interface metrics: specific surface area from per-pixel face
//! rules, box-counting roughness dimension, and the 8-bin directionality
//! vector with its moment statistics.

use crate::geometry::PoreImage;

/// Specific surface area (1/length). Every solid pixel with at least one
/// exposed face (periodic 4-neighbors) contributes interface length:
/// 1 face -> h; 2 adjacent faces -> sqrt(2)h; 2 opposite -> 2h;
/// 3 faces -> sqrt(2)h (two half diagonals); 4 faces -> 4h.
/// The total length is divided by the domain area.
pub fn surface_area(image: &PoreImage) -> f64 {
    let (w, h) = (image.width(), image.height());
    let px = image.pixel_size();
    let mut length = 0.0;
    for y in 0..h {
        for x in 0..w {
            if image.is_void(x, y) {
                continue;
            }
            let east = image.is_void_wrapped(x as isize + 1, y as isize);
            let west = image.is_void_wrapped(x as isize - 1, y as isize);
            let north = image.is_void_wrapped(x as isize, y as isize + 1);
            let south = image.is_void_wrapped(x as isize, y as isize - 1);
            let n = [east, west, north, south].iter().filter(|&&b| b).count();
            length += px
                * match n {
                    0 => 0.0,
                    1 => 1.0,
                    2 => {
                        if (east && west) || (north && south) {
                            2.0
                        } else {
                            std::f64::consts::SQRT_2
                        }
                    }
                    3 => std::f64::consts::SQRT_2,
                    _ => 4.0,
                };
        }
    }
    length / ((w * h) as f64 * px * px)
}

/// Box counts per scale for the roughness dimension: for each power-of-two
/// box size from the padded extent down to 2 px, the number of boxes
/// (anchored at the origin) containing both void and solid pixels.
pub fn box_counts(image: &PoreImage) -> Vec<(usize, usize)> {
    let (w, h) = (image.width(), image.height());
    let span = w.max(h).next_power_of_two();
    let mut out = Vec::new();
    let mut size = span;
    while size >= 2 {
        let nx = span / size;
        let mut has_void = vec![false; nx * nx];
        let mut has_solid = vec![false; nx * nx];
        for y in 0..h {
            for x in 0..w {
                let b = (y / size) * nx + (x / size);
                if image.is_void(x, y) {
                    has_void[b] = true;
                } else {
                    has_solid[b] = true;
                }
            }
        }
        let mixed = has_void
            .iter()
            .zip(&has_solid)
            .filter(|(v, s)| **v && **s)
            .count();
        out.push((size, mixed));
        size /= 2;
    }
    out
}

/// Box-counting roughness dimension: least-squares slope of log N_b versus
/// -log L_b over scales with N_b > 0. Returns (0.0, false) when no interface
/// exists or fewer than two scales carry counts.
pub fn roughness_dimension(image: &PoreImage) -> (f64, bool) {
    let void = image.void_count();
    if void == 0 || void == image.width() * image.height() {
        return (0.0, false);
    }
    let pts: Vec<(f64, f64)> = box_counts(image)
        .into_iter()
        .filter(|&(_, n)| n > 0)
        .map(|(l, n)| (-(l as f64).ln(), (n as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return (0.0, false);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let var = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    (cov / var, true)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Directionality {
    /// Relative directional focus in bin order E, NE, N, NW, W, SW, S, SE
    /// (grid coordinates, +y is north). Sums to 1 when an interface exists.
    pub gamma: [f64; 8],
    pub sigma: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub defined: bool,
}

/// Directionality vector: for each solid pixel with exposed faces, the sum
/// of the outward (solid -> void) unit face normals selects one of 8 compass
/// bins. A zero sum (opposite faces cancel) splits 1/2 + 1/2 into the two
/// bins of the dominant exposed axis pair, ties broken toward x.
pub fn directionality(image: &PoreImage) -> Directionality {
    let (w, h) = (image.width(), image.height());
    let mut bins = [0.0f64; 8];
    let mut total = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            if image.is_void(x, y) {
                continue;
            }
            let east = image.is_void_wrapped(x as isize + 1, y as isize);
            let west = image.is_void_wrapped(x as isize - 1, y as isize);
            let north = image.is_void_wrapped(x as isize, y as isize + 1);
            let south = image.is_void_wrapped(x as isize, y as isize - 1);
            if !(east || west || north || south) {
                continue;
            }
            let sx = (east as i8) - (west as i8);
            let sy = (north as i8) - (south as i8);
            if sx == 0 && sy == 0 {
                if east && west {
                    bins[0] += 0.5; // E
                    bins[4] += 0.5; // W
                } else {
                    bins[2] += 0.5; // N
                    bins[6] += 0.5; // S
                }
            } else {
                let bin = match (sx.signum(), sy.signum()) {
                    (1, 0) => 0,  // E
                    (1, 1) => 1,  // NE
                    (0, 1) => 2,  // N
                    (-1, 1) => 3, // NW
                    (-1, 0) => 4, // W
                    (-1, -1) => 5, // SW
                    (0, -1) => 6, // S
                    (1, -1) => 7, // SE
                    _ => unreachable!(),
                };
                bins[bin] += 1.0;
            }
            total += 1.0;
        }
    }
    if total == 0.0 {
        return Directionality::default();
    }
    let gamma = bins.map(|b| b / total);
    let mean = gamma.iter().sum::<f64>() / 8.0;
    let m2 = gamma.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / 8.0;
    let sigma = m2.sqrt();
    let (skewness, kurtosis) = if sigma == 0.0 {
        (0.0, 0.0)
    } else {
        let m3 = gamma.iter().map(|g| (g - mean).powi(3)).sum::<f64>() / 8.0;
        let m4 = gamma.iter().map(|g| (g - mean).powi(4)).sum::<f64>() / 8.0;
        (m3 / sigma.powi(3), m4 / sigma.powi(4))
    };
    Directionality {
        gamma,
        sigma,
        skewness,
        kurtosis,
        defined: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_void_surface_is_zero() {
        assert_eq!(surface_area(&PoreImage::filled(8, 8, true)), 0.0);
    }

    /// Pixel-rule oracle: a single solid pixel exposes 4 faces -> length 4h;
    /// with h = 1/10 and area 100 h^2, S = 4h / (100 h^2) = 0.04 / h = 0.4.
    #[test]
    fn single_solid_pixel_rule() {
        let mut img = PoreImage::filled(10, 10, true);
        img.set(4, 6, false);
        let h = img.pixel_size();
        let expected = 4.0 * h / (100.0 * h * h);
        assert!((surface_area(&img) - expected).abs() < 1e-12);
        assert!((surface_area(&img) - 0.4).abs() < 1e-12);
    }

    /// Full-width solid row: periodic in x, every pixel has two opposite
    /// exposed faces -> total length 2*W*h.
    #[test]
    fn full_width_row_rule() {
        let mut img = PoreImage::filled(12, 8, true);
        for x in 0..12 {
            img.set(x, 3, false);
        }
        let h = img.pixel_size();
        let expected = 2.0 * 12.0 * h / (96.0 * h * h);
        assert!((surface_area(&img) - expected).abs() < 1e-12);
    }

    /// Horizontal domino: each pixel has 3 exposed faces -> sqrt(2)h each.
    #[test]
    fn domino_three_face_rule() {
        let mut img = PoreImage::filled(10, 10, true);
        img.set(4, 5, false);
        img.set(5, 5, false);
        let h = img.pixel_size();
        let expected = 2.0 * std::f64::consts::SQRT_2 * h / (100.0 * h * h);
        assert!((surface_area(&img) - expected).abs() < 1e-12);
    }

    /// 2x2 solid block: each pixel has 2 adjacent exposed faces -> sqrt(2)h.
    #[test]
    fn block_corner_rule() {
        let mut img = PoreImage::filled(8, 8, true);
        for (x, y) in [(3, 3), (4, 3), (3, 4), (4, 4)] {
            img.set(x, y, false);
        }
        let h = img.pixel_size();
        let expected = 4.0 * std::f64::consts::SQRT_2 * h / (64.0 * h * h);
        assert!((surface_area(&img) - expected).abs() < 1e-12);
    }

    #[test]
    fn straight_interface_has_dimension_one() {
        // Interface offset chosen off power-of-two alignments.
        let img = PoreImage::from_fn(64, 64, |_, y| y >= 21);
        let (dim, ok) = roughness_dimension(&img);
        assert!(ok);
        assert!((0.95..=1.05).contains(&dim), "dim = {dim}");
    }

    #[test]
    fn checkerboard_has_dimension_two() {
        let img = PoreImage::from_fn(64, 64, |x, y| (x + y) % 2 == 0);
        let (dim, ok) = roughness_dimension(&img);
        assert!(ok);
        // Every box at every counted scale is mixed -> slope exactly 2.
        assert!((dim - 2.0).abs() < 1e-12, "dim = {dim}");
    }

    /// Exhaustive box-count oracle on a 16x16 hand pattern.
    #[test]
    fn box_counts_match_exhaustive_enumeration() {
        let img = PoreImage::from_fn(16, 16, |x, y| (x / 3 + y / 2) % 2 == 0);
        let counts = box_counts(&img);
        for (size, mixed) in counts {
            let nx = 16 / size;
            let mut expected = 0;
            for by in 0..nx {
                for bx in 0..nx {
                    let mut void = false;
                    let mut solid = false;
                    for y in by * size..(by + 1) * size {
                        for x in bx * size..(bx + 1) * size {
                            if img.is_void(x, y) {
                                void = true;
                            } else {
                                solid = true;
                            }
                        }
                    }
                    if void && solid {
                        expected += 1;
                    }
                }
            }
            assert_eq!(mixed, expected, "box size {size}");
        }
    }

    #[test]
    fn all_void_roughness_flagged_undefined() {
        let (dim, ok) = roughness_dimension(&PoreImage::filled(16, 16, true));
        assert_eq!(dim, 0.0);
        assert!(!ok);
    }

    /// Centered square inclusion: 4 equal axis bins (edge pixels) and 4
    /// equal diagonal bins (corner pixels); the two-level distribution has
    /// exactly zero skewness.
    #[test]
    fn square_inclusion_directionality() {
        let mut img = PoreImage::filled(16, 16, true);
        for y in 6..10 {
            for x in 6..10 {
                img.set(x, y, false);
            }
        }
        let d = directionality(&img);
        assert!(d.defined);
        let axis = [d.gamma[0], d.gamma[2], d.gamma[4], d.gamma[6]];
        let diag = [d.gamma[1], d.gamma[3], d.gamma[5], d.gamma[7]];
        for &a in &axis {
            assert!((a - axis[0]).abs() < 1e-15);
        }
        for &g in &diag {
            assert!((g - diag[0]).abs() < 1e-15);
        }
        assert!(d.skewness.abs() < 1e-12);
        let sum: f64 = d.gamma.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    /// Single solid pixel: 4 exposed faces, zero normal sum -> the tie rule
    /// splits into E and W; gamma stays symmetric.
    #[test]
    fn single_pixel_zero_sum_rule() {
        let mut img = PoreImage::filled(9, 9, true);
        img.set(4, 4, false);
        let d = directionality(&img);
        assert_eq!(d.gamma[0], 0.5);
        assert_eq!(d.gamma[4], 0.5);
        assert_eq!(d.gamma.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn uniform_gamma_has_zero_sigma() {
        // sigma of a constant vector is zero by definition; synthesize via
        // the moments directly on an octagon-ish pattern is fragile, so this
        // asserts the statistic path: hand-build gamma = 0.125 each.
        let gamma = [0.125f64; 8];
        let mean = gamma.iter().sum::<f64>() / 8.0;
        let m2 = gamma.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / 8.0;
        assert_eq!(m2.sqrt(), 0.0);
    }

    /// Reflection permutes gamma (N <-> S, NE <-> SE, NW <-> SW); the moment
    /// statistics are permutation invariant.
    #[test]
    fn reflection_permutes_gamma() {
        let mut img = PoreImage::filled(12, 12, true);
        for (x, y) in [(3, 4), (4, 4), (5, 4), (5, 5), (8, 2)] {
            img.set(x, y, false);
        }
        let d = directionality(&img);
        let f = directionality(&img.flipped_y());
        assert_eq!(d.gamma[0], f.gamma[0]); // E
        assert_eq!(d.gamma[4], f.gamma[4]); // W
        assert_eq!(d.gamma[2], f.gamma[6]); // N <-> S
        assert_eq!(d.gamma[1], f.gamma[7]); // NE <-> SE
        assert_eq!(d.gamma[3], f.gamma[5]); // NW <-> SW
        assert!((d.sigma - f.sigma).abs() < 1e-15);
        assert!((d.skewness - f.skewness).abs() < 1e-12);
        assert!((d.kurtosis - f.kurtosis).abs() < 1e-12);
    }
}
