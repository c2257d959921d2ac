//! Periodic binary pore geometries: construction, PBM i/o, analytic shape
//! rasterization, random generators, and periodic connectivity preprocessing.

mod generate;
mod pbm;
mod shape;

pub use generate::{generate, generate_with_report, GenerationReport};
pub use pbm::{load_pbm, load_pbm_bytes, save_pbm, save_pbm_bytes, PbmFormat};
pub use shape::rasterize_shape;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("pbm parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("zero or invalid dimension {width}x{height}")]
    BadDimensions { width: usize, height: usize },
    #[error("cell buffer length {got} does not match {width}x{height}")]
    BadBuffer { width: usize, height: usize, got: usize },
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("shape touches or crosses the unit-cell boundary (extent {extent:.4} >= 0.5)")]
    ShapeTouchesBoundary { extent: f64 },
    #[error("invalid shape parameters: {0}")]
    InvalidShape(String),
    #[error("target porosity {target} unreachable after {steps} bisection steps (best {achieved:.4})")]
    PorosityUnreachable { target: f64, achieved: f64, steps: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidGenerator(String),
}

/// Periodic 2D binary pore geometry. `true` cells are void (fluid), `false`
/// cells are solid. The physical unit cell has edge length 1 in program
/// units, so `pixel_size = 1 / width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoreImage {
    width: usize,
    height: usize,
    cells: Vec<bool>,
    pixel_size: f64,
}

impl PoreImage {
    pub fn new(width: usize, height: usize, cells: Vec<bool>) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::BadDimensions { width, height });
        }
        if cells.len() != width * height {
            return Err(GeometryError::BadBuffer {
                width,
                height,
                got: cells.len(),
            });
        }
        Ok(PoreImage {
            width,
            height,
            cells,
            pixel_size: 1.0 / width as f64,
        })
    }

    pub fn filled(width: usize, height: usize, void: bool) -> Self {
        PoreImage::new(width, height, vec![void; width * height]).expect("nonzero dims")
    }

    /// Builds from a row-major closure; `f(x, y) == true` marks void.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                cells.push(f(x, y));
            }
        }
        PoreImage::new(width, height, cells).expect("nonzero dims")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn is_void(&self, x: usize, y: usize) -> bool {
        self.cells[self.idx(x, y)]
    }

    /// Void test with periodic wrap in both axes.
    #[inline]
    pub fn is_void_wrapped(&self, x: isize, y: isize) -> bool {
        let xi = x.rem_euclid(self.width as isize) as usize;
        let yi = y.rem_euclid(self.height as isize) as usize;
        self.is_void(xi, yi)
    }

    pub fn set(&mut self, x: usize, y: usize, void: bool) {
        let i = self.idx(x, y);
        self.cells[i] = void;
    }

    pub fn void_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn porosity(&self) -> f64 {
        self.void_count() as f64 / (self.width * self.height) as f64
    }

    /// Periodically shifted copy: output pixel (x, y) takes the value of
    /// input pixel (x - dx, y - dy) wrapped.
    pub fn shifted(&self, dx: isize, dy: isize) -> PoreImage {
        PoreImage::from_fn(self.width, self.height, |x, y| {
            self.is_void_wrapped(x as isize - dx, y as isize - dy)
        })
    }

    /// Mirrored across the horizontal (x) axis: y -> height - 1 - y.
    pub fn flipped_y(&self) -> PoreImage {
        PoreImage::from_fn(self.width, self.height, |x, y| {
            self.is_void(x, self.height - 1 - y)
        })
    }

    /// Labels periodically-4-connected void components. Returns (labels,
    /// component sizes); label `usize::MAX` marks solid cells. Components are
    /// numbered in row-major discovery order, so component k's first scanned
    /// pixel is the lexicographically smallest of that component.
    pub fn void_components(&self) -> (Vec<usize>, Vec<usize>) {
        const UNSET: usize = usize::MAX;
        let mut labels = vec![UNSET; self.cells.len()];
        let mut sizes = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        for start in 0..self.cells.len() {
            if !self.cells[start] || labels[start] != UNSET {
                continue;
            }
            let label = sizes.len();
            let mut size = 0usize;
            labels[start] = label;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                size += 1;
                let x = (i % self.width) as isize;
                let y = (i / self.width) as isize;
                for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let nx = (x + dx).rem_euclid(self.width as isize) as usize;
                    let ny = (y + dy).rem_euclid(self.height as isize) as usize;
                    let ni = ny * self.width + nx;
                    if self.cells[ni] && labels[ni] == UNSET {
                        labels[ni] = label;
                        queue.push_back(ni);
                    }
                }
            }
            sizes.push(size);
        }
        (labels, sizes)
    }

    /// True when the void space forms exactly one periodically connected
    /// component (and is non-empty).
    pub fn is_connected(&self) -> bool {
        let (_, sizes) = self.void_components();
        sizes.len() == 1
    }
}

/// Analytic solid inclusion placed at the center of the unit cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Circle: radius / L. Square: side / L. Ellipse: semi-axis along the
    /// local x direction / L. Triangle (equilateral): side / L.
    pub size: f64,
    /// Ellipse only: ratio of the local-x semi-axis to the local-y semi-axis.
    pub aspect: f64,
    pub rotation_deg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle,
    Square,
    Ellipse,
    Triangle,
}

impl std::str::FromStr for ShapeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "circle" => Ok(ShapeKind::Circle),
            "square" => Ok(ShapeKind::Square),
            "ellipse" => Ok(ShapeKind::Ellipse),
            "triangle" => Ok(ShapeKind::Triangle),
            other => Err(format!("unknown shape kind '{other}'")),
        }
    }
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, size: f64) -> Self {
        ShapeSpec {
            kind,
            size,
            aspect: 1.0,
            rotation_deg: 0.0,
        }
    }

    pub fn with_aspect(mut self, aspect: f64) -> Self {
        self.aspect = aspect;
        self
    }

    pub fn with_rotation(mut self, deg: f64) -> Self {
        self.rotation_deg = deg;
        self
    }
}

/// Seeded random geometry generator parameters. Identical spec + resolution
/// always produces a bit-identical image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub seed: u64,
    pub target_porosity: f64,
    /// Perlin/fractal: gradient lattice cells per axis at the base octave.
    pub scale: usize,
    /// Fractal: number of octaves summed with persistence 0.5.
    pub octaves: usize,
    /// Voronoi: number of seed points in the unit cell.
    pub points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Perlin,
    Fractal,
    Voronoi,
}

impl std::str::FromStr for GeneratorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "perlin" => Ok(GeneratorKind::Perlin),
            "fractal" => Ok(GeneratorKind::Fractal),
            "voronoi" => Ok(GeneratorKind::Voronoi),
            other => Err(format!("unknown generator kind '{other}'")),
        }
    }
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, seed: u64, target_porosity: f64) -> Self {
        GeneratorSpec {
            kind,
            seed,
            target_porosity,
            scale: 4,
            octaves: 4,
            points: 24,
        }
    }
}

/// Keeps only the largest periodically-4-connected void component, turning
/// every other void pixel solid. Returns the filtered copy and the number of
/// removed pixels. Ties between equal-size components are broken toward the
/// component containing the lexicographically smallest void pixel.
pub fn filter_periodic_connectivity(
    image: &PoreImage,
) -> Result<(PoreImage, usize), GeometryError> {
    let (labels, sizes) = image.void_components();
    if sizes.is_empty() {
        return Err(GeometryError::Degenerate(
            "no void pixels to keep".to_string(),
        ));
    }
    // First component with maximal size wins: discovery order is row-major,
    // so it contains the smallest void pixel among the candidates.
    let max_size = *sizes.iter().max().unwrap();
    let keep = sizes.iter().position(|&s| s == max_size).unwrap();
    let mut out = image.clone();
    let mut removed = 0usize;
    for i in 0..out.cells.len() {
        if out.cells[i] && labels[i] != keep {
            out.cells[i] = false;
            removed += 1;
        }
    }
    Ok((out, removed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent flood-fill oracle with the wrap-around neighbor rule:
    /// marks everything reachable from `start` through void pixels.
    fn flood_reachable(image: &PoreImage, start: (usize, usize)) -> Vec<bool> {
        let mut seen = vec![false; image.width() * image.height()];
        let mut stack = vec![start];
        seen[image.idx(start.0, start.1)] = true;
        while let Some((x, y)) = stack.pop() {
            for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
                let nx = (x as isize + dx).rem_euclid(image.width() as isize) as usize;
                let ny = (y as isize + dy).rem_euclid(image.height() as isize) as usize;
                if image.is_void(nx, ny) && !seen[image.idx(nx, ny)] {
                    seen[image.idx(nx, ny)] = true;
                    stack.push((nx, ny));
                }
            }
        }
        seen
    }

    #[test]
    fn all_void_unchanged() {
        let img = PoreImage::filled(8, 6, true);
        let (filtered, removed) = filter_periodic_connectivity(&img).unwrap();
        assert_eq!(removed, 0);
        assert_eq!(filtered, img);
    }

    #[test]
    fn enclosed_pocket_is_removed() {
        // Solid everywhere except a big connected band plus one isolated pocket.
        let mut img = PoreImage::filled(10, 10, false);
        for x in 0..10 {
            img.set(x, 0, true);
        }
        img.set(5, 5, true); // pocket fully enclosed by solid
        let (filtered, removed) = filter_periodic_connectivity(&img).unwrap();
        assert_eq!(removed, 1);
        assert!(!filtered.is_void(5, 5));
        assert!(filtered.is_void(3, 0));
    }

    #[test]
    fn periodic_wrap_connects_opposite_columns() {
        // Void pixels at column 0 and column W-1 of one row, all else solid:
        // connected through the periodic wrap, both kept.
        let mut img = PoreImage::filled(7, 3, false);
        img.set(0, 1, true);
        img.set(6, 1, true);
        let reach = flood_reachable(&img, (0, 1));
        assert!(reach[img.idx(6, 1)], "oracle: wrap connects the two pixels");
        let (filtered, removed) = filter_periodic_connectivity(&img).unwrap();
        assert_eq!(removed, 0);
        assert!(filtered.is_void(0, 1) && filtered.is_void(6, 1));
    }

    #[test]
    fn no_void_is_degenerate() {
        let img = PoreImage::filled(4, 4, false);
        assert!(matches!(
            filter_periodic_connectivity(&img),
            Err(GeometryError::Degenerate(_))
        ));
    }

    #[test]
    fn tie_keeps_component_with_smallest_pixel() {
        // Two 1-pixel components of equal size; (1,0) scans before (1,2).
        let mut img = PoreImage::filled(4, 4, false);
        img.set(1, 0, true);
        img.set(1, 2, true);
        let (filtered, removed) = filter_periodic_connectivity(&img).unwrap();
        assert_eq!(removed, 1);
        assert!(filtered.is_void(1, 0));
        assert!(!filtered.is_void(1, 2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Periodic shift commutes with the connectivity filter.
        #[test]
        fn filter_commutes_with_shift(
            seed in 0u64..1000,
            dx in -15isize..15,
            dy in -15isize..15,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = PoreImage::from_fn(12, 9, |_, _| rng.random_bool(0.6));
            if img.void_count() == 0 {
                return Ok(());
            }
            let (f_then_s, _) = filter_periodic_connectivity(&img).unwrap();
            let f_then_s = f_then_s.shifted(dx, dy);
            let (s_then_f, _) = filter_periodic_connectivity(&img.shifted(dx, dy)).unwrap();
            prop_assert_eq!(f_then_s, s_then_f);
        }
    }
}
