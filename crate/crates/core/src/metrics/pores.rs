//! Pore segmentation: periodic Euclidean distance transform, peak detection
//! with plateau merging, and watershed region growing from the peaks.

use crate::geometry::PoreImage;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Debug)]
pub struct PoreSegmentation {
    pub n_pores: usize,
    pub mean_size: f64,
    pub std_size: f64,
    pub sizes: Vec<usize>,
    /// Per-pixel pore label; usize::MAX for solid pixels.
    pub labels: Vec<usize>,
}

/// Squared Euclidean distance to the nearest solid pixel under the periodic
/// metric, computed by running the exact two-pass transform on a 3x3 tiling
/// and reading back the center tile. Returns `None` when there is no solid
/// pixel at all.
pub fn periodic_distance_sq(image: &PoreImage) -> Option<Vec<f64>> {
    let (w, h) = (image.width(), image.height());
    if image.void_count() == w * h {
        return None;
    }
    let (tw, th) = (3 * w, 3 * h);
    const INF: f64 = 1e18;
    // Column pass: 1D distance to nearest solid within each tiled column.
    let mut colsq = vec![INF; tw * th];
    for x in 0..tw {
        let mut last_solid: Option<usize> = None;
        for y in 0..th {
            if !image.is_void(x % w, y % h) {
                last_solid = Some(y);
            }
            if let Some(s) = last_solid {
                colsq[y * tw + x] = ((y - s) * (y - s)) as f64;
            }
        }
        let mut next_solid: Option<usize> = None;
        for y in (0..th).rev() {
            if !image.is_void(x % w, y % h) {
                next_solid = Some(y);
            }
            if let Some(s) = next_solid {
                let d = ((s - y) * (s - y)) as f64;
                if d < colsq[y * tw + x] {
                    colsq[y * tw + x] = d;
                }
            }
        }
    }
    // Row pass: lower envelope of parabolas (Felzenszwalb-Huttenlocher).
    let mut out = vec![0.0; tw * th];
    let mut v = vec![0usize; tw];
    let mut z = vec![0.0f64; tw + 1];
    for y in 0..th {
        let f = |x: usize| colsq[y * tw + x];
        let mut k = 0usize;
        v[0] = 0;
        z[0] = -INF;
        z[1] = INF;
        for q in 1..tw {
            if f(q) >= INF {
                continue;
            }
            loop {
                let p = v[k];
                let s = if f(p) >= INF {
                    -INF
                } else {
                    ((f(q) + (q * q) as f64) - (f(p) + (p * p) as f64)) / (2.0 * (q - p) as f64)
                };
                if s <= z[k] {
                    if k == 0 {
                        v[0] = q;
                        z[0] = -INF;
                        z[1] = INF;
                        break;
                    }
                    k -= 1;
                } else {
                    k += 1;
                    v[k] = q;
                    z[k] = s;
                    z[k + 1] = INF;
                    break;
                }
            }
        }
        let mut k = 0usize;
        for x in 0..tw {
            while z[k + 1] < x as f64 {
                k += 1;
            }
            let p = v[k];
            let dx = x as f64 - p as f64;
            out[y * tw + x] = dx * dx + f(p);
        }
    }
    // Center tile.
    let mut center = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            center[y * w + x] = out[(y + h) * tw + (x + w)];
        }
    }
    Some(center)
}

#[derive(PartialEq)]
struct FloodItem {
    dist: f64,
    order: usize,
    pixel: usize,
    label: usize,
}

impl Eq for FloodItem {}

impl Ord for FloodItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on distance; FIFO on insertion order for determinism.
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| other.order.cmp(&self.order))
    }
}

impl PartialOrd for FloodItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distance-transform watershed. Peaks are void pixels whose distance is a
/// weak local maximum over the 8 periodic neighbors; peaks (and plateaus)
/// within 3 px periodic Euclidean distance merge into one marker. Watershed
/// regions grow from the markers in order of decreasing distance.
pub fn segment_pores(image: &PoreImage) -> PoreSegmentation {
    let (w, h) = (image.width(), image.height());
    let void_total = image.void_count();
    if void_total == 0 {
        return PoreSegmentation {
            n_pores: 0,
            mean_size: 0.0,
            std_size: 0.0,
            sizes: Vec::new(),
            labels: vec![usize::MAX; w * h],
        };
    }
    let Some(dist) = periodic_distance_sq(image) else {
        // All-void: one pore covering the whole domain.
        return PoreSegmentation {
            n_pores: 1,
            mean_size: (w * h) as f64,
            std_size: 0.0,
            sizes: vec![w * h],
            labels: vec![0; w * h],
        };
    };

    // Peak candidates: weak maxima over the 8-neighborhood.
    let mut candidates = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !image.is_void(x, y) {
                continue;
            }
            let d = dist[y * w + x];
            let mut is_peak = true;
            'nbrs: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = (x as isize + dx).rem_euclid(w as isize) as usize;
                    let ny = (y as isize + dy).rem_euclid(h as isize) as usize;
                    if image.is_void(nx, ny) && dist[ny * w + nx] > d {
                        is_peak = false;
                        break 'nbrs;
                    }
                }
            }
            if is_peak {
                candidates.push((x, y));
            }
        }
    }

    // Merge candidates within periodic radius 3 px (union-find).
    let mut parent: Vec<usize> = (0..candidates.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    let torus_dist_sq = |a: (usize, usize), b: (usize, usize)| -> f64 {
        let dx = a.0.abs_diff(b.0);
        let dx = dx.min(w - dx);
        let dy = a.1.abs_diff(b.1);
        let dy = dy.min(h - dy);
        (dx * dx + dy * dy) as f64
    };
    for i in 0..candidates.len() {
        for j in (i + 1)..candidates.len() {
            if torus_dist_sq(candidates[i], candidates[j]) <= 9.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }
    // Stable marker labels in candidate scan order.
    let mut marker_of_root = std::collections::HashMap::new();
    let mut marker_for = vec![0usize; candidates.len()];
    let mut n_markers = 0usize;
    for i in 0..candidates.len() {
        let r = find(&mut parent, i);
        let m = *marker_of_root.entry(r).or_insert_with(|| {
            let m = n_markers;
            n_markers += 1;
            m
        });
        marker_for[i] = m;
    }

    // Priority flood from all candidate pixels.
    const UNLABELED: usize = usize::MAX;
    let mut labels = vec![UNLABELED; w * h];
    let mut heap = BinaryHeap::new();
    let mut order = 0usize;
    for (i, &(x, y)) in candidates.iter().enumerate() {
        let p = y * w + x;
        if labels[p] == UNLABELED {
            labels[p] = marker_for[i];
            heap.push(FloodItem {
                dist: dist[p],
                order,
                pixel: p,
                label: marker_for[i],
            });
            order += 1;
        }
    }
    while let Some(FloodItem { pixel, label, .. }) = heap.pop() {
        let (x, y) = (pixel % w, pixel / w);
        for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
            let nx = (x as isize + dx).rem_euclid(w as isize) as usize;
            let ny = (y as isize + dy).rem_euclid(h as isize) as usize;
            let np = ny * w + nx;
            if image.is_void(nx, ny) && labels[np] == UNLABELED {
                labels[np] = label;
                heap.push(FloodItem {
                    dist: dist[np],
                    order,
                    pixel: np,
                    label,
                });
                order += 1;
            }
        }
    }

    let mut sizes = vec![0usize; n_markers];
    for (p, &l) in labels.iter().enumerate() {
        if image.cells()[p] {
            debug_assert_ne!(l, UNLABELED, "every void pixel must be labeled");
            sizes[l] += 1;
        }
    }
    sizes.retain(|&s| s > 0);
    let n = sizes.len();
    let mean = sizes.iter().sum::<usize>() as f64 / n as f64;
    let var = sizes
        .iter()
        .map(|&s| (s as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    PoreSegmentation {
        n_pores: n,
        mean_size: mean,
        std_size: var.sqrt(),
        sizes,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Naive periodic EDT oracle: min over all solid pixels and tile offsets.
    fn naive_distance_sq(image: &PoreImage) -> Vec<f64> {
        let (w, h) = (image.width(), image.height());
        let mut out = vec![f64::INFINITY; w * h];
        for y in 0..h {
            for x in 0..w {
                for sy in 0..h {
                    for sx in 0..w {
                        if image.is_void(sx, sy) {
                            continue;
                        }
                        let dx = x.abs_diff(sx);
                        let dx = dx.min(w - dx);
                        let dy = y.abs_diff(sy);
                        let dy = dy.min(h - dy);
                        let d = (dx * dx + dy * dy) as f64;
                        if d < out[y * w + x] {
                            out[y * w + x] = d;
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn distance_transform_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let img = PoreImage::from_fn(11, 7, |_, _| rng.random_bool(0.8));
            if img.void_count() == 11 * 7 {
                continue;
            }
            let fast = periodic_distance_sq(&img).unwrap();
            let naive = naive_distance_sq(&img);
            for (a, b) in fast.iter().zip(naive.iter()) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn all_void_is_single_pore() {
        let img = PoreImage::filled(12, 9, true);
        let seg = segment_pores(&img);
        assert_eq!(seg.n_pores, 1);
        assert_eq!(seg.mean_size, 108.0);
        assert_eq!(seg.std_size, 0.0);
    }

    #[test]
    fn two_chambers_with_throat() {
        // 20x10, solid frame, two 8x8-ish chambers joined by a 1-px throat.
        let mut img = PoreImage::filled(20, 10, false);
        for y in 1..9 {
            for x in 1..9 {
                img.set(x, y, true);
            }
            for x in 11..19 {
                img.set(x, y, true);
            }
        }
        img.set(9, 4, true);
        img.set(10, 4, true);
        let seg = segment_pores(&img);
        assert_eq!(seg.n_pores, 2, "sizes: {:?}", seg.sizes);
        // Equal chambers up to throat attribution (2 pixels).
        let diff = (seg.sizes[0] as isize - seg.sizes[1] as isize).unsigned_abs();
        assert!(diff <= 2, "sizes: {:?}", seg.sizes);
        assert!(seg.std_size <= 1.0);
    }

    #[test]
    fn regions_partition_the_void() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..8 {
            let img = PoreImage::from_fn(16, 16, |_, _| rng.random_bool(0.7));
            let seg = segment_pores(&img);
            assert_eq!(seg.sizes.iter().sum::<usize>(), img.void_count());
            for (p, &l) in seg.labels.iter().enumerate() {
                assert_eq!(l != usize::MAX, img.cells()[p]);
            }
        }
    }
}
