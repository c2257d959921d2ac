//! Connectivity metrics on the void-pixel graph: geometric tortuosity with
//! the stair-wise diagonal cost rule, and unit-capacity maximum flow.
//!
//! Both metrics treat one axis as the traverse direction (no wrap) and wrap
//! periodically in the tangential direction, matching the transport setup.

use super::MetricsError;
use crate::geometry::PoreImage;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            other => Err(format!("unknown axis '{other}'")),
        }
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Grid view with the traverse axis mapped to "columns": `across` columns
/// (no wrap), `tang` rows (periodic wrap).
struct AxisGrid<'a> {
    image: &'a PoreImage,
    axis: Axis,
    across: usize,
    tang: usize,
}

impl<'a> AxisGrid<'a> {
    fn new(image: &'a PoreImage, axis: Axis) -> Self {
        let (across, tang) = match axis {
            Axis::X => (image.width(), image.height()),
            Axis::Y => (image.height(), image.width()),
        };
        AxisGrid {
            image,
            axis,
            across,
            tang,
        }
    }

    fn is_void(&self, a: usize, t: usize) -> bool {
        match self.axis {
            Axis::X => self.image.is_void(a, t),
            Axis::Y => self.image.is_void(t, a),
        }
    }

    fn node(&self, a: usize, t: usize) -> usize {
        t * self.across + a
    }

    /// 4-neighbors: along the traverse axis without wrap, tangentially with
    /// wrap. Returns (node, step axis) with axis 0 = traverse, 1 = tangential.
    fn neighbors(&self, a: usize, t: usize) -> impl Iterator<Item = (usize, usize, u8)> + '_ {
        let mut out: [(usize, usize, u8); 4] = [(usize::MAX, 0, 0); 4];
        let mut n = 0;
        if a + 1 < self.across {
            out[n] = (a + 1, t, 0);
            n += 1;
        }
        if a > 0 {
            out[n] = (a - 1, t, 0);
            n += 1;
        }
        out[n] = (a, (t + 1) % self.tang, 1);
        n += 1;
        out[n] = (a, (t + self.tang - 1) % self.tang, 1);
        n += 1;
        out.into_iter()
            .take(n)
            .filter(|&(na, nt, _)| self.is_void(na, nt))
    }
}

#[derive(PartialEq)]
struct HeapItem {
    cost: f64,
    state: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost, ties on state index for determinism.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.state.cmp(&self.state))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest stair-wise path cost, in pixel units, from every void pixel to
/// the nearest void pixel on the `a = across-1` boundary. Runs one
/// multi-source Dijkstra on (pixel, pending-step) states; the cost rule is
/// symmetric under path reversal so source/target roles are interchangeable.
///
/// States per pixel: pending = 0 (no unpaired previous step), 1 (unpaired
/// traverse step), 2 (unpaired tangential step). Taking a step either starts
/// a new pair (cost 1) or completes a perpendicular pair (cost sqrt(2) - 1,
/// on top of the 1 already paid for the previous step).
fn stairwise_distances(grid: &AxisGrid) -> Vec<f64> {
    let n_pixels = grid.across * grid.tang;
    let mut dist = vec![f64::INFINITY; n_pixels * 3];
    let mut heap = BinaryHeap::new();
    for t in 0..grid.tang {
        let a = grid.across - 1;
        if grid.is_void(a, t) {
            let state = grid.node(a, t) * 3;
            dist[state] = 0.0;
            heap.push(HeapItem { cost: 0.0, state });
        }
    }
    while let Some(HeapItem { cost, state }) = heap.pop() {
        if cost > dist[state] {
            continue;
        }
        let pixel = state / 3;
        let pending = state % 3;
        let (a, t) = (pixel % grid.across, pixel / grid.across);
        for (na, nt, step_axis) in grid.neighbors(a, t) {
            let nn = grid.node(na, nt);
            // Option 1: leave the step unpaired (always available).
            let s1 = nn * 3 + (step_axis as usize + 1);
            let c1 = cost + 1.0;
            if c1 < dist[s1] {
                dist[s1] = c1;
                heap.push(HeapItem { cost: c1, state: s1 });
            }
            // Option 2: pair with the pending perpendicular step.
            if pending != 0 && pending != step_axis as usize + 1 {
                let s2 = nn * 3;
                let c2 = cost + (SQRT2 - 1.0);
                if c2 < dist[s2] {
                    dist[s2] = c2;
                    heap.push(HeapItem { cost: c2, state: s2 });
                }
            }
        }
    }
    // Any arrival state is a complete path (a pending step is already paid),
    // so the pixel distance is the minimum over the three states.
    (0..n_pixels)
        .map(|p| dist[p * 3].min(dist[p * 3 + 1]).min(dist[p * 3 + 2]))
        .collect()
}

/// Geometric tortuosity along the axis: mean shortest stair-wise path from
/// each void start-boundary pixel to the opposite boundary, divided by the
/// straight-line length (across - 1 pixels). Starts with no connecting path
/// are skipped; if none connect, the axis is blocked.
pub fn tortuosity(image: &PoreImage, axis: Axis) -> Result<f64, MetricsError> {
    let grid = AxisGrid::new(image, axis);
    if grid.across < 2 {
        return Err(MetricsError::BlockedAxis);
    }
    let dist = stairwise_distances(&grid);
    let mut total = 0.0;
    let mut count = 0usize;
    for t in 0..grid.tang {
        if grid.is_void(0, t) {
            let d = dist[grid.node(0, t)];
            if d.is_finite() {
                total += d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricsError::BlockedAxis);
    }
    Ok(total / count as f64 / (grid.across - 1) as f64)
}

/// Unit-capacity max flow across the axis: every void-void 4-neighbor edge
/// (tangential wrap included) has capacity 1 in each direction; a
/// super-source feeds all start-boundary void pixels and a super-sink drains
/// the end boundary. Shortest-augmenting-path (BFS) max flow.
pub fn max_flow(image: &PoreImage, axis: Axis) -> u64 {
    let grid = AxisGrid::new(image, axis);
    let n_pixels = grid.across * grid.tang;
    let source = n_pixels;
    let sink = n_pixels + 1;
    let mut net = FlowNetwork::new(n_pixels + 2);
    const INF: i64 = i64::MAX / 4;
    for t in 0..grid.tang {
        for a in 0..grid.across {
            if !grid.is_void(a, t) {
                continue;
            }
            let u = grid.node(a, t);
            for (na, nt, _) in grid.neighbors(a, t) {
                net.add_edge(u, grid.node(na, nt), 1);
            }
            if a == 0 {
                net.add_edge(source, u, INF);
            }
            if a == grid.across - 1 {
                net.add_edge(u, sink, INF);
            }
        }
    }
    net.max_flow(source, sink) as u64
}

struct FlowNetwork {
    // Edge list: to, capacity; paired so edge e's reverse is e ^ 1.
    to: Vec<usize>,
    cap: Vec<i64>,
    head: Vec<Vec<usize>>,
}

impl FlowNetwork {
    fn new(n: usize) -> Self {
        FlowNetwork {
            to: Vec::new(),
            cap: Vec::new(),
            head: vec![Vec::new(); n],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i64) {
        let e = self.to.len();
        self.to.push(to);
        self.cap.push(cap);
        self.head[from].push(e);
        self.to.push(from);
        self.cap.push(0);
        self.head[to].push(e + 1);
    }

    fn max_flow(&mut self, source: usize, sink: usize) -> i64 {
        let mut flow = 0i64;
        loop {
            // BFS for the shortest augmenting path.
            let mut parent_edge = vec![usize::MAX; self.head.len()];
            let mut queue = std::collections::VecDeque::new();
            parent_edge[source] = usize::MAX - 1;
            queue.push_back(source);
            'bfs: while let Some(u) = queue.pop_front() {
                for &e in &self.head[u] {
                    let v = self.to[e];
                    if self.cap[e] > 0 && parent_edge[v] == usize::MAX {
                        parent_edge[v] = e;
                        if v == sink {
                            break 'bfs;
                        }
                        queue.push_back(v);
                    }
                }
            }
            if parent_edge[sink] == usize::MAX {
                return flow;
            }
            let mut bottleneck = i64::MAX;
            let mut v = sink;
            while v != source {
                let e = parent_edge[v];
                bottleneck = bottleneck.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = sink;
            while v != source {
                let e = parent_edge[v];
                self.cap[e] -= bottleneck;
                self.cap[e ^ 1] += bottleneck;
                v = self.to[e ^ 1];
            }
            flow += bottleneck;
        }
    }
}

/// Test-support oracles: exhaustive enumeration counterparts of the metrics.
pub mod oracle {
    use super::*;

    /// Minimum cost of a concrete step sequence under the stair-wise rule:
    /// DP over disjoint pairings of consecutive perpendicular steps.
    pub fn path_cost(steps: &[u8]) -> f64 {
        let n = steps.len();
        if n == 0 {
            return 0.0;
        }
        let mut best = vec![0.0f64; n + 1];
        best[1] = 1.0;
        for i in 2..=n {
            let mut c = best[i - 1] + 1.0;
            if steps[i - 1] != steps[i - 2] {
                c = c.min(best[i - 2] + SQRT2);
            }
            best[i] = c;
        }
        best[n]
    }

    /// Brute-force shortest stair-wise path from (a0, t0) to the far
    /// boundary by exhaustive simple-path DFS with branch-and-bound.
    pub fn shortest_stairwise(image: &PoreImage, axis: Axis, a0: usize, t0: usize) -> f64 {
        let grid = AxisGrid::new(image, axis);
        let mut best = f64::INFINITY;
        let mut visited = vec![false; grid.across * grid.tang];
        let mut steps: Vec<u8> = Vec::new();
        fn dfs(
            grid: &AxisGrid,
            a: usize,
            t: usize,
            visited: &mut Vec<bool>,
            steps: &mut Vec<u8>,
            best: &mut f64,
        ) {
            let here = path_cost(steps);
            if here >= *best {
                return;
            }
            if a == grid.across - 1 {
                *best = here;
                return;
            }
            visited[grid.node(a, t)] = true;
            let nbrs: Vec<(usize, usize, u8)> = grid.neighbors(a, t).collect();
            for (na, nt, axis_step) in nbrs {
                if !visited[grid.node(na, nt)] {
                    steps.push(axis_step);
                    dfs(grid, na, nt, visited, steps, best);
                    steps.pop();
                }
            }
            visited[grid.node(a, t)] = false;
        }
        if grid.is_void(a0, t0) {
            dfs(&grid, a0, t0, &mut visited, &mut steps, &mut best);
        }
        best
    }

    /// Brute-force tortuosity: mean over start pixels of the exhaustive
    /// shortest path, normalized like `tortuosity`.
    pub fn tortuosity(image: &PoreImage, axis: Axis) -> Option<f64> {
        let grid = AxisGrid::new(image, axis);
        let mut total = 0.0;
        let mut count = 0usize;
        for t in 0..grid.tang {
            if grid.is_void(0, t) {
                let d = shortest_stairwise(image, axis, 0, t);
                if d.is_finite() {
                    total += d;
                    count += 1;
                }
            }
        }
        if count == 0 {
            None
        } else {
            Some(total / count as f64 / (grid.across - 1) as f64)
        }
    }

    /// Exhaustive min cut: minimum over all source/sink bipartitions of the
    /// void pixels of the number of crossing void-void edges. Start-boundary
    /// pixels are forced to the source side, end-boundary to the sink side
    /// (infinite-capacity attachments); contradictions make the pattern
    /// worth 0 only when no void path exists, which the enumeration handles
    /// by returning the unconstrained minimum over valid assignments.
    pub fn min_cut(image: &PoreImage, axis: Axis) -> u64 {
        let grid = AxisGrid::new(image, axis);
        let mut voids = Vec::new();
        for t in 0..grid.tang {
            for a in 0..grid.across {
                if grid.is_void(a, t) {
                    voids.push((a, t));
                }
            }
        }
        let k = voids.len();
        assert!(k <= 22, "exhaustive min-cut limited to tiny grids");
        let index_of = |a: usize, t: usize| voids.iter().position(|&p| p == (a, t)).unwrap();
        // Undirected void-void edges, deduplicated.
        let mut edges = Vec::new();
        for (i, &(a, t)) in voids.iter().enumerate() {
            for (na, nt, _) in grid.neighbors(a, t) {
                let j = index_of(na, nt);
                if i < j {
                    edges.push((i, j));
                }
            }
        }
        let mut best = u64::MAX;
        'outer: for mask in 0u32..(1 << k) {
            // Bit set = source side.
            for (i, &(a, _)) in voids.iter().enumerate() {
                let on_source_side = mask >> i & 1 == 1;
                if a == 0 && !on_source_side {
                    continue 'outer;
                }
                if a == grid.across - 1 && on_source_side {
                    continue 'outer;
                }
            }
            let crossing = edges
                .iter()
                .filter(|&&(i, j)| (mask >> i & 1) != (mask >> j & 1))
                .count() as u64;
            best = best.min(crossing);
        }
        if best == u64::MAX {
            0
        } else {
            best
        }
    }
}
