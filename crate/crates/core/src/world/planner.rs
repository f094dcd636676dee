use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector2;

use super::edt::{distance_transform, DistanceField, ObstacleMode};
use super::{frontier_cells, Cell, CellState, OccupancyGrid, WorldError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerOptions {
    /// Clearance weight `w` (m) in the edge cost `step·(1 + w / max(clearance, res))`.
    pub weight: f64,
    /// Cells closer than this (m) to an occupied cell center are not traversable,
    /// except the start cell.
    pub block_clearance: f64,
    /// Smoothing keeps the path clearance at or above `min(this, original)`.
    pub smoothing_clearance: f64,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            weight: 1.0,
            block_clearance: 0.0,
            smoothing_clearance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub cells: Vec<Cell>,
    /// Cell centers along the optimal cell sequence.
    pub raw: Vec<Vector2<f64>>,
    /// Shortcut-smoothed polyline with the same endpoints.
    pub waypoints: Vec<Vector2<f64>>,
    /// Optimal graph cost.
    pub graph_cost: f64,
}

#[derive(Debug, Clone)]
pub struct DijkstraTree {
    pub start: Cell,
    pub dist: Vec<f64>,
    parent: Vec<usize>,
}

impl DijkstraTree {
    pub fn cost_to(&self, grid: &OccupancyGrid, c: Cell) -> f64 {
        self.dist[grid.index(c)]
    }

    pub fn cells_to(&self, grid: &OccupancyGrid, goal: Cell) -> Option<Vec<Cell>> {
        let mut i = grid.index(goal);
        if !self.dist[i].is_finite() {
            return None;
        }
        let mut out = vec![goal];
        while self.parent[i] != usize::MAX {
            i = self.parent[i];
            out.push(grid.cell_of_index(i));
        }
        out.reverse();
        Some(out)
    }
}

#[derive(Debug, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distance fields and traversability shared by planner queries on one map.
#[derive(Debug, Clone)]
pub struct PlanContext<'a> {
    pub grid: &'a OccupancyGrid,
    /// Clearance to unfree cells; drives the edge cost.
    pub cost_field: DistanceField,
    /// Clearance to occupied cells; drives traversability and frontier utility.
    pub occupied_field: DistanceField,
    pub opts: PlannerOptions,
}

impl<'a> PlanContext<'a> {
    pub fn new(grid: &'a OccupancyGrid, opts: PlannerOptions) -> Self {
        Self {
            grid,
            cost_field: distance_transform(grid, ObstacleMode::UnfreeAsObstacle),
            occupied_field: distance_transform(grid, ObstacleMode::OccupiedOnly),
            opts,
        }
    }

    pub fn traversable(&self, c: Cell) -> bool {
        self.grid.get(c) == CellState::Free && self.occupied_field.at(c) >= self.opts.block_clearance
    }

    fn density(&self, c: Cell) -> f64 {
        1.0 + self.opts.weight / self.cost_field.at(c).max(self.grid.resolution)
    }

    pub fn dijkstra(&self, start: Cell) -> DijkstraTree {
        let g = self.grid;
        let mut dist = vec![f64::INFINITY; g.len()];
        let mut parent = vec![usize::MAX; g.len()];
        let si = g.index(start);
        dist[si] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry(0.0, si));
        let (w, h) = (g.width as isize, g.height as isize);
        let ok = |x: isize, y: isize| {
            x >= 0 && y >= 0 && x < w && y < h && {
                let c = (x as usize, y as usize);
                c == start || self.traversable(c)
            }
        };
        while let Some(Entry(d, i)) = heap.pop() {
            if d > dist[i] {
                continue;
            }
            let c = g.cell_of_index(i);
            let (x, y) = (c.0 as isize, c.1 as isize);
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let (nx, ny) = (x + dx, y + dy);
                if !ok(nx, ny) {
                    continue;
                }
                // no corner cutting
                if dx != 0 && dy != 0 && !(ok(x + dx, y) && ok(x, y + dy)) {
                    continue;
                }
                let n = (nx as usize, ny as usize);
                let step = if dx != 0 && dy != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                } * g.resolution;
                let nd = d + step * self.density(n);
                let ni = g.index(n);
                if nd < dist[ni] {
                    dist[ni] = nd;
                    parent[ni] = i;
                    heap.push(Entry(nd, ni));
                }
            }
        }
        DijkstraTree { start, dist, parent }
    }

    fn samples(&self, a: &Vector2<f64>, b: &Vector2<f64>) -> impl Iterator<Item = Vector2<f64>> {
        let len = (b - a).norm();
        let n = ((len / (0.25 * self.grid.resolution)).ceil() as usize).max(1);
        let (a, b) = (*a, *b);
        (0..=n).map(move |k| a + (b - a) * (k as f64 / n as f64))
    }

    /// Midpoint-rule integral of the cost density along a polyline.
    pub fn polyline_cost(&self, pts: &[Vector2<f64>]) -> f64 {
        pts.windows(2)
            .map(|s| {
                let len = (s[1] - s[0]).norm();
                let n = ((len / (0.25 * self.grid.resolution)).ceil() as usize).max(1);
                (0..n)
                    .map(|k| {
                        let p = s[0] + (s[1] - s[0]) * ((k as f64 + 0.5) / n as f64);
                        match self.grid.cell_at(&p) {
                            Some(c) => self.density(c),
                            None => 1.0 + self.opts.weight / self.grid.resolution,
                        }
                    })
                    .sum::<f64>()
                    * len
                    / n as f64
            })
            .sum()
    }

    /// Smallest cost-field clearance sampled along a polyline.
    pub fn polyline_min_clearance(&self, pts: &[Vector2<f64>]) -> f64 {
        let mut m = f64::INFINITY;
        for s in pts.windows(2) {
            for p in self.samples(&s[0], &s[1]) {
                m = m.min(self.grid.cell_at(&p).map_or(0.0, |c| self.cost_field.at(c)));
            }
        }
        if pts.len() == 1 {
            m = self.grid.cell_at(&pts[0]).map_or(0.0, |c| self.cost_field.at(c));
        }
        m
    }

    fn segment_traversable(&self, a: &Vector2<f64>, b: &Vector2<f64>, start: Cell) -> bool {
        self.samples(a, b)
            .all(|p| self.grid.cell_at(&p).is_some_and(|c| c == start || self.traversable(c)))
    }

    /// Greedy shortcutting: from each kept point jump to the farthest later
    /// point whose straight segment is traversable, costs no more than the
    /// replaced stretch, and keeps clearance at `min(smoothing_clearance, stretch minimum)`.
    pub fn smooth(&self, raw: &[Vector2<f64>], start: Cell) -> Vec<Vector2<f64>> {
        if raw.len() <= 2 {
            return raw.to_vec();
        }
        let mut out = vec![raw[0]];
        let mut i = 0;
        while i + 1 < raw.len() {
            let mut next = i + 1;
            for j in ((i + 2)..raw.len()).rev() {
                let stretch = &raw[i..=j];
                let seg = [raw[i], raw[j]];
                if !self.segment_traversable(&raw[i], &raw[j], start) {
                    continue;
                }
                let floor = self.opts.smoothing_clearance.min(self.polyline_min_clearance(stretch));
                if self.polyline_min_clearance(&seg) < floor {
                    continue;
                }
                if self.polyline_cost(&seg) > self.polyline_cost(stretch) * (1.0 + 1e-12) {
                    continue;
                }
                next = j;
                break;
            }
            out.push(raw[next]);
            i = next;
        }
        out
    }

    fn build_path(&self, tree: &DijkstraTree, goal: Cell) -> Option<PlannedPath> {
        let cells = tree.cells_to(self.grid, goal)?;
        let raw: Vec<Vector2<f64>> = cells.iter().map(|&c| self.grid.cell_center(c)).collect();
        let waypoints = self.smooth(&raw, tree.start);
        Some(PlannedPath {
            cells,
            raw,
            waypoints,
            graph_cost: tree.cost_to(self.grid, goal),
        })
    }

    pub fn plan(&self, start: Cell, goal: Cell) -> Result<PlannedPath, WorldError> {
        for c in [start, goal] {
            if self.grid.get(c) != CellState::Free {
                return Err(WorldError::NotFree(c));
            }
        }
        let tree = self.dijkstra(start);
        self.build_path(&tree, goal).ok_or(WorldError::Unreachable)
    }
}

pub fn dijkstra(known: &OccupancyGrid, start: Cell, opts: PlannerOptions) -> DijkstraTree {
    PlanContext::new(known, opts).dijkstra(start)
}

/// Clearance-weighted shortest path over 8-connected free cells.
pub fn plan_path(
    known: &OccupancyGrid,
    start: Cell,
    goal: Cell,
    opts: PlannerOptions,
) -> Result<PlannedPath, WorldError> {
    PlanContext::new(known, opts).plan(start, goal)
}

pub fn polyline_cost(known: &OccupancyGrid, pts: &[Vector2<f64>], opts: PlannerOptions) -> f64 {
    PlanContext::new(known, opts).polyline_cost(pts)
}

pub fn polyline_min_clearance(known: &OccupancyGrid, pts: &[Vector2<f64>]) -> f64 {
    PlanContext::new(known, PlannerOptions::default()).polyline_min_clearance(pts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPick {
    pub cell: Cell,
    /// Distance to the nearest occupied cell center (m).
    pub clearance: f64,
    pub path: PlannedPath,
}

/// Reachable frontier cell farthest from occupied cells; ties go to the
/// cheaper path, then the lower cell index.
pub fn select_frontier(known: &OccupancyGrid, robot: Cell, opts: PlannerOptions) -> Option<FrontierPick> {
    let ctx = PlanContext::new(known, opts);
    let tree = ctx.dijkstra(robot);
    let best = frontier_cells(known)
        .into_iter()
        .filter(|&c| c != robot && ctx.traversable(c) && tree.cost_to(known, c).is_finite())
        .min_by(|&a, &b| {
            let (ca, cb) = (ctx.occupied_field.at(a), ctx.occupied_field.at(b));
            cb.total_cmp(&ca)
                .then(tree.cost_to(known, a).total_cmp(&tree.cost_to(known, b)))
                .then(known.index(a).cmp(&known.index(b)))
        })?;
    Some(FrontierPick {
        cell: best,
        clearance: ctx.occupied_field.at(best),
        path: ctx.build_path(&tree, best)?,
    })
}
