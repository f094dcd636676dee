//! Occupancy grids, simulated lidar, mapping, frontiers, distance
//! transforms and grid path planning.

mod edt;
mod lidar;
mod planner;

pub use edt::{distance_transform, DistanceField, ObstacleMode, FAR_DISTANCE};
pub use lidar::{lidar_scan, traverse, update_map, Beam, LidarScan};
pub use planner::{
    dijkstra, plan_path, polyline_cost, polyline_min_clearance, select_frontier, DijkstraTree, FrontierPick,
    PlanContext, PlannedPath, PlannerOptions,
};

use nalgebra::Vector2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("row {row} has {got} cells, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },
    #[error("unknown map character {ch:?} at row {row}, column {col}")]
    UnknownChar { ch: char, row: usize, col: usize },
    #[error("pose ({x}, {y}) is outside the grid")]
    PoseOutOfBounds { x: f64, y: f64 },
    #[error("pose ({x}, {y}) is inside an occupied cell")]
    PoseInObstacle { x: f64, y: f64 },
    #[error("grid geometries differ")]
    GeometryMismatch,
    #[error("no path between the requested cells")]
    Unreachable,
    #[error("cell {0:?} is not free")]
    NotFree((usize, usize)),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

impl CellState {
    pub fn to_char(self) -> char {
        match self {
            CellState::Free => '.',
            CellState::Occupied => '#',
            CellState::Unknown => '?',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '.' => Some(CellState::Free),
            '#' => Some(CellState::Occupied),
            '?' => Some(CellState::Unknown),
            _ => None,
        }
    }
}

/// Cell `(col, row)` covers `origin + res·[col, col+1) × res·[row, row+1)`;
/// row 0 is at the bottom.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Vector2<f64>,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn filled(width: usize, height: usize, resolution: f64, origin: Vector2<f64>, state: CellState) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        Self {
            width,
            height,
            resolution,
            origin,
            cells: vec![state; width * height],
        }
    }

    /// Same geometry, every cell unknown.
    pub fn unknown_like(&self) -> Self {
        Self::filled(
            self.width,
            self.height,
            self.resolution,
            self.origin,
            CellState::Unknown,
        )
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.resolution == other.resolution
            && self.origin == other.origin
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, c: Cell) -> usize {
        c.1 * self.width + c.0
    }

    pub fn cell_of_index(&self, i: usize) -> Cell {
        (i % self.width, i / self.width)
    }

    pub fn get(&self, c: Cell) -> CellState {
        self.cells[self.index(c)]
    }

    pub fn set(&mut self, c: Cell, s: CellState) {
        let i = self.index(c);
        self.cells[i] = s;
    }

    pub fn states(&self) -> &[CellState] {
        &self.cells
    }

    pub fn count(&self, s: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == s).count()
    }

    pub fn cell_center(&self, c: Cell) -> Vector2<f64> {
        self.origin + Vector2::new(c.0 as f64 + 0.5, c.1 as f64 + 0.5) * self.resolution
    }

    pub fn cell_at(&self, p: &Vector2<f64>) -> Option<Cell> {
        let u = (p - self.origin) / self.resolution;
        if u.x < 0.0 || u.y < 0.0 {
            return None;
        }
        let (c, r) = (u.x.floor() as usize, u.y.floor() as usize);
        (c < self.width && r < self.height).then_some((c, r))
    }

    pub fn neighbors4(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        let (x, y) = (c.0 as isize, c.1 as isize);
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .into_iter()
            .map(move |(dx, dy)| (x + dx, y + dy))
            .filter(|&(nx, ny)| nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height)
            .map(|(nx, ny)| (nx as usize, ny as usize))
    }

    /// Centers of the cells in state `s`.
    pub fn centers_of(&self, s: CellState) -> Vec<Vector2<f64>> {
        (0..self.len())
            .filter(|&i| self.cells[i] == s)
            .map(|i| self.cell_center(self.cell_of_index(i)))
            .collect()
    }
}

/// Parse a world file: header `res <m> origin <x> <y>`, then one text line
/// per grid row from top to bottom using `.`, `#` and `?`.
pub fn load_world(text: &str) -> Result<OccupancyGrid, WorldError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or(WorldError::Parse {
        line: 1,
        msg: "empty world file".into(),
    })?;
    let perr = |msg: &str| WorldError::Parse {
        line: hl + 1,
        msg: msg.into(),
    };
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 5 || tok[0] != "res" || tok[2] != "origin" {
        return Err(perr("expected header `res <m> origin <x> <y>`"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| perr(&format!("bad number {s:?}")));
    let resolution = num(tok[1])?;
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(perr("resolution must be positive"));
    }
    let origin = Vector2::new(num(tok[3])?, num(tok[4])?);

    let rows: Vec<&str> = lines.map(|(_, l)| l.trim_end()).collect();
    if rows.is_empty() {
        return Err(perr("no grid rows"));
    }
    let width = rows[0].chars().count();
    let height = rows.len();
    let mut grid = OccupancyGrid::filled(width, height, resolution, origin, CellState::Unknown);
    for (li, row) in rows.iter().enumerate() {
        let got = row.chars().count();
        if got != width {
            return Err(WorldError::RaggedRows {
                row: li,
                expected: width,
                got,
            });
        }
        let r = height - 1 - li;
        for (col, ch) in row.chars().enumerate() {
            let s = CellState::from_char(ch).ok_or(WorldError::UnknownChar { ch, row: li, col })?;
            grid.set((col, r), s);
        }
    }
    Ok(grid)
}

/// Inverse of [`load_world`].
pub fn save_world(grid: &OccupancyGrid) -> String {
    let mut out = format!("res {} origin {} {}\n", grid.resolution, grid.origin.x, grid.origin.y);
    for r in (0..grid.height).rev() {
        out.extend((0..grid.width).map(|c| grid.get((c, r)).to_char()));
        out.push('\n');
    }
    out
}

/// Free cells with at least one unknown 4-neighbor, in index order.
pub fn frontier_cells(known: &OccupancyGrid) -> Vec<Cell> {
    (0..known.len())
        .map(|i| known.cell_of_index(i))
        .filter(|&c| known.get(c) == CellState::Free && known.neighbors4(c).any(|n| known.get(n) == CellState::Unknown))
        .collect()
}

/// Free cells reachable from `start` through 4-connected free cells of `grid`.
pub fn reachable_free(grid: &OccupancyGrid, start: Cell) -> Vec<bool> {
    let mut seen = vec![false; grid.len()];
    if grid.get(start) != CellState::Free {
        return seen;
    }
    let mut stack = vec![start];
    seen[grid.index(start)] = true;
    while let Some(c) = stack.pop() {
        for n in grid.neighbors4(c) {
            let i = grid.index(n);
            if !seen[i] && grid.get(n) == CellState::Free {
                seen[i] = true;
                stack.push(n);
            }
        }
    }
    seen
}
