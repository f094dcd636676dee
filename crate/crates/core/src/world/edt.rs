use super::{CellState, OccupancyGrid};

/// Clearance reported when the grid holds no obstacle cell at all.
pub const FAR_DISTANCE: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObstacleMode {
    /// Occupied and unknown cells are obstacles.
    UnfreeAsObstacle,
    /// Only occupied cells are obstacles.
    OccupiedOnly,
}

/// Per-cell Euclidean distance (m) between cell centers and the nearest
/// obstacle cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub mode: ObstacleMode,
    /// Name of the transform; `exact` is true when values are exact at cell centers.
    pub method: &'static str,
    pub exact: bool,
    pub values: Vec<f64>,
}

impl DistanceField {
    pub fn at(&self, c: (usize, usize)) -> f64 {
        self.values[c.1 * self.width + c.0]
    }
}

const INF: f64 = 1e30;

/// Lower envelope of parabolas (Felzenszwalb–Huttenlocher) on one line.
/// Entries `>= INF` are treated as absent sites.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let mut sites = (0..f.len()).filter(|&q| f[q] < INF);
    let Some(first) = sites.next() else {
        out.iter_mut().for_each(|o| *o = INF);
        return;
    };
    let mut k = 0;
    v[0] = first;
    z[0] = -INF;
    z[1] = INF;
    for q in sites {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = INF;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance transform by separable lower envelopes.
pub fn distance_transform(known: &OccupancyGrid, mode: ObstacleMode) -> DistanceField {
    let (w, h) = (known.width, known.height);
    let is_obstacle = |s: CellState| match mode {
        ObstacleMode::UnfreeAsObstacle => s != CellState::Free,
        ObstacleMode::OccupiedOnly => s == CellState::Occupied,
    };
    let mut grid: Vec<f64> = known
        .states()
        .iter()
        .map(|&s| if is_obstacle(s) { 0.0 } else { INF })
        .collect();
    let n = w.max(h);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    let values = grid
        .into_iter()
        .map(|d2| {
            if d2 >= INF {
                FAR_DISTANCE
            } else {
                d2.sqrt() * known.resolution
            }
        })
        .collect();
    DistanceField {
        width: w,
        height: h,
        resolution: known.resolution,
        mode,
        method: "felzenszwalb-huttenlocher",
        exact: true,
        values,
    }
}
