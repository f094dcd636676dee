use std::f64::consts::PI;

use nalgebra::Vector2;

use super::{Cell, CellState, OccupancyGrid, WorldError};
use crate::control::{wrap_angle, UnicyclePose};

#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    /// Beam angle relative to the robot heading, in `[-π, π)`.
    pub angle: f64,
    /// Distance to the hit, or `max_range` when nothing was hit.
    pub range: f64,
    pub hit: Option<Vector2<f64>>,
    pub hit_cell: Option<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub pose: UnicyclePose,
    pub max_range: f64,
    pub beams: Vec<Beam>,
}

impl LidarScan {
    pub fn hits(&self) -> Vec<Vector2<f64>> {
        self.beams.iter().filter_map(|b| b.hit).collect()
    }

    fn origin(&self) -> Vector2<f64> {
        Vector2::new(self.pose.position[0], self.pose.position[1])
    }

    fn direction(&self, b: &Beam) -> Vector2<f64> {
        let a = self.pose.heading() + b.angle;
        Vector2::new(a.cos(), a.sin())
    }
}

/// Exact grid traversal (Amanatides–Woo) from `start` along unit `dir`.
/// Calls `visit(cell, t_enter)` for the start cell (with `t = 0`) and each
/// following cell entered at distance `t_enter ≤ max_t`, until `visit`
/// returns false or the ray leaves the grid.
pub fn traverse<F>(grid: &OccupancyGrid, start: &Vector2<f64>, dir: &Vector2<f64>, max_t: f64, mut visit: F)
where
    F: FnMut(Cell, f64) -> bool,
{
    let Some(mut cell) = grid.cell_at(start) else { return };
    if !visit(cell, 0.0) {
        return;
    }
    let res = grid.resolution;
    let rel = (start - grid.origin) / res;
    let axis = |d: f64, pos: f64, idx: usize| -> (isize, f64, f64) {
        if d > 0.0 {
            (1, ((idx as f64 + 1.0) - pos) * res / d, res / d)
        } else if d < 0.0 {
            (-1, (pos - idx as f64) * res / -d, res / -d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (sx, mut tx, dx) = axis(dir.x, rel.x, cell.0);
    let (sy, mut ty, dy) = axis(dir.y, rel.y, cell.1);
    loop {
        let t_enter;
        if tx <= ty {
            t_enter = tx;
            tx += dx;
            let nx = cell.0 as isize + sx;
            if nx < 0 || nx as usize >= grid.width {
                return;
            }
            cell.0 = nx as usize;
        } else {
            t_enter = ty;
            ty += dy;
            let ny = cell.1 as isize + sy;
            if ny < 0 || ny as usize >= grid.height {
                return;
            }
            cell.1 = ny as usize;
        }
        if t_enter > max_t || !visit(cell, t_enter) {
            return;
        }
    }
}

/// Simulated scan of `truth` with `n_beams` evenly spaced over `[-π, π)`
/// relative to the heading.
pub fn lidar_scan(
    truth: &OccupancyGrid,
    pose: &UnicyclePose,
    n_beams: usize,
    max_range: f64,
) -> Result<LidarScan, WorldError> {
    let p = Vector2::new(pose.position[0], pose.position[1]);
    let start = truth
        .cell_at(&p)
        .ok_or(WorldError::PoseOutOfBounds { x: p.x, y: p.y })?;
    if truth.get(start) == CellState::Occupied {
        return Err(WorldError::PoseInObstacle { x: p.x, y: p.y });
    }
    let beams = (0..n_beams)
        .map(|k| {
            let angle = wrap_angle(-PI + 2.0 * PI * k as f64 / n_beams as f64);
            let a = pose.heading() + angle;
            let dir = Vector2::new(a.cos(), a.sin());
            let mut hit = None;
            traverse(truth, &p, &dir, max_range, |c, t| {
                if truth.get(c) == CellState::Occupied {
                    if t < max_range {
                        hit = Some((c, t));
                    }
                    return false;
                }
                true
            });
            match hit {
                Some((c, t)) => Beam {
                    angle,
                    range: t,
                    hit: Some(p + dir * t),
                    hit_cell: Some(c),
                },
                None => Beam {
                    angle,
                    range: max_range,
                    hit: None,
                    hit_cell: None,
                },
            }
        })
        .collect();
    Ok(LidarScan {
        pose: pose.clone(),
        max_range,
        beams,
    })
}

/// Mark cells crossed by each beam free and hit cells occupied. Known cells
/// are never changed. Returns the number of newly known cells.
pub fn update_map(known: &mut OccupancyGrid, scan: &LidarScan) -> Result<usize, WorldError> {
    let p = scan.origin();
    if known.cell_at(&p).is_none() {
        return Err(WorldError::GeometryMismatch);
    }
    let mut fresh = 0;
    let mut mark = |g: &mut OccupancyGrid, c: Cell, s: CellState| {
        if g.get(c) == CellState::Unknown {
            g.set(c, s);
            fresh += 1;
        }
    };
    for b in &scan.beams {
        let dir = scan.direction(b);
        let mut crossed = Vec::new();
        traverse(known, &p, &dir, b.range, |c, t| {
            if Some(c) == b.hit_cell || t >= b.range {
                return false;
            }
            crossed.push(c);
            true
        });
        for c in crossed {
            mark(known, c, CellState::Free);
        }
        if let Some(c) = b.hit_cell {
            if c.0 >= known.width || c.1 >= known.height {
                return Err(WorldError::GeometryMismatch);
            }
            mark(known, c, CellState::Occupied);
        }
    }
    Ok(fresh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::load_world;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn room() -> OccupancyGrid {
        load_world(
            "res 0.1 origin 0 0\n\
             ########\n\
             #......#\n\
             #......#\n\
             #...#..#\n\
             #......#\n\
             ########\n",
        )
        .unwrap()
    }

    #[test]
    fn empty_world_has_no_hits() {
        let g = load_world("res 0.1 origin 0 0\n.....\n.....\n.....\n").unwrap();
        let scan = lidar_scan(&g, &UnicyclePose::new(0.25, 0.15, 0.0), 16, 5.0).unwrap();
        assert!(scan.beams.iter().all(|b| b.hit.is_none() && b.range == 5.0));
    }

    #[test]
    fn wall_one_cell_east() {
        let g = load_world("res 0.1 origin 0 0\n..#\n").unwrap();
        let scan = lidar_scan(&g, &UnicyclePose::new(0.05, 0.05, 0.0), 4, 5.0).unwrap();
        // beam k=2 points along the heading
        let east = &scan.beams[2];
        assert_eq!(east.angle, 0.0);
        assert!((east.range - 0.15).abs() < 1e-12);
        assert_eq!(east.hit_cell, Some((2, 0)));
        assert!((east.hit.unwrap() - Vector2::new(0.2, 0.05)).norm() < 1e-12);
    }

    #[test]
    fn closed_room_hits_every_beam() {
        let scan = lidar_scan(&room(), &UnicyclePose::new(0.25, 0.25, 0.4), 360, 5.0).unwrap();
        assert!(scan.beams.iter().all(|b| b.hit.is_some()));
    }

    #[test]
    fn pose_errors() {
        assert!(matches!(
            lidar_scan(&room(), &UnicyclePose::new(-1.0, 0.2, 0.0), 8, 5.0),
            Err(WorldError::PoseOutOfBounds { .. })
        ));
        assert!(matches!(
            lidar_scan(&room(), &UnicyclePose::new(0.05, 0.05, 0.0), 8, 5.0),
            Err(WorldError::PoseInObstacle { .. })
        ));
    }

    #[test]
    fn hits_lie_on_occupied_faces_and_free_marks_are_true() {
        let truth = room();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..50 {
            let pose = UnicyclePose::new(
                rng.random_range(0.1..0.7),
                rng.random_range(0.1..0.5),
                rng.random_range(-PI..PI),
            );
            let Ok(scan) = lidar_scan(&truth, &pose, 90, 0.35) else {
                continue;
            };
            for b in &scan.beams {
                if let (Some(h), Some(c)) = (b.hit, b.hit_cell) {
                    assert_eq!(truth.get(c), CellState::Occupied);
                    let lo = truth.origin + Vector2::new(c.0 as f64, c.1 as f64) * truth.resolution;
                    let hi = lo + Vector2::repeat(truth.resolution);
                    let eps = 1e-9;
                    let inside = h.x >= lo.x - eps && h.x <= hi.x + eps && h.y >= lo.y - eps && h.y <= hi.y + eps;
                    let on_face = (h.x - lo.x).abs() < eps
                        || (h.x - hi.x).abs() < eps
                        || (h.y - lo.y).abs() < eps
                        || (h.y - hi.y).abs() < eps;
                    assert!(inside && on_face, "{h} vs cell {c:?}");
                    assert!(b.range < scan.max_range);
                } else {
                    assert_eq!(b.range, scan.max_range);
                }
            }
            let mut known = truth.unknown_like();
            update_map(&mut known, &scan).unwrap();
            for i in 0..known.len() {
                let c = known.cell_of_index(i);
                match known.get(c) {
                    CellState::Free => assert_eq!(truth.get(c), CellState::Free),
                    CellState::Occupied => assert_eq!(truth.get(c), CellState::Occupied),
                    CellState::Unknown => {}
                }
            }
            let again = known.clone();
            assert_eq!(update_map(&mut known, &scan).unwrap(), 0);
            assert_eq!(known, again);
        }
    }

    #[test]
    fn no_hit_beam_clears_its_ray() {
        let g = load_world("res 1 origin 0 0\n.....\n").unwrap();
        let scan = lidar_scan(&g, &UnicyclePose::new(0.5, 0.5, 0.0), 4, 3.2).unwrap();
        let mut known = g.unknown_like();
        update_map(&mut known, &scan).unwrap();
        assert_eq!(save_row(&known), "....?");
    }

    #[test]
    fn hit_beam_marks_its_endpoint() {
        let g = load_world("res 1 origin 0 0\n..#..\n").unwrap();
        let scan = lidar_scan(&g, &UnicyclePose::new(0.5, 0.5, 0.0), 4, 10.0).unwrap();
        let mut known = g.unknown_like();
        update_map(&mut known, &scan).unwrap();
        assert_eq!(save_row(&known), "..#??");
    }

    fn save_row(g: &OccupancyGrid) -> String {
        (0..g.width).map(|c| g.get((c, 0)).to_char()).collect()
    }
}
