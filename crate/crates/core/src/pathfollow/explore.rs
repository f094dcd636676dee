use std::time::Instant;

use nalgebra::{DVector, Vector2};
use thiserror::Error;

use super::{Path, PathError, PathGoal};
use crate::barriers::{BarrierError, BarrierFamily};
use crate::control::UnicyclePose;
use crate::corridor::{bc_full_from_evals, CorridorParams};
use crate::geom::{clip_corridor_2d, Aabb, Polygon};
use crate::sim::{run_closed_loop, ControlLaw, Sample, SimConfig, SimError, System, Trajectory};
use crate::world::{
    lidar_scan, reachable_free, select_frontier, update_map, CellState, LidarScan, OccupancyGrid, PlannerOptions,
    WorldError,
};

#[derive(Debug, Error, Clone)]
pub enum ExploreError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error("start pose is unsafe under the first scan (barrier {value:e})")]
    StartUnsafe { value: f64 },
    #[error("no map progress for {cycles} consecutive cycles")]
    Stuck { cycles: usize },
    #[error("cycle limit {0} reached")]
    CycleLimit(usize),
    #[error("invalid exploration config: {0}")]
    InvalidConfig(String),
}

/// Obstacle points that define the barriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierSource {
    /// Hit points of the latest scan.
    Sensor,
    /// Centers of unfree map cells that border free space, within lidar
    /// range, with the radius grown by half a cell diagonal.
    Map,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreConfig {
    pub beams: usize,
    pub max_range: f64,
    /// Obstacle radius `r` of the power-distance barriers.
    pub radius: f64,
    pub power: f64,
    /// `kappa` is the forward speed gain.
    pub params: CorridorParams,
    pub kappa_w: f64,
    pub dt: f64,
    pub rescan_period: f64,
    pub cycle_time_max: f64,
    pub max_cycles: usize,
    pub source: BarrierSource,
    pub planner_weight: f64,
    /// Defaults to `2ε`.
    pub goal_tol: Option<f64>,
    /// Half-width of the box the logged corridor polygons are clipped to.
    pub view_half_width: f64,
    pub stuck_cycles: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            beams: 360,
            max_range: 5.0,
            radius: 0.05,
            power: 1.0,
            params: CorridorParams::new(1.0, 1.0, 0.05).expect("valid defaults"),
            kappa_w: 2.0,
            dt: 0.01,
            rescan_period: 0.1,
            cycle_time_max: 30.0,
            max_cycles: 500,
            source: BarrierSource::Sensor,
            planner_weight: 1.0,
            goal_tol: None,
            view_half_width: 1.0,
            stuck_cycles: 3,
        }
    }
}

impl ExploreConfig {
    /// Planner cells closer than this to an occupied cell center are blocked.
    pub fn block_clearance(&self, resolution: f64) -> f64 {
        self.radius + self.params.epsilon + 2.0 * resolution
    }

    fn validate(&self) -> Result<(), ExploreError> {
        let bad = |m: &str| Err(ExploreError::InvalidConfig(m.into()));
        if self.beams == 0 {
            return bad("beams must be positive");
        }
        for (name, v) in [
            ("max_range", self.max_range),
            ("dt", self.dt),
            ("rescan_period", self.rescan_period),
            ("cycle_time_max", self.cycle_time_max),
            ("power", self.power),
            ("kappa_w", self.kappa_w),
            ("view_half_width", self.view_half_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if self.radius.is_nan() || self.radius < 0.0 || self.planner_weight.is_nan() || self.planner_weight < 0.0 {
            return bad("radius and planner_weight must be nonnegative");
        }
        if self.rescan_period < self.dt {
            return bad("rescan_period must be at least dt");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleEnd {
    Reached,
    GoalLost,
    PathInvalidated,
    Timeout,
}

impl CycleEnd {
    pub fn as_str(self) -> &'static str {
        match self {
            CycleEnd::Reached => "reached",
            CycleEnd::GoalLost => "goal_lost",
            CycleEnd::PathInvalidated => "path_invalidated",
            CycleEnd::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CycleLog {
    pub index: usize,
    /// Map at the start of the cycle.
    pub map: OccupancyGrid,
    pub frontier: (usize, usize),
    pub frontier_clearance: f64,
    /// The followed path, trimmed to its ε-safe prefix.
    pub path: Path,
    /// Corridor at each rescan, clipped around the robot.
    pub corridors: Vec<Polygon>,
    /// Barrier and goal-barrier columns hold the minimum over the family in use.
    pub trajectory: Trajectory,
    pub newly_known: usize,
    pub end: CycleEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreSummary {
    pub cycles: usize,
    /// Known share of the free cells 4-reachable from the start in the truth grid.
    pub coverage: f64,
    pub reachable_free: usize,
    pub known_reachable: usize,
    pub min_barrier: f64,
    /// Smallest distance from the robot to an occupied truth cell.
    pub min_true_clearance: f64,
    pub sim_time: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExploreLog {
    pub cycles: Vec<CycleLog>,
    pub final_map: OccupancyGrid,
    pub summary: ExploreSummary,
}

fn barrier_family(cfg: &ExploreConfig, known: &OccupancyGrid, scan: &LidarScan) -> Result<BarrierFamily, BarrierError> {
    match cfg.source {
        BarrierSource::Sensor => {
            let pts: Vec<[f64; 2]> = scan.hits().iter().map(|h| [h.x, h.y]).collect();
            BarrierFamily::point_obstacles(&pts, cfg.radius, cfg.power)
        }
        BarrierSource::Map => {
            let p = Vector2::new(scan.pose.position[0], scan.pose.position[1]);
            let mut pts = Vec::new();
            for i in 0..known.len() {
                let c = known.cell_of_index(i);
                if known.get(c) == CellState::Free {
                    continue;
                }
                let center = known.cell_center(c);
                if (center - p).norm() > cfg.max_range {
                    continue;
                }
                let borders_free = (-1isize..=1).any(|dx| {
                    (-1isize..=1).any(|dy| {
                        let (x, y) = (c.0 as isize + dx, c.1 as isize + dy);
                        x >= 0
                            && y >= 0
                            && (x as usize) < known.width
                            && (y as usize) < known.height
                            && known.get((x as usize, y as usize)) == CellState::Free
                    })
                });
                if borders_free {
                    pts.push([center.x, center.y]);
                }
            }
            let grown = cfg.radius + known.resolution * std::f64::consts::FRAC_1_SQRT_2;
            BarrierFamily::point_obstacles(&pts, grown, cfg.power)
        }
    }
}

/// Distance from `p` to the nearest occupied cell square, searched within `radius`.
fn occupied_clearance(truth: &OccupancyGrid, p: &Vector2<f64>, radius: f64) -> f64 {
    let res = truth.resolution;
    let u = (p - truth.origin) / res;
    let reach = (radius / res).ceil() as isize + 1;
    let (cx, cy) = (u.x.floor() as isize, u.y.floor() as isize);
    let mut best = radius;
    for y in (cy - reach)..=(cy + reach) {
        for x in (cx - reach)..=(cx + reach) {
            if x < 0 || y < 0 || x as usize >= truth.width || y as usize >= truth.height {
                continue;
            }
            if truth.get((x as usize, y as usize)) != CellState::Occupied {
                continue;
            }
            let lo = truth.origin + Vector2::new(x as f64, y as f64) * res;
            let dx = (lo.x - p.x).max(0.0).max(p.x - lo.x - res);
            let dy = (lo.y - p.y).max(0.0).max(p.y - lo.y - res);
            best = best.min((dx * dx + dy * dy).sqrt());
        }
    }
    best
}

/// Keep the samples up to just before the first point with `min h ≤ ε`.
fn safe_prefix(path: &Path, fam: &BarrierFamily, eps: f64, n: usize) -> Result<Path, BarrierError> {
    let samples = path.samples(n);
    for (k, (_, p)) in samples.iter().enumerate().skip(1) {
        if fam.min_value(&DVector::from_vec(vec![p.x, p.y]))? <= eps {
            return Ok(path.prefix(samples[k - 1].0));
        }
    }
    Ok(path.clone())
}

fn compact(mut s: Sample, t0: f64) -> Sample {
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    s.t += t0;
    s.h_values = vec![min(&s.h_values)];
    s.goal_barrier_values = vec![min(&s.goal_barrier_values)];
    s
}

/// Frontier exploration of `truth` by a lidar-equipped unicycle: scan and
/// map, pick the frontier farthest from occupied cells, plan to it, and
/// follow the plan with corridor goals until the endpoint is reached, the
/// goal is lost, new obstacles block the plan, or the cycle times out.
pub fn explore(truth: &OccupancyGrid, start: &UnicyclePose, cfg: &ExploreConfig) -> Result<ExploreLog, ExploreError> {
    cfg.validate()?;
    let clock = Instant::now();
    let res = truth.resolution;
    let eps = cfg.params.epsilon;
    let goal_tol = cfg.goal_tol.unwrap_or(2.0 * eps);
    let popts = PlannerOptions {
        weight: cfg.planner_weight,
        block_clearance: cfg.block_clearance(res),
        smoothing_clearance: cfg.block_clearance(res),
    };
    let system = System::Unicycle;
    let sim = SimConfig {
        system: system.clone(),
        law: ControlLaw::SafeUnicycle { kappa_w: cfg.kappa_w },
        params: cfg.params,
        dt: cfg.dt,
        duration: cfg.rescan_period,
        sample_and_hold: true,
    };

    let mut known = truth.unknown_like();
    let mut state = start.as_state();
    let mut scan = lidar_scan(truth, start, cfg.beams, cfg.max_range)?;
    let mut fresh = update_map(&mut known, &scan)?;
    let mut fam = barrier_family(cfg, &known, &scan)?;
    let h0 = fam.min_value(&start.position)?;
    if h0 <= 0.0 {
        return Err(ExploreError::StartUnsafe { value: h0 });
    }
    let start_cell = truth
        .cell_at(&Vector2::new(start.position[0], start.position[1]))
        .ok_or(WorldError::PoseOutOfBounds {
            x: start.position[0],
            y: start.position[1],
        })?;

    let mut cycles = Vec::new();
    let mut idle = 0;
    let mut t_global = 0.0;
    let mut min_barrier = h0;
    let mut min_true = f64::INFINITY;
    loop {
        let pos = Vector2::new(state[0], state[1]);
        let robot = known
            .cell_at(&pos)
            .ok_or(WorldError::PoseOutOfBounds { x: pos.x, y: pos.y })?;
        let Some(pick) = select_frontier(&known, robot, popts) else {
            break;
        };
        if cycles.len() == cfg.max_cycles {
            return Err(ExploreError::CycleLimit(cfg.max_cycles));
        }
        let mut pts = pick.path.waypoints.clone();
        pts[0] = pos;
        let full = Path::new(pts)?;
        let n = full.default_samples(res);
        let path = safe_prefix(&full, &fam, eps, n)?;
        let n = path.default_samples(res);
        let mut policy = PathGoal::new(&path, n, cfg.params, goal_tol)?;
        let map = known.clone();

        let mut traj = Trajectory {
            dt: cfg.dt,
            samples: Vec::new(),
        };
        let mut corridors = Vec::new();
        let mut t_cycle = 0.0;
        let mut newly_known = fresh;
        let end = loop {
            let bx = system.barrier_state(&state);
            let corridor = bc_full_from_evals(&fam.evals(&bx)?, &bx, cfg.params);
            corridors.push(
                clip_corridor_2d(&corridor, &Aabb::centered(&bx, cfg.view_half_width).expect("2-D box"))
                    .expect("planar corridor"),
            );

            let (seg, lost) = match run_closed_loop(&sim, &fam, &state, &mut policy) {
                Ok(t) => (t, false),
                Err(SimError::GoalLost { trajectory, .. }) => (*trajectory, true),
                Err(e) => return Err(e.into()),
            };
            let mut samples = seg.samples;
            let last = samples.pop().expect("at least one sample");
            let reached = !lost && policy.reached(&last.state);
            let dur = last.t;
            state = last.state.clone();
            if reached {
                samples.push(last);
            }
            for s in samples {
                min_barrier = min_barrier.min(s.h_values.iter().copied().fold(f64::INFINITY, f64::min));
                min_true = min_true.min(occupied_clearance(truth, &Vector2::new(s.state[0], s.state[1]), 1.0));
                traj.samples.push(compact(s, t_global + t_cycle));
            }
            t_cycle += dur;

            let pose = UnicyclePose::from_state(&state);
            scan = lidar_scan(truth, &pose, cfg.beams, cfg.max_range)?;
            let got = update_map(&mut known, &scan)?;
            newly_known += got;
            fam = barrier_family(cfg, &known, &scan)?;

            if reached {
                break CycleEnd::Reached;
            }
            if lost {
                break CycleEnd::GoalLost;
            }
            if got > 0 && path_blocked(&known, &policy, popts) {
                break CycleEnd::PathInvalidated;
            }
            if t_cycle >= cfg.cycle_time_max {
                break CycleEnd::Timeout;
            }
        };
        t_global += t_cycle;
        fresh = 0;
        idle = if newly_known == 0 { idle + 1 } else { 0 };
        cycles.push(CycleLog {
            index: cycles.len(),
            map,
            frontier: pick.cell,
            frontier_clearance: pick.clearance,
            path,
            corridors,
            trajectory: traj,
            newly_known,
            end,
        });
        if idle >= cfg.stuck_cycles {
            return Err(ExploreError::Stuck { cycles: idle });
        }
    }

    let reach = reachable_free(truth, start_cell);
    let reachable = reach.iter().filter(|&&r| r).count();
    let known_reachable = (0..truth.len())
        .filter(|&i| reach[i] && known.get(known.cell_of_index(i)) == CellState::Free)
        .count();
    let final_pos = Vector2::new(state[0], state[1]);
    min_true = min_true.min(occupied_clearance(truth, &final_pos, 1.0));
    Ok(ExploreLog {
        summary: ExploreSummary {
            cycles: cycles.len(),
            coverage: if reachable == 0 {
                1.0
            } else {
                known_reachable as f64 / reachable as f64
            },
            reachable_free: reachable,
            known_reachable,
            min_barrier,
            min_true_clearance: min_true,
            sim_time: t_global,
            wall_time_s: clock.elapsed().as_secs_f64(),
        },
        cycles,
        final_map: known,
    })
}

/// True when a path sample ahead of the robot falls in a cell that is no
/// longer traversable.
fn path_blocked(known: &OccupancyGrid, policy: &PathGoal, opts: PlannerOptions) -> bool {
    let ctx = crate::world::PlanContext::new(known, opts);
    policy
        .sampler
        .points
        .iter()
        .skip(1)
        .any(|p| known.cell_at(p).is_none_or(|c| !ctx.traversable(c)))
}
