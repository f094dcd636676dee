//! Reference paths, farthest-point goal selection over corridors, path
//! following and frontier exploration.

mod explore;

pub use explore::{
    explore, BarrierSource, CycleEnd, CycleLog, ExploreConfig, ExploreError, ExploreLog, ExploreSummary,
};

use nalgebra::{DVector, Vector2};
use thiserror::Error;

use crate::barriers::{BarrierError, BarrierEval, BarrierFamily};
use crate::corridor::{bc_full_from_evals, CorridorParams};
use crate::geom::{Corridor, MEMBERSHIP_TOL};
use crate::sim::{run_closed_loop, ControlLaw, GoalChoice, GoalPolicy, SimConfig, SimError, System, Trajectory};

#[derive(Debug, Error, Clone)]
pub enum PathError {
    #[error("a path needs at least one waypoint")]
    NoWaypoints,
    #[error("non-finite waypoint {0}")]
    NonFinite(usize),
    #[error("goal selection needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("path point at s = {s} has barrier value {value:e}, needs more than {threshold}")]
    UnsafePath { s: f64, value: f64, threshold: f64 },
    #[error("no path point lies in the initial corridor")]
    NoInitialGoal,
    #[error("path following supports planar fully actuated and unicycle systems, not {0}")]
    UnsupportedSystem(&'static str),
    #[error("no path point in the corridor at sample {sample}")]
    GoalLost { sample: usize, trajectory: Box<Trajectory> },
    #[error(transparent)]
    Sim(SimError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
}

impl From<SimError> for PathError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::GoalLost { sample, trajectory } => PathError::GoalLost { sample, trajectory },
            e => PathError::Sim(e),
        }
    }
}

/// Piecewise-linear planar path parameterized by normalized arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    waypoints: Vec<Vector2<f64>>,
    /// `cumulative[i]` is the arc length up to waypoint `i`.
    cumulative: Vec<f64>,
}

impl Path {
    /// Consecutive duplicate waypoints are dropped.
    pub fn new(points: Vec<Vector2<f64>>) -> Result<Self, PathError> {
        if points.is_empty() {
            return Err(PathError::NoWaypoints);
        }
        if let Some(i) = points.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(PathError::NonFinite(i));
        }
        let mut waypoints: Vec<Vector2<f64>> = Vec::with_capacity(points.len());
        for p in points {
            if waypoints.last() != Some(&p) {
                waypoints.push(p);
            }
        }
        let mut cumulative = vec![0.0];
        for w in waypoints.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + (w[1] - w[0]).norm());
        }
        Ok(Self { waypoints, cumulative })
    }

    pub fn waypoints(&self) -> &[Vector2<f64>] {
        &self.waypoints
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn start(&self) -> Vector2<f64> {
        self.waypoints[0]
    }

    pub fn end(&self) -> Vector2<f64> {
        *self.waypoints.last().unwrap()
    }

    /// `p(s)` for `s` clamped to `[0, 1]`.
    pub fn eval(&self, s: f64) -> Vector2<f64> {
        let len = self.length();
        if len == 0.0 {
            return self.waypoints[0];
        }
        let target = s.clamp(0.0, 1.0) * len;
        let i = self.cumulative.partition_point(|&c| c <= target);
        if i >= self.waypoints.len() {
            return self.end();
        }
        let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
        let t = (target - c0) / (c1 - c0);
        self.waypoints[i - 1] + (self.waypoints[i] - self.waypoints[i - 1]) * t
    }

    /// `max(100, ⌈length / (0.25·resolution)⌉)`.
    pub fn default_samples(&self, resolution: f64) -> usize {
        ((self.length() / (0.25 * resolution)).ceil() as usize).max(100)
    }

    /// `(s_k, p(s_k))` for `s_k = k / (n - 1)`.
    pub fn samples(&self, n: usize) -> Vec<(f64, Vector2<f64>)> {
        (0..n)
            .map(|k| {
                let s = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
                (s, self.eval(s))
            })
            .collect()
    }

    /// Path cut at `s` (the result runs from `p(0)` to `p(s)`).
    pub fn prefix(&self, s: f64) -> Path {
        let target = s.clamp(0.0, 1.0) * self.length();
        let mut pts: Vec<Vector2<f64>> = self
            .waypoints
            .iter()
            .zip(&self.cumulative)
            .take_while(|(_, &c)| c < target)
            .map(|(p, _)| *p)
            .collect();
        pts.push(self.eval(s));
        Path::new(pts).expect("prefix of a valid path")
    }
}

/// One `x y` line per waypoint.
pub fn write_path(path: &Path) -> String {
    path.waypoints.iter().map(|p| format!("{} {}\n", p.x, p.y)).collect()
}

pub fn parse_path(text: &str) -> Result<Path, String> {
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", i + 1))?;
        if v.len() != 2 {
            return Err(format!("line {}: expected 2 numbers, got {}", i + 1, v.len()));
        }
        pts.push(Vector2::new(v[0], v[1]));
    }
    Path::new(pts).map_err(|e| e.to_string())
}

/// Path samples prepared for repeated membership queries against planar
/// corridors.
#[derive(Debug, Clone)]
pub struct PathSampler {
    pub s: Vec<f64>,
    pub points: Vec<Vector2<f64>>,
    /// Index of the constraint that rejected the last sample, tried first.
    hint: usize,
}

impl PathSampler {
    pub fn new(path: &Path, n: usize) -> Result<Self, PathError> {
        if n < 2 {
            return Err(PathError::TooFewSamples(n));
        }
        let (s, points) = path.samples(n).into_iter().unzip();
        Ok(Self { s, points, hint: 0 })
    }

    /// Largest sample in the corridor, scanning every sample from the end.
    pub fn select(&mut self, corridor: &Corridor) -> Option<(f64, Vector2<f64>)> {
        let rows: Vec<(f64, f64, f64, f64)> = corridor
            .halfspaces
            .iter()
            .map(|h| {
                let scale = h.normal.norm().max(1.0);
                (h.normal[0], h.normal[1], h.offset, scale * MEMBERSHIP_TOL)
            })
            .collect();
        let ok = |p: &Vector2<f64>, r: &(f64, f64, f64, f64)| r.0 * p.x + r.1 * p.y - r.2 >= -r.3;
        for k in (0..self.points.len()).rev() {
            let p = &self.points[k];
            if self.hint < rows.len() && !ok(p, &rows[self.hint]) {
                continue;
            }
            match rows.iter().position(|r| !ok(p, r)) {
                Some(j) => self.hint = j,
                None => return Some((self.s[k], *p)),
            }
        }
        None
    }
}

/// Farthest path sample in the corridor: `s_k = k/(n-1)`, all samples
/// tested, largest member returned.
pub fn select_path_goal(
    path: &Path,
    corridor: &Corridor,
    n_samples: usize,
) -> Result<Option<(f64, Vector2<f64>)>, PathError> {
    if corridor.dim() != 2 {
        return Err(PathError::UnsupportedSystem("non-planar corridor"));
    }
    Ok(PathSampler::new(path, n_samples)?.select(corridor))
}

/// Minimum barrier value over `n` evenly spaced points of the segment `[a, b]`.
pub fn segment_min_barrier(
    fam: &BarrierFamily,
    a: &DVector<f64>,
    b: &DVector<f64>,
    n: usize,
) -> Result<f64, BarrierError> {
    let n = n.max(2);
    let mut m = f64::INFINITY;
    for k in 0..n {
        let t = k as f64 / (n - 1) as f64;
        m = m.min(fam.min_value(&(a + (b - a) * t))?);
    }
    Ok(m)
}

/// Goal policy that re-selects the farthest path sample in `BC_full` at every step.
#[derive(Debug, Clone)]
pub struct PathGoal {
    pub sampler: PathSampler,
    pub params: CorridorParams,
    pub end: Vector2<f64>,
    pub goal_tol: f64,
}

impl PathGoal {
    pub fn new(path: &Path, n_samples: usize, params: CorridorParams, goal_tol: f64) -> Result<Self, PathError> {
        Ok(Self {
            sampler: PathSampler::new(path, n_samples)?,
            params,
            end: path.end(),
            goal_tol,
        })
    }

    pub fn reached(&self, position: &DVector<f64>) -> bool {
        (Vector2::new(position[0], position[1]) - self.end).norm() <= self.goal_tol
    }
}

impl GoalPolicy for PathGoal {
    fn goal(&mut self, _: usize, _: &DVector<f64>, bx: &DVector<f64>, evals: &[BarrierEval]) -> Option<GoalChoice> {
        let corridor = bc_full_from_evals(evals, bx, self.params);
        self.sampler.select(&corridor).map(|(s, p)| GoalChoice {
            goal: DVector::from_vec(vec![p.x, p.y]),
            s_star: Some(s),
        })
    }

    fn finished(&self, state: &DVector<f64>) -> bool {
        self.reached(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowOptions {
    pub dt: f64,
    pub t_max: f64,
    /// Defaults to `2ε` for the unicycle and `1e-3` otherwise.
    pub goal_tol: Option<f64>,
    /// Defaults to [`Path::default_samples`] at `resolution`.
    pub n_samples: Option<usize>,
    pub resolution: f64,
    pub kappa_w: f64,
    pub sample_and_hold: bool,
}

impl Default for FollowOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 30.0,
            goal_tol: None,
            n_samples: None,
            resolution: 0.05,
            kappa_w: 2.0,
            sample_and_hold: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FollowRun {
    pub trajectory: Trajectory,
    pub reached: bool,
    pub goal_tol: f64,
}

/// Drive `system` along `path` with farthest-point goals re-selected at
/// every control step.
pub fn follow_path(
    system: &System,
    path: &Path,
    fam: &BarrierFamily,
    params: CorridorParams,
    x0: &DVector<f64>,
    opts: &FollowOptions,
) -> Result<FollowRun, PathError> {
    let law = match system {
        System::FullyActuated { dim: 2 } => ControlLaw::Proportional,
        System::Unicycle => ControlLaw::SafeUnicycle { kappa_w: opts.kappa_w },
        s => return Err(PathError::UnsupportedSystem(s.name())),
    };
    let goal_tol = opts.goal_tol.unwrap_or(match system {
        System::Unicycle => 2.0 * params.epsilon,
        _ => 1e-3,
    });
    let n = opts.n_samples.unwrap_or_else(|| path.default_samples(opts.resolution));
    let mut policy = PathGoal::new(path, n, params, goal_tol)?;

    for (s, p) in policy.sampler.s.iter().zip(&policy.sampler.points) {
        let value = fam.min_value(&DVector::from_vec(vec![p.x, p.y]))?;
        if value <= params.epsilon {
            return Err(PathError::UnsafePath {
                s: *s,
                value,
                threshold: params.epsilon,
            });
        }
    }
    let bx = system.barrier_state(x0);
    let evals = fam.evals(&bx)?;
    if policy
        .sampler
        .clone()
        .select(&bc_full_from_evals(&evals, &bx, params))
        .is_none()
    {
        return Err(PathError::NoInitialGoal);
    }

    let cfg = SimConfig {
        system: system.clone(),
        law,
        params,
        dt: opts.dt,
        duration: opts.t_max,
        sample_and_hold: opts.sample_and_hold,
    };
    let trajectory = run_closed_loop(&cfg, fam, x0, &mut policy)?;
    let reached = trajectory
        .last()
        .is_some_and(|s| policy.reached(&system.barrier_state(&s.state)));
    Ok(FollowRun {
        trajectory,
        reached,
        goal_tol,
    })
}
