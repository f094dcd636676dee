//! Fixed-step closed-loop simulation with per-sample logging.

use nalgebra::DVector;
use thiserror::Error;

use crate::barriers::{goal_barrier_from_eval, BarrierError, BarrierEval, BarrierFamily};
use crate::control::{
    output_regulation_control, proportional_control, safe_unicycle_velocity_from_evals, unicycle_reference_control,
    wrap_angle, ControlError, LinearPlant, UnicyclePose,
};
use crate::corridor::{bc_full_from_evals, bc_lor, CorridorError, CorridorParams};

/// Barrier value below which a sample counts as a safety violation.
pub const VIOLATION_TOL: f64 = 1e-6;

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Error, Clone)]
pub enum SimError {
    #[error("non-finite state derivative at RK4 stage {stage}")]
    NonFiniteDerivative { stage: usize },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("barrier {barrier} reached {value:e} at sample {sample}")]
    ViolationDetected {
        sample: usize,
        barrier: usize,
        value: f64,
        trajectory: Box<Trajectory>,
    },
    #[error("no admissible goal at sample {sample}")]
    GoalLost { sample: usize, trajectory: Box<Trajectory> },
    #[error("state dimension {got} does not match the system ({expected})")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Corridor(#[from] CorridorError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
}

/// Classical RK4 step of `ẋ = field(x)`.
pub fn rk4_step<F>(field: F, state: &DVector<f64>, dt: f64) -> Result<DVector<f64>, SimError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    try_rk4_step(|s| Ok(field(s)), state, dt)
}

/// RK4 step with a fallible field.
pub fn try_rk4_step<F>(field: F, state: &DVector<f64>, dt: f64) -> Result<DVector<f64>, SimError>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>, SimError>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::InvalidStep(dt));
    }
    let finite = |k: DVector<f64>, stage| {
        if k.iter().all(|c| c.is_finite()) {
            Ok(k)
        } else {
            Err(SimError::NonFiniteDerivative { stage })
        }
    };
    let k1 = finite(field(state)?, 1)?;
    let k2 = finite(field(&(state + &k1 * (dt / 2.0)))?, 2)?;
    let k3 = finite(field(&(state + &k2 * (dt / 2.0)))?, 3)?;
    let k4 = finite(field(&(state + &k3 * dt))?, 4)?;
    Ok(state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum System {
    /// `ẋ = u` in `dim` dimensions.
    FullyActuated { dim: usize },
    /// State `(x, y, θ)`, input `(v, ω)`.
    Unicycle,
    /// `ẋ = Ax + Bu`; goals are output references `y*`.
    Linear(LinearPlant),
}

impl System {
    pub fn state_dim(&self) -> usize {
        match self {
            System::FullyActuated { dim } => *dim,
            System::Unicycle => 3,
            System::Linear(p) => p.state_dim(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            System::FullyActuated { .. } => "fully_actuated",
            System::Unicycle => "unicycle",
            System::Linear(_) => "linear",
        }
    }

    pub fn derivative(&self, state: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self {
            System::FullyActuated { .. } => u.clone(),
            System::Unicycle => {
                let th = state[2];
                DVector::from_vec(vec![u[0] * th.cos(), u[0] * th.sin(), u[1]])
            }
            System::Linear(p) => &p.a * state + &p.b * u,
        }
    }

    /// The part of the state barriers are defined on.
    pub fn barrier_state(&self, state: &DVector<f64>) -> DVector<f64> {
        match self {
            System::Unicycle => state.rows(0, 2).into_owned(),
            _ => state.clone(),
        }
    }

    /// One zero-order-hold RK4 step; unicycle headings are re-wrapped.
    pub fn step(&self, state: &DVector<f64>, u: &DVector<f64>, dt: f64) -> Result<DVector<f64>, SimError> {
        let next = rk4_step(|s| self.derivative(s, u), state, dt)?;
        Ok(self.rewrap(next))
    }

    fn rewrap(&self, mut state: DVector<f64>) -> DVector<f64> {
        if let System::Unicycle = self {
            state[2] = wrap_angle(state[2]);
        }
        state
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlLaw {
    /// `u = -κ(x - g)` with κ from the corridor parameters.
    Proportional,
    /// Unfiltered inner-outer unicycle control.
    UnicycleReference { kappa_w: f64 },
    /// Unicycle control with the safe forward-speed filter.
    SafeUnicycle { kappa_w: f64 },
    /// `u = K(x - X y*) + U y*`.
    OutputRegulation,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub system: System,
    pub law: ControlLaw,
    pub params: CorridorParams,
    pub dt: f64,
    pub duration: f64,
    /// Hold the step-start control over each RK4 step. When false the
    /// control law is re-evaluated at every stage, with the goal fixed.
    pub sample_and_hold: bool,
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Goal chosen for one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalChoice {
    pub goal: DVector<f64>,
    pub s_star: Option<f64>,
}

/// Supplies a goal at each control step.
pub trait GoalPolicy {
    /// `None` means no admissible goal exists at this state.
    fn goal(
        &mut self,
        sample: usize,
        state: &DVector<f64>,
        barrier_state: &DVector<f64>,
        evals: &[BarrierEval],
    ) -> Option<GoalChoice>;

    /// Stop the run after logging this sample.
    fn finished(&self, _state: &DVector<f64>) -> bool {
        false
    }
}

/// The same goal at every step.
#[derive(Debug, Clone)]
pub struct FixedGoal(pub DVector<f64>);

impl GoalPolicy for FixedGoal {
    fn goal(&mut self, _: usize, _: &DVector<f64>, _: &DVector<f64>, _: &[BarrierEval]) -> Option<GoalChoice> {
        Some(GoalChoice {
            goal: self.0.clone(),
            s_star: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: DVector<f64>,
    pub control: DVector<f64>,
    pub h_values: Vec<f64>,
    pub goal: DVector<f64>,
    pub goal_in_corridor: bool,
    pub s_star: Option<f64>,
    /// Goal-control barrier values, one per barrier. Not part of the CSV.
    pub goal_barrier_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn min_barrier(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.h_values.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_goal_barrier(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.goal_barrier_values.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

fn goal_barrier_values(cfg: &SimConfig, evals: &[BarrierEval], bx: &DVector<f64>, goal: &DVector<f64>) -> Vec<f64> {
    let p = cfg.params;
    match &cfg.system {
        System::Linear(plant) => {
            let err = &plant.closed_loop() * (bx - &plant.x_map * goal);
            evals
                .iter()
                .map(|e| e.gradient.dot(&err) + p.alpha_rate * (e.value - p.epsilon))
                .collect()
        }
        _ => evals
            .iter()
            .map(|e| goal_barrier_from_eval(e, bx, goal, p.kappa, p.alpha_rate, p.epsilon).value)
            .collect(),
    }
}

fn control(
    cfg: &SimConfig,
    state: &DVector<f64>,
    evals: &[BarrierEval],
    goal: &DVector<f64>,
) -> Result<DVector<f64>, ControlError> {
    let p = cfg.params;
    Ok(match (&cfg.system, cfg.law) {
        (System::Linear(plant), ControlLaw::OutputRegulation) => output_regulation_control(state, goal, plant),
        (System::Unicycle, ControlLaw::SafeUnicycle { kappa_w }) => {
            let pose = UnicyclePose::from_state(state);
            let (v, w) = safe_unicycle_velocity_from_evals(&pose, goal, evals, p, kappa_w)?;
            DVector::from_vec(vec![v, w])
        }
        (System::Unicycle, ControlLaw::UnicycleReference { kappa_w }) => {
            let pose = UnicyclePose::from_state(state);
            let (v, w) = unicycle_reference_control(&pose, goal, p.kappa, kappa_w);
            DVector::from_vec(vec![v, w])
        }
        (System::FullyActuated { .. }, ControlLaw::Proportional) => proportional_control(state, goal, p.kappa),
        (sys, law) => {
            return Err(ControlError::DimensionMismatch(format!(
                "control law {law:?} does not apply to the {} system",
                sys.name()
            )))
        }
    })
}

fn input_dim(cfg: &SimConfig) -> usize {
    match &cfg.system {
        System::FullyActuated { dim } => *dim,
        System::Unicycle => 2,
        System::Linear(p) => p.b.ncols(),
    }
}

/// Integrate the closed loop from `x0`, logging every sample. Stops at the
/// first sample with a barrier below `-VIOLATION_TOL`.
pub fn run_closed_loop(
    cfg: &SimConfig,
    fam: &BarrierFamily,
    x0: &DVector<f64>,
    policy: &mut dyn GoalPolicy,
) -> Result<Trajectory, SimError> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(SimError::InvalidStep(cfg.dt));
    }
    let n = cfg.system.state_dim();
    if x0.len() != n {
        return Err(SimError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let steps = cfg.steps();
    let mut traj = Trajectory {
        dt: cfg.dt,
        samples: Vec::with_capacity(steps + 1),
    };
    let mut state = x0.clone();
    if let System::Unicycle = cfg.system {
        state[2] = wrap_angle(state[2]);
    }
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let bx = cfg.system.barrier_state(&state);
        let evals = fam.evals(&bx)?;
        let h_values: Vec<f64> = evals.iter().map(|e| e.value).collect();
        let worst = h_values
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, f64)>, (i, &h)| match acc {
                Some((_, w)) if w <= h => acc,
                _ => Some((i, h)),
            });
        let Some(choice) = policy.goal(k, &state, &bx, &evals) else {
            traj.samples.push(Sample {
                t,
                state: state.clone(),
                control: DVector::from_element(input_dim(cfg), f64::NAN),
                h_values,
                goal: DVector::from_element(bx.len(), f64::NAN),
                goal_in_corridor: false,
                s_star: None,
                goal_barrier_values: Vec::new(),
            });
            return Err(SimError::GoalLost {
                sample: k,
                trajectory: Box::new(traj),
            });
        };
        let goal_barrier_values = goal_barrier_values(cfg, &evals, &bx, &choice.goal);
        let goal_in_corridor = match &cfg.system {
            System::Linear(plant) => bc_lor(fam, &state, plant, cfg.params)
                .map(|c| c.contains(&choice.goal))
                .unwrap_or(false),
            _ => bc_full_from_evals(&evals, &bx, cfg.params).contains(&choice.goal),
        };
        if let Some((barrier, value)) = worst.filter(|&(_, h)| h < -VIOLATION_TOL) {
            traj.samples.push(Sample {
                t,
                state: state.clone(),
                control: DVector::from_element(input_dim(cfg), f64::NAN),
                h_values,
                goal: choice.goal,
                goal_in_corridor,
                s_star: choice.s_star,
                goal_barrier_values,
            });
            return Err(SimError::ViolationDetected {
                sample: k,
                barrier,
                value,
                trajectory: Box::new(traj),
            });
        }
        let u = control(cfg, &state, &evals, &choice.goal)?;
        let choice_goal = choice.goal.clone();
        traj.samples.push(Sample {
            t,
            state: state.clone(),
            control: u.clone(),
            h_values,
            goal: choice.goal,
            goal_in_corridor,
            s_star: choice.s_star,
            goal_barrier_values,
        });
        if k == steps || policy.finished(&state) {
            break;
        }
        state = if cfg.sample_and_hold {
            cfg.system.step(&state, &u, cfg.dt)?
        } else {
            let field = |s: &DVector<f64>| -> Result<DVector<f64>, SimError> {
                let ev = fam.evals(&cfg.system.barrier_state(s))?;
                Ok(cfg.system.derivative(s, &control(cfg, s, &ev, &choice_goal)?))
            };
            cfg.system.rewrap(try_rk4_step(field, &state, cfg.dt)?)
        };
    }
    Ok(traj)
}

fn push_row(out: &mut String, vals: impl IntoIterator<Item = String>) {
    let row: Vec<String> = vals.into_iter().collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

/// CSV with columns `t, x1..xn, u1..uk, h1..hm, g1..gd, goal_in_corridor, s_star`.
/// An absent `s_star` is an empty field.
pub fn write_trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let Some(first) = traj.samples.first() else {
        out.push_str("t,goal_in_corridor,s_star\n");
        return out;
    };
    let mut header = vec!["t".to_string()];
    header.extend((1..=first.state.len()).map(|i| format!("x{i}")));
    header.extend((1..=first.control.len()).map(|i| format!("u{i}")));
    header.extend((1..=first.h_values.len()).map(|i| format!("h{i}")));
    header.extend((1..=first.goal.len()).map(|i| format!("g{i}")));
    header.push("goal_in_corridor".into());
    header.push("s_star".into());
    push_row(&mut out, header);
    for s in &traj.samples {
        let mut row = vec![s.t.to_string()];
        row.extend(s.state.iter().map(f64::to_string));
        row.extend(s.control.iter().map(f64::to_string));
        row.extend(s.h_values.iter().map(f64::to_string));
        row.extend(s.goal.iter().map(f64::to_string));
        row.push(u8::from(s.goal_in_corridor).to_string());
        row.push(s.s_star.map(|v| v.to_string()).unwrap_or_default());
        push_row(&mut out, row);
    }
    out
}

pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory, String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty trajectory file")?.split(',').collect();
    let count = |prefix: char| {
        header
            .iter()
            .filter(|h| h.starts_with(prefix) && h[1..].parse::<usize>().is_ok())
            .count()
    };
    let (nx, nu, nh, ng) = (count('x'), count('u'), count('h'), count('g'));
    let width = 1 + nx + nu + nh + ng + 2;
    if header.len() != width
        || header[0] != "t"
        || header[width - 2] != "goal_in_corridor"
        || header[width - 1] != "s_star"
    {
        return Err("unexpected trajectory header".into());
    }
    let mut samples: Vec<Sample> = Vec::new();
    for (i, line) in lines.enumerate() {
        let err = |m: &str| format!("line {}: {m}", i + 2);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != width {
            return Err(err("wrong field count"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("bad number {s:?}")));
        let block = |from: usize, len: usize| -> Result<Vec<f64>, String> {
            f[from..from + len].iter().map(|s| num(s)).collect()
        };
        let t = num(f[0])?;
        let state = DVector::from_vec(block(1, nx)?);
        let control = DVector::from_vec(block(1 + nx, nu)?);
        let h_values = block(1 + nx + nu, nh)?;
        let goal = DVector::from_vec(block(1 + nx + nu + nh, ng)?);
        let goal_in_corridor = match f[width - 2] {
            "0" => false,
            "1" => true,
            _ => return Err(err("goal_in_corridor must be 0 or 1")),
        };
        let s_star = match f[width - 1] {
            "" => None,
            s => Some(num(s)?),
        };
        if let Some(prev) = samples.last() {
            if t <= prev.t {
                return Err(err("time is not increasing"));
            }
        }
        samples.push(Sample {
            t,
            state,
            control,
            h_values,
            goal,
            goal_in_corridor,
            s_star,
            goal_barrier_values: Vec::new(),
        });
    }
    let dt = if samples.len() >= 2 {
        samples[1].t - samples[0].t
    } else {
        0.0
    };
    Ok(Trajectory { dt, samples })
}
