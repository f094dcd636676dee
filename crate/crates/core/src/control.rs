//! Goal controllers and safety filters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

use crate::barriers::{goal_barrier_from_eval, BarrierError, BarrierEval, BarrierFamily};
use crate::corridor::CorridorParams;
use crate::geom::linalg::{lu_solve, spectral_abscissa};

/// Distance to the goal under which the unicycle controller returns zero.
pub const GOAL_DEADBAND: f64 = 1e-12;

/// Tolerance on barrier and goal-barrier values when checking controller
/// preconditions; matches the simulation violation threshold.
pub const PRECONDITION_TOL: f64 = 1e-6;

/// Residual bound for `CX = I` and `AX + BU = 0`.
pub const REGULATION_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("safety filter is infeasible")]
    Infeasible,
    #[error("regulator block matrix is singular at column {column}")]
    SingularBlock { column: usize },
    #[error("regulator equations hold only to {residual:e}")]
    RegulationResidual { residual: f64 },
    #[error("closed-loop matrix is not Hurwitz (spectral abscissa {abscissa})")]
    NotHurwitz { abscissa: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
}

/// Marker for an empty feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Infeasible;

/// `u = -κ (x - g)`.
pub fn proportional_control(x: &DVector<f64>, g: &DVector<f64>, kappa: f64) -> DVector<f64> {
    (x - g) * -kappa
}

/// Wrap an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnicyclePose {
    pub position: DVector<f64>,
    heading: f64,
}

impl UnicyclePose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: DVector::from_vec(vec![x, y]),
            heading: wrap_angle(heading),
        }
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn set_heading(&mut self, theta: f64) {
        self.heading = wrap_angle(theta);
    }

    /// `ô(θ) = (cos θ, sin θ)`.
    pub fn forward(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.heading.cos(), self.heading.sin()])
    }

    /// `n̂(θ) = (-sin θ, cos θ)`.
    pub fn normal(&self) -> DVector<f64> {
        DVector::from_vec(vec![-self.heading.sin(), self.heading.cos()])
    }

    pub fn as_state(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.position[0], self.position[1], self.heading])
    }

    pub fn from_state(s: &DVector<f64>) -> Self {
        Self::new(s[0], s[1], s[2])
    }
}

/// Inner-outer unicycle control: forward speed from the projected goal
/// error, turn rate from the bearing to the goal.
pub fn unicycle_reference_control(pose: &UnicyclePose, g: &DVector<f64>, kappa_v: f64, kappa_w: f64) -> (f64, f64) {
    let to_goal = g - &pose.position;
    if to_goal.norm() < GOAL_DEADBAND {
        return (0.0, 0.0);
    }
    let o = pose.forward();
    let along = o.dot(&to_goal);
    let v = kappa_v * along;
    let mut bearing = pose.normal().dot(&to_goal).atan2(along);
    if bearing >= PI {
        bearing = -PI;
    }
    (v, kappa_w * bearing)
}

/// Feasible set `[lo, hi]` of a scalar variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ScalarInterval {
    pub fn is_feasible(&self) -> bool {
        self.lo <= self.hi
    }
}

/// Feasible interval of `a·v ≥ b` constraints; `None` when a zero-coefficient
/// constraint has `b > 0`.
pub fn scalar_interval(constraints: &[(f64, f64)]) -> Option<ScalarInterval> {
    let mut iv = ScalarInterval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    for &(a, b) in constraints {
        if a > 0.0 {
            iv.lo = iv.lo.max(b / a);
        } else if a < 0.0 {
            iv.hi = iv.hi.min(b / a);
        } else if b > 0.0 {
            return None;
        }
    }
    Some(iv)
}

/// Minimize `(v - v_d)²` subject to `a·v ≥ b` for each `(a, b)`.
pub fn scalar_qp(v_desired: f64, constraints: &[(f64, f64)]) -> Result<f64, Infeasible> {
    let iv = scalar_interval(constraints).ok_or(Infeasible)?;
    if !iv.is_feasible() {
        return Err(Infeasible);
    }
    Ok(v_desired.clamp(iv.lo, iv.hi))
}

/// Constraint rows `(a, b)` of the safe velocity filter at a pose, for
/// diagnostics and testing.
pub fn unicycle_velocity_constraints(
    pose: &UnicyclePose,
    g: &DVector<f64>,
    evals: &[BarrierEval],
    params: CorridorParams,
) -> Vec<(f64, f64)> {
    let o = pose.forward();
    let x = &pose.position;
    let alpha = params.alpha_rate;
    let mut rows = Vec::with_capacity(2 * evals.len());
    // values a hair below zero are discretization residue, already accepted
    // by the precondition check
    for e in evals {
        rows.push((e.gradient.dot(&o), -alpha * e.value.max(0.0)));
    }
    for e in evals {
        let gb = goal_barrier_from_eval(e, x, g, params.kappa, alpha, params.epsilon);
        rows.push((gb.gradient.dot(&o), -alpha * gb.value.max(0.0)));
    }
    rows
}

/// Safe unicycle velocity from precomputed barrier evaluations at the pose.
pub fn safe_unicycle_velocity_from_evals(
    pose: &UnicyclePose,
    g: &DVector<f64>,
    evals: &[BarrierEval],
    params: CorridorParams,
    kappa_w: f64,
) -> Result<(f64, f64), ControlError> {
    let x = &pose.position;
    for (i, e) in evals.iter().enumerate() {
        if e.value < -PRECONDITION_TOL {
            return Err(ControlError::PreconditionViolated(format!(
                "barrier {i} is {:e} at the pose",
                e.value
            )));
        }
        let gb = goal_barrier_from_eval(e, x, g, params.kappa, params.alpha_rate, params.epsilon);
        if gb.value < -PRECONDITION_TOL {
            return Err(ControlError::PreconditionViolated(format!(
                "goal leaves the corridor through barrier {i} ({:e})",
                gb.value
            )));
        }
    }
    let (v_ref, omega) = unicycle_reference_control(pose, g, params.kappa, kappa_w);
    if omega == 0.0 && v_ref == 0.0 && (g - x).norm() < GOAL_DEADBAND {
        return Ok((0.0, 0.0));
    }
    let rows = unicycle_velocity_constraints(pose, g, evals, params);
    let v = scalar_qp(v_ref, &rows).map_err(|_| ControlError::Infeasible)?;
    Ok((v, omega))
}

/// Closest forward speed to the reference that keeps every barrier and every
/// ε-shifted goal-control barrier decaying no faster than rate α. The turn
/// rate is the reference one.
pub fn safe_unicycle_velocity(
    pose: &UnicyclePose,
    g: &DVector<f64>,
    fam: &BarrierFamily,
    params: CorridorParams,
    kappa_w: f64,
) -> Result<(f64, f64), ControlError> {
    let evals = fam.evals(&pose.position)?;
    safe_unicycle_velocity_from_evals(pose, g, &evals, params, kappa_w)
}

/// Solve `[A B; C 0] (X; U) = (0; I)`.
pub fn output_regulation_gains(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ControlError> {
    let n = a.nrows();
    let m = b.ncols();
    let p = c.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n {
        return Err(ControlError::DimensionMismatch(format!(
            "A {}x{}, B {}x{}, C {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if n + p != n + m {
        return Err(ControlError::DimensionMismatch(format!(
            "block matrix needs as many inputs as outputs, got {m} and {p}"
        )));
    }
    let mut block = DMatrix::zeros(n + p, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, m)).copy_from(b);
    block.view_mut((n, 0), (p, n)).copy_from(c);
    let mut rhs = DMatrix::zeros(n + p, p);
    rhs.view_mut((n, 0), (p, p)).fill_with_identity();
    let sol = lu_solve(&block, &rhs).map_err(|s| ControlError::SingularBlock { column: s.column })?;
    let x = sol.rows(0, n).into_owned();
    let u = sol.rows(n, m).into_owned();
    let residual = regulation_residual(a, b, c, &x, &u);
    if residual > REGULATION_TOL {
        return Err(ControlError::RegulationResidual { residual });
    }
    Ok((x, u))
}

/// `max(|CX - I|∞, |AX + BU|∞)`.
pub fn regulation_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> f64 {
    let p = c.nrows();
    let cx = c * x - DMatrix::identity(p, p);
    let ss = a * x + b * u;
    cx.amax().max(ss.amax())
}

/// Linear plant `ẋ = Ax + Bu`, `y = Cx` with stabilizing gain `K` and
/// steady-state maps `X` (output to state) and `U` (output to input).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub x_map: DMatrix<f64>,
    pub u_map: DMatrix<f64>,
}

impl LinearPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self, ControlError> {
        if k.nrows() != b.ncols() || k.ncols() != a.nrows() {
            return Err(ControlError::DimensionMismatch(format!(
                "K must be {}x{}, got {}x{}",
                b.ncols(),
                a.nrows(),
                k.nrows(),
                k.ncols()
            )));
        }
        let (x_map, u_map) = output_regulation_gains(&a, &b, &c)?;
        let abscissa = spectral_abscissa(&(&a + &b * &k));
        if abscissa >= 0.0 {
            return Err(ControlError::NotHurwitz { abscissa });
        }
        Ok(Self {
            a,
            b,
            c,
            k,
            x_map,
            u_map,
        })
    }

    /// The double integrator `ẍ = u` with position output.
    pub fn double_integrator(k1: f64, k2: f64) -> Result<Self, ControlError> {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[k1, k2]),
        )
    }

    pub fn closed_loop(&self) -> DMatrix<f64> {
        &self.a + &self.b * &self.k
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// `u = K (x - X y*) + U y*`.
pub fn output_regulation_control(x: &DVector<f64>, y_star: &DVector<f64>, plant: &LinearPlant) -> DVector<f64> {
    &plant.k * (x - &plant.x_map * y_star) + &plant.u_map * y_star
}

fn feasible_2d(u: &Vector2<f64>, constraints: &[(Vector2<f64>, f64)]) -> bool {
    constraints
        .iter()
        .all(|(a, b)| a.dot(u) - b >= -1e-9 * a.norm().max(1.0))
}

/// Minimize `|u - u_d|²` subject to `aᵀu ≥ b` by enumerating the unconstrained
/// point, single-constraint projections and pairwise vertices.
pub fn qp_filter_2d(u_desired: Vector2<f64>, constraints: &[(Vector2<f64>, f64)]) -> Result<Vector2<f64>, Infeasible> {
    let mut best: Option<(f64, Vector2<f64>)> = None;
    let mut consider = |u: Vector2<f64>| {
        if feasible_2d(&u, constraints) {
            let f = (u - u_desired).norm_squared();
            if best.is_none_or(|(bf, _)| f < bf) {
                best = Some((f, u));
            }
        }
    };
    consider(u_desired);
    for (a, b) in constraints {
        let nn = a.norm_squared();
        if nn > 0.0 {
            consider(u_desired + a * ((b - a.dot(&u_desired)) / nn));
        }
    }
    for i in 0..constraints.len() {
        for j in (i + 1)..constraints.len() {
            let (a1, b1) = constraints[i];
            let (a2, b2) = constraints[j];
            let det = a1.x * a2.y - a1.y * a2.x;
            if det.abs() <= 1e-14 * a1.norm() * a2.norm() {
                continue;
            }
            consider(Vector2::new(
                (b1 * a2.y - a1.y * b2) / det,
                (a1.x * b2 - b1 * a2.x) / det,
            ));
        }
    }
    best.map(|(_, u)| u).ok_or(Infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corridor::bc_full;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    #[test]
    fn proportional_cases() {
        assert_eq!(
            proportional_control(&v(&[1.0, 2.0]), &v(&[1.0, 2.0]), 3.0),
            v(&[0.0, 0.0])
        );
        assert_eq!(
            proportional_control(&v(&[1.0, 0.0]), &v(&[0.0, 0.0]), 1.0),
            v(&[-1.0, 0.0])
        );
    }

    #[test]
    fn angle_wrapping() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-15);
        assert!((wrap_angle(0.25) - 0.25).abs() < 1e-15);
        for k in -20..20 {
            let w = wrap_angle(k as f64 * 0.7);
            assert!((-PI..PI).contains(&w));
        }
    }

    #[test]
    fn unicycle_reference_cases() {
        let pose = UnicyclePose::new(0.0, 0.0, 0.0);
        let (vv, w) = unicycle_reference_control(&pose, &v(&[2.0, 0.0]), 1.5, 2.0);
        assert_eq!((vv, w), (3.0, 0.0));
        let (vv, w) = unicycle_reference_control(&pose, &v(&[-2.0, 0.0]), 1.0, 2.0);
        assert_eq!(vv, -2.0);
        assert_eq!(w, -2.0 * PI);
        let (vv, w) = unicycle_reference_control(&pose, &v(&[0.0, 1.0]), 1.0, 2.0);
        assert_eq!(vv, 0.0);
        assert!((w - PI).abs() < 1e-15);
        assert_eq!(unicycle_reference_control(&pose, &v(&[0.0, 0.0]), 1.0, 1.0), (0.0, 0.0));
    }

    #[test]
    fn scalar_qp_cases() {
        assert_eq!(scalar_qp(3.0, &[]), Ok(3.0));
        assert_eq!(scalar_qp(5.0, &[(1.0, -1.0), (-1.0, -2.0)]), Ok(2.0));
        assert_eq!(scalar_qp(-5.0, &[(1.0, -1.0), (-1.0, -2.0)]), Ok(-1.0));
        assert_eq!(scalar_qp(0.0, &[(1.0, 1.0), (-1.0, 0.0)]), Err(Infeasible));
        assert_eq!(scalar_qp(0.0, &[(0.0, 1.0)]), Err(Infeasible));
        assert_eq!(scalar_qp(0.7, &[(0.0, 0.0), (0.0, -4.0)]), Ok(0.7));
    }

    /// Grid search over `[-10, 10]` with step `1e-4`.
    fn scalar_grid(v_d: f64, rows: &[(f64, f64)]) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for k in 0..=200_000 {
            let x = -10.0 + k as f64 * 1e-4;
            if rows.iter().all(|&(a, b)| a * x >= b - 1e-12) {
                let f = (x - v_d).powi(2);
                if best.is_none_or(|(bf, _)| f < bf) {
                    best = Some((f, x));
                }
            }
        }
        best.map(|(_, x)| x)
    }

    #[test]
    fn scalar_qp_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let v_d = rng.random_range(-8.0..8.0);
            let rows: Vec<(f64, f64)> = (0..rng.random_range(0..5))
                .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-6.0..6.0)))
                .collect();
            match (scalar_qp(v_d, &rows), scalar_grid(v_d, &rows)) {
                (Ok(a), Some(b)) => assert!((a - b).abs() <= 1e-3, "{a} vs {b}"),
                (Err(_), None) => {}
                (Ok(_), None) => {
                    let iv = scalar_interval(&rows).unwrap();
                    assert!(iv.hi - iv.lo < 1e-4 || iv.lo > 10.0 || iv.hi < -10.0);
                }
                (Err(_), Some(b)) => panic!("grid found {b} for an infeasible instance"),
            }
        }
    }

    #[test]
    fn scalar_qp_satisfies_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..1000 {
            let v_d = rng.random_range(-8.0..8.0);
            let rows: Vec<(f64, f64)> = (0..rng.random_range(0..6))
                .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-6.0..6.0)))
                .collect();
            if let Ok(x) = scalar_qp(v_d, &rows) {
                let iv = scalar_interval(&rows).unwrap();
                assert!(rows.iter().all(|&(a, b)| a * x >= b - 1e-12 * b.abs().max(1.0)));
                assert!(x == v_d || x == iv.lo || x == iv.hi);
            }
        }
    }

    #[test]
    fn safe_velocity_without_barriers_is_the_reference() {
        let pose = UnicyclePose::new(0.3, -0.2, 0.8);
        let g = v(&[2.0, 1.0]);
        let params = CorridorParams::new(1.3, 1.3, 0.05).unwrap();
        let (vv, w) = safe_unicycle_velocity(&pose, &g, &BarrierFamily::empty(), params, 2.0).unwrap();
        let expected = -1.3 * pose.forward().dot(&(&pose.position - &g));
        assert_eq!(vv, expected);
        assert_eq!(w, unicycle_reference_control(&pose, &g, 1.3, 2.0).1);
    }

    #[test]
    fn safe_velocity_single_obstacle_scene() {
        let fam = BarrierFamily::point_obstacles(&[[2.0, 0.0]], 1.0, 1.0).unwrap();
        let pose = UnicyclePose::new(0.0, 0.0, 0.0);
        let params = CorridorParams::new(1.0, 1.0, 0.25).unwrap();
        let g = v(&[0.5, 0.0]);
        let evals = fam.evals(&pose.position).unwrap();
        let rows = unicycle_velocity_constraints(&pose, &g, &evals, params);
        // robot constraint -v >= -1
        assert_eq!(rows[0], (-1.0, -1.0));
        let (vv, _) = safe_unicycle_velocity(&pose, &g, &fam, params, 1.0).unwrap();
        assert_eq!(vv, 0.5);
    }

    #[test]
    fn safe_velocity_rejects_bad_preconditions() {
        let fam = BarrierFamily::point_obstacles(&[[2.0, 0.0]], 1.0, 1.0).unwrap();
        let params = CorridorParams::new(1.0, 1.0, 0.25).unwrap();
        let inside = UnicyclePose::new(1.5, 0.0, 0.0);
        assert!(matches!(
            safe_unicycle_velocity(&inside, &v(&[0.0, 0.0]), &fam, params, 1.0),
            Err(ControlError::PreconditionViolated(_))
        ));
        let pose = UnicyclePose::new(0.0, 0.0, 0.0);
        assert!(matches!(
            safe_unicycle_velocity(&pose, &v(&[0.9, 0.0]), &fam, params, 1.0),
            Err(ControlError::PreconditionViolated(_))
        ));
    }

    #[test]
    fn safe_velocity_is_optimal_against_a_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut checked = 0;
        while checked < 200 {
            let pts: Vec<[f64; 2]> = (0..rng.random_range(1..6))
                .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
                .collect();
            let fam = BarrierFamily::point_obstacles(&pts, 0.4, 1.0).unwrap();
            let pose = UnicyclePose::new(0.0, 0.0, rng.random_range(-PI..PI));
            let params = CorridorParams::new(1.0, 1.0, 0.05).unwrap();
            if fam.min_value(&pose.position).unwrap() < 0.0 {
                continue;
            }
            let g = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            if !bc_full(&fam, &pose.position, params).unwrap().contains(&g) {
                continue;
            }
            let (vv, _) = safe_unicycle_velocity(&pose, &g, &fam, params, 1.0).unwrap();
            let evals = fam.evals(&pose.position).unwrap();
            let rows = unicycle_velocity_constraints(&pose, &g, &evals, params);
            assert!(rows.iter().all(|&(a, b)| a * vv >= b - 1e-9));
            let v_ref = unicycle_reference_control(&pose, &g, 1.0, 1.0).0;
            if let Some(grid) = scalar_grid(v_ref, &rows) {
                assert!((vv - v_ref).powi(2) <= (grid - v_ref).powi(2) + 1e-9);
            }
            checked += 1;
        }
    }

    #[test]
    fn regulation_gains_for_the_double_integrator() {
        let plant = LinearPlant::double_integrator(-1.0, -2.0).unwrap();
        assert_eq!(plant.x_map, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(plant.u_map, DMatrix::from_row_slice(1, 1, &[0.0]));
    }

    #[test]
    fn regulation_gains_with_full_actuation() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.5, -3.0]);
        let id = DMatrix::identity(2, 2);
        let (x, u) = output_regulation_gains(&a, &id, &id).unwrap();
        assert!((&x - &id).amax() < 1e-12);
        assert!((&u + &a).amax() < 1e-12);
    }

    #[test]
    fn singular_block_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::zeros(1, 2);
        assert!(matches!(
            output_regulation_gains(&a, &b, &c),
            Err(ControlError::SingularBlock { .. })
        ));
        assert!(matches!(
            LinearPlant::double_integrator(1.0, 0.0),
            Err(ControlError::NotHurwitz { .. })
        ));
    }

    #[test]
    fn regulation_control_cases() {
        let plant = LinearPlant::double_integrator(-1.0, -2.0).unwrap();
        let y = v(&[2.0]);
        let x = &plant.x_map * &y;
        assert_eq!(output_regulation_control(&x, &y, &plant), &plant.u_map * &y);
        let x = v(&[0.3, -1.0]);
        assert_eq!(output_regulation_control(&x, &v(&[0.0]), &plant), &plant.k * &x);
    }

    #[test]
    fn qp_filter_cases() {
        let ud = Vector2::new(0.3, 0.4);
        assert_eq!(qp_filter_2d(ud, &[(Vector2::new(1.0, 0.0), -1.0)]), Ok(ud));
        let u = qp_filter_2d(Vector2::zeros(), &[(Vector2::new(1.0, 0.0), 1.0)]).unwrap();
        assert!((u - Vector2::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(
            qp_filter_2d(
                Vector2::zeros(),
                &[(Vector2::new(1.0, 0.0), 1.0), (Vector2::new(-1.0, 0.0), 1.0)]
            ),
            Err(Infeasible)
        );
        // corner of u1 ≥ 1, u2 ≥ 1
        let u = qp_filter_2d(
            Vector2::zeros(),
            &[(Vector2::new(1.0, 0.0), 1.0), (Vector2::new(0.0, 1.0), 1.0)],
        )
        .unwrap();
        assert!((u - Vector2::new(1.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn qp_filter_is_identity_on_corridor_goals() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let fam = BarrierFamily::point_obstacles(&[[2.0, 0.0], [-1.0, 1.5], [0.0, -2.0]], 0.5, 1.0).unwrap();
        let x = v(&[0.0, 0.0]);
        let params = CorridorParams::new(1.0, 1.0, 0.0).unwrap();
        let c = bc_full(&fam, &x, params).unwrap();
        let evals = fam.evals(&x).unwrap();
        let rows: Vec<(Vector2<f64>, f64)> = evals
            .iter()
            .map(|e| (Vector2::new(e.gradient[0], e.gradient[1]), -e.value))
            .collect();
        let mut n = 0;
        while n < 200 {
            let g = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            if !c.contains(&g) {
                continue;
            }
            let ud = proportional_control(&x, &g, 1.0);
            let ud = Vector2::new(ud[0], ud[1]);
            assert_eq!(qp_filter_2d(ud, &rows), Ok(ud));
            n += 1;
        }
    }
}
