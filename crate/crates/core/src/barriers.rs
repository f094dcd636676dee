//! Barrier functions with analytic value, gradient and Hessian.
//!
//! A barrier is nonnegative exactly on safe states. The families here are
//! the power distance to a point obstacle, affine barriers, coordinate
//! embeddings, ε-shifts, and the soft-min and product compositions. The
//! goal-control barrier turns one corridor constraint back into a barrier,
//! so that a chosen goal can be certified to stay in the corridor.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Distance to the obstacle point below which `p < 2` power distances are
/// considered singular.
pub const SINGULAR_DISTANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("power distance evaluated {distance:e} from its obstacle with p = {p} < 2")]
    Singular { distance: f64, p: f64 },
    #[error("dimension mismatch: barrier expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("barrier family is empty")]
    EmptyFamily,
    #[error("invalid barrier parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convexity {
    Convex,
    StrictlyConvex,
    /// Strongly convex with modulus `mu`.
    StronglyConvex(f64),
    Nonconvex,
}

impl Convexity {
    pub fn is_convex(self) -> bool {
        !matches!(self, Convexity::Nonconvex)
    }

    pub fn strong_modulus(self) -> Option<f64> {
        match self {
            Convexity::StronglyConvex(mu) => Some(mu),
            _ => None,
        }
    }
}

/// Value, gradient and Hessian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

pub trait Barrier: Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &DVector<f64>) -> Result<BarrierEval, BarrierError>;

    fn value(&self, x: &DVector<f64>) -> Result<f64, BarrierError> {
        Ok(self.eval(x)?.value)
    }

    fn convexity(&self) -> Convexity;
}

pub type BarrierRef = Arc<dyn Barrier>;

fn check_dim(expected: usize, x: &DVector<f64>) -> Result<(), BarrierError> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(BarrierError::DimensionMismatch { expected, got: x.len() })
    }
}

/// `h(x) = |x - q|^p - r^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDistanceBarrier {
    pub q: DVector<f64>,
    pub r: f64,
    pub p: f64,
}

impl PowerDistanceBarrier {
    pub fn new(q: DVector<f64>, r: f64, p: f64) -> Result<Self, BarrierError> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(BarrierError::InvalidParameter(format!("r must be > 0, got {r}")));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(BarrierError::InvalidParameter(format!("p must be > 0, got {p}")));
        }
        if q.iter().any(|c| !c.is_finite()) {
            return Err(BarrierError::InvalidParameter("obstacle point must be finite".into()));
        }
        Ok(Self { q, r, p })
    }

    pub fn planar(qx: f64, qy: f64, r: f64, p: f64) -> Result<Self, BarrierError> {
        Self::new(DVector::from_vec(vec![qx, qy]), r, p)
    }
}

/// Power-distance evaluation as a free function.
pub fn power_eval(b: &PowerDistanceBarrier, x: &DVector<f64>) -> Result<BarrierEval, BarrierError> {
    b.eval(x)
}

impl Barrier for PowerDistanceBarrier {
    fn dim(&self) -> usize {
        self.q.len()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<BarrierEval, BarrierError> {
        check_dim(self.dim(), x)?;
        let n = self.dim();
        let d = x - &self.q;
        let dist = d.norm();
        let p = self.p;
        let value = dist.powf(p) - self.r.powf(p);
        if p == 2.0 {
            return Ok(BarrierEval {
                value,
                gradient: d * 2.0,
                hessian: DMatrix::identity(n, n) * 2.0,
            });
        }
        if dist < SINGULAR_DISTANCE {
            if p < 2.0 {
                return Err(BarrierError::Singular { distance: dist, p });
            }
            // p > 2: gradient and Hessian both vanish at the obstacle.
            return Ok(BarrierEval {
                value,
                gradient: DVector::zeros(n),
                hessian: DMatrix::zeros(n, n),
            });
        }
        let scale = p * dist.powf(p - 2.0);
        let gradient = &d * scale;
        let outer = &d * d.transpose() / (dist * dist);
        let hessian = (DMatrix::identity(n, n) + outer * (p - 2.0)) * scale;
        Ok(BarrierEval {
            value,
            gradient,
            hessian,
        })
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64, BarrierError> {
        check_dim(self.dim(), x)?;
        Ok((x - &self.q).norm().powf(self.p) - self.r.powf(self.p))
    }

    fn convexity(&self) -> Convexity {
        let p = self.p;
        if p < 1.0 {
            Convexity::Nonconvex
        } else if p == 1.0 {
            Convexity::Convex
        } else if p == 2.0 {
            Convexity::StronglyConvex(2.0)
        } else {
            Convexity::StrictlyConvex
        }
    }
}

/// `h(x) = a·x - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBarrier {
    pub a: DVector<f64>,
    pub b: f64,
}

impl AffineBarrier {
    pub fn new(a: DVector<f64>, b: f64) -> Self {
        Self { a, b }
    }
}

impl Barrier for AffineBarrier {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<BarrierEval, BarrierError> {
        check_dim(self.dim(), x)?;
        let n = self.dim();
        Ok(BarrierEval {
            value: self.a.dot(x) - self.b,
            gradient: self.a.clone(),
            hessian: DMatrix::zeros(n, n),
        })
    }

    fn convexity(&self) -> Convexity {
        Convexity::Convex
    }
}

/// A barrier on selected coordinates of a larger state, e.g. a position
/// barrier lifted to a position-velocity state.
#[derive(Debug, Clone)]
pub struct EmbeddedBarrier {
    inner: BarrierRef,
    coords: Vec<usize>,
    dim: usize,
}

impl EmbeddedBarrier {
    pub fn new(inner: BarrierRef, coords: Vec<usize>, dim: usize) -> Result<Self, BarrierError> {
        if coords.len() != inner.dim() {
            return Err(BarrierError::DimensionMismatch {
                expected: inner.dim(),
                got: coords.len(),
            });
        }
        if coords.iter().any(|&c| c >= dim) {
            return Err(BarrierError::InvalidParameter(format!(
                "coordinate out of range for dimension {dim}"
            )));
        }
        Ok(Self { inner, coords, dim })
    }
}

impl Barrier for EmbeddedBarrier {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &DVector<f64>) -> Result<BarrierEval, BarrierError> {
        check_dim(self.dim, x)?;
        let sub = DVector::from_iterator(self.coords.len(), self.coords.iter().map(|&c| x[c]));
        let e = self.inner.eval(&sub)?;
        let mut gradient = DVector::zeros(self.dim);
        let mut hessian = DMatrix::zeros(self.dim, self.dim);
        for (i, &ci) in self.coords.iter().enumerate() {
            gradient[ci] += e.gradient[i];
            for (j, &cj) in self.coords.iter().enumerate() {
                hessian[(ci, cj)] += e.hessian[(i, j)];
            }
        }
        Ok(BarrierEval {
            value: e.value,
            gradient,
            hessian,
        })
    }

    fn convexity(&self) -> Convexity {
        // Composition with a coordinate projection keeps convexity but not strictness.
        if self.inner.convexity().is_convex() {
            Convexity::Convex
        } else {
            Convexity::Nonconvex
        }
    }
}

/// `h(x) - eps`.
#[derive(Debug, Clone)]
pub struct ShiftedBarrier {
    pub inner: BarrierRef,
    pub eps: f64,
}

impl Barrier for ShiftedBarrier {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<BarrierEval, BarrierError> {
        let mut e = self.inner.eval(x)?;
        e.value -= self.eps;
        Ok(e)
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64, BarrierError> {
        Ok(self.inner.value(x)? - self.eps)
    }

    fn convexity(&self) -> Convexity {
        self.inner.convexity()
    }
}

/// An ordered set of barriers that must all stay nonnegative.
#[derive(Debug, Clone, Default)]
pub struct BarrierFamily {
    pub members: Vec<BarrierRef>,
}

impl BarrierFamily {
    pub fn new(members: Vec<BarrierRef>) -> Self {
        Self { members }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Power distances to planar obstacle points sharing `r` and `p`.
    pub fn point_obstacles(points: &[[f64; 2]], r: f64, p: f64) -> Result<Self, BarrierError> {
        let members = points
            .iter()
            .map(|q| PowerDistanceBarrier::planar(q[0], q[1], r, p).map(|b| Arc::new(b) as BarrierRef))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { members })
    }

    pub fn push(&mut self, b: impl Barrier + 'static) {
        self.members.push(Arc::new(b));
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn evals(&self, x: &DVector<f64>) -> Result<Vec<BarrierEval>, BarrierError> {
        self.members.iter().map(|b| b.eval(x)).collect()
    }

    pub fn values(&self, x: &DVector<f64>) -> Result<Vec<f64>, BarrierError> {
        self.members.iter().map(|b| b.value(x)).collect()
    }

    /// Minimum member value, `+inf` for an empty family.
    pub fn min_value(&self, x: &DVector<f64>) -> Result<f64, BarrierError> {
        Ok(self.values(x)?.into_iter().fold(f64::INFINITY, f64::min))
    }

    pub fn all_convex(&self) -> bool {
        self.members.iter().all(|b| b.convexity().is_convex())
    }
}

/// Lower every member by `eps`; gradients, Hessians and tags are unchanged.
pub fn shift_epsilon(fam: &BarrierFamily, eps: f64) -> Result<BarrierFamily, BarrierError> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(BarrierError::InvalidParameter(format!("eps must be >= 0, got {eps}")));
    }
    Ok(BarrierFamily {
        members: fam
            .members
            .iter()
            .map(|b| Arc::new(ShiftedBarrier { inner: b.clone(), eps }) as BarrierRef)
            .collect(),
    })
}

fn common_dim(fam: &BarrierFamily) -> Result<usize, BarrierError> {
    let first = fam.members.first().ok_or(BarrierError::EmptyFamily)?.dim();
    for b in &fam.members {
        if b.dim() != first {
            return Err(BarrierError::DimensionMismatch {
                expected: first,
                got: b.dim(),
            });
        }
    }
    Ok(first)
}

/// `-(1/λ) log Σ exp(-λ h_i)`, evaluated with a max shift.
#[derive(Debug, Clone)]
pub struct SoftMinBarrier {
    members: Vec<BarrierRef>,
    lambda: f64,
    dim: usize,
}

pub fn softmin_compose(fam: &BarrierFamily, lambda: f64) -> Result<SoftMinBarrier, BarrierError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(BarrierError::InvalidParameter(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    let dim = common_dim(fam)?;
    Ok(SoftMinBarrier {
        members: fam.members.clone(),
        lambda,
        dim,
    })
}

impl SoftMinBarrier {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Barrier for SoftMinBarrier {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &DVector<f64>) -> Result<BarrierEval, BarrierError> {
        let evals = self.members.iter().map(|b| b.eval(x)).collect::<Result<Vec<_>, _>>()?;
        let lam = self.lambda;
        let hmin = evals.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
        let raw: Vec<f64> = evals.iter().map(|e| (-lam * (e.value - hmin)).exp()).collect();
        let total: f64 = raw.iter().sum();
        let value = hmin - total.ln() / lam;

        let n = self.dim;
        let mut gradient = DVector::zeros(n);
        let mut hessian = DMatrix::zeros(n, n);
        let mut second_moment = DMatrix::zeros(n, n);
        for (e, w) in evals.iter().zip(&raw) {
            let w = w / total;
            gradient += &e.gradient * w;
            hessian += &e.hessian * w;
            second_moment += &e.gradient * e.gradient.transpose() * w;
        }
        // ∇²s = Σ w_i ∇²h_i - λ (Σ w_i g_i g_iᵀ - ḡ ḡᵀ)
        hessian -= (second_moment - &gradient * gradient.transpose()) * lam;
        Ok(BarrierEval {
            value,
            gradient,
            hessian,
        })
    }

    fn convexity(&self) -> Convexity {
        Convexity::Nonconvex
    }
}

/// `Π h_i`.
#[derive(Debug, Clone)]
pub struct ProductBarrier {
    members: Vec<BarrierRef>,
    dim: usize,
}

pub fn product_compose(fam: &BarrierFamily) -> Result<ProductBarrier, BarrierError> {
    let dim = common_dim(fam)?;
    Ok(ProductBarrier {
        members: fam.members.clone(),
        dim,
    })
}

impl Barrier for ProductBarrier {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &DVector<f64>) -> Result<BarrierEval, BarrierError> {
        let evals = self.members.iter().map(|b| b.eval(x)).collect::<Result<Vec<_>, _>>()?;
        let m = evals.len();
        let n = self.dim;
        let h: Vec<f64> = evals.iter().map(|e| e.value).collect();
        let value: f64 = h.iter().product();
        let prod_except = |skip: &[usize]| -> f64 {
            h.iter()
                .enumerate()
                .filter(|(k, _)| !skip.contains(k))
                .map(|(_, v)| v)
                .product()
        };

        let gradient = if h.iter().all(|&v| v != 0.0) {
            evals
                .iter()
                .fold(DVector::zeros(n), |acc, e| acc + &e.gradient / e.value)
                * value
        } else {
            (0..m).fold(DVector::zeros(n), |acc, i| acc + &evals[i].gradient * prod_except(&[i]))
        };

        let mut hessian = DMatrix::zeros(n, n);
        for i in 0..m {
            hessian += &evals[i].hessian * prod_except(&[i]);
            for j in 0..m {
                if i != j {
                    hessian += &evals[i].gradient * evals[j].gradient.transpose() * prod_except(&[i, j]);
                }
            }
        }
        Ok(BarrierEval {
            value,
            gradient,
            hessian,
        })
    }

    fn convexity(&self) -> Convexity {
        Convexity::Nonconvex
    }
}

/// `-κ ∇h(x)ᵀ(x - g) + α (h(x) - ε)`: the corridor constraint of one barrier
/// seen as a barrier in the state, for a fixed goal `g`.
#[derive(Debug, Clone)]
pub struct GoalControlBarrier {
    pub base: BarrierRef,
    pub goal: DVector<f64>,
    pub kappa: f64,
    pub alpha_rate: f64,
    pub epsilon: f64,
}

/// Value and gradient of a goal-control barrier.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalBarrierEval {
    pub value: f64,
    pub gradient: DVector<f64>,
}

impl GoalControlBarrier {
    pub fn eval(&self, x: &DVector<f64>) -> Result<GoalBarrierEval, BarrierError> {
        check_dim(self.goal.len(), x)?;
        let e = self.base.eval(x)?;
        Ok(goal_barrier_from_eval(
            &e,
            x,
            &self.goal,
            self.kappa,
            self.alpha_rate,
            self.epsilon,
        ))
    }
}

pub fn goal_barrier_eval(gb: &GoalControlBarrier, x: &DVector<f64>) -> Result<GoalBarrierEval, BarrierError> {
    gb.eval(x)
}

/// Goal-control barrier from an already computed base evaluation.
pub fn goal_barrier_from_eval(
    e: &BarrierEval,
    x: &DVector<f64>,
    goal: &DVector<f64>,
    kappa: f64,
    alpha: f64,
    eps: f64,
) -> GoalBarrierEval {
    let offset = x - goal;
    let value = -kappa * e.gradient.dot(&offset) + alpha * (e.value - eps);
    let gradient = -(&e.hessian * &offset) * kappa + &e.gradient * (alpha - kappa);
    GoalBarrierEval { value, gradient }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    /// Central finite-difference gradient of the value.
    fn fd_gradient(b: &dyn Barrier, x: &DVector<f64>, step: f64) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            (0..x.len()).map(|i| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                (b.value(&xp).unwrap() - b.value(&xm).unwrap()) / (2.0 * step)
            }),
        )
    }

    fn fd_hessian(b: &dyn Barrier, x: &DVector<f64>, step: f64) -> DMatrix<f64> {
        let n = x.len();
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            let col = (b.eval(&xp).unwrap().gradient - b.eval(&xm).unwrap().gradient) / (2.0 * step);
            h.set_column(j, &col);
        }
        h
    }

    #[test]
    fn quadratic_power_distance() {
        let b = PowerDistanceBarrier::planar(0.0, 0.0, 1.0, 2.0).unwrap();
        let e = power_eval(&b, &v(&[3.0, 0.0])).unwrap();
        assert_eq!(e.value, 8.0);
        assert_eq!(e.gradient, v(&[6.0, 0.0]));
        assert_eq!(e.hessian, DMatrix::identity(2, 2) * 2.0);
        assert_eq!(b.convexity(), Convexity::StronglyConvex(2.0));
    }

    #[test]
    fn power_distance_vanishes_on_the_margin_circle() {
        let b = PowerDistanceBarrier::planar(0.5, -1.0, 1.5, 1.0).unwrap();
        let x = v(&[0.5 + 1.5 * 0.6, -1.0 + 1.5 * 0.8]);
        assert!(b.value(&x).unwrap().abs() < 1e-15);
    }

    #[test]
    fn euclidean_power_distance_hessian() {
        let b = PowerDistanceBarrier::planar(2.0, 0.0, 1.0, 1.0).unwrap();
        let x = v(&[0.0, 0.0]);
        let e = b.eval(&x).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.gradient, v(&[-1.0, 0.0]));
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.5]);
        assert!((&e.hessian - &expected).amax() < 1e-15);
        assert!((fd_hessian(&b, &x, 1e-5) - expected).amax() < 1e-8);
    }

    #[test]
    fn singular_point_is_an_error_below_p2() {
        let b = PowerDistanceBarrier::planar(1.0, 1.0, 0.5, 1.0).unwrap();
        assert!(matches!(b.eval(&v(&[1.0, 1.0])), Err(BarrierError::Singular { .. })));
        let b2 = PowerDistanceBarrier::planar(1.0, 1.0, 0.5, 2.0).unwrap();
        assert_eq!(b2.eval(&v(&[1.0, 1.0])).unwrap().value, -0.25);
        let b3 = PowerDistanceBarrier::planar(1.0, 1.0, 0.5, 3.0).unwrap();
        assert_eq!(b3.eval(&v(&[1.0, 1.0])).unwrap().gradient, v(&[0.0, 0.0]));
    }

    #[test]
    fn convexity_tags_follow_p() {
        let tag = |p| PowerDistanceBarrier::planar(0.0, 0.0, 1.0, p).unwrap().convexity();
        assert_eq!(tag(0.5), Convexity::Nonconvex);
        assert_eq!(tag(1.0), Convexity::Convex);
        assert_eq!(tag(1.5), Convexity::StrictlyConvex);
        assert_eq!(tag(2.0), Convexity::StronglyConvex(2.0));
        assert_eq!(tag(3.0), Convexity::StrictlyConvex);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(PowerDistanceBarrier::planar(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(PowerDistanceBarrier::planar(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(softmin_compose(&BarrierFamily::empty(), 1.0).is_err());
        assert!(product_compose(&BarrierFamily::empty()).is_err());
        assert!(shift_epsilon(&BarrierFamily::empty(), -0.1).is_err());
    }

    fn two_points(p: f64) -> BarrierFamily {
        BarrierFamily::point_obstacles(&[[2.0, 0.0], [-1.0, 1.5]], 0.5, p).unwrap()
    }

    #[test]
    fn softmin_of_one_member_is_that_member() {
        let fam = BarrierFamily::point_obstacles(&[[2.0, 0.0]], 0.5, 1.0).unwrap();
        let s = softmin_compose(&fam, 3.0).unwrap();
        let x = v(&[0.3, -0.4]);
        assert!((s.value(&x).unwrap() - fam.members[0].value(&x).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn softmin_of_equal_members_subtracts_log2() {
        let fam = BarrierFamily::point_obstacles(&[[1.0, 0.0], [-1.0, 0.0]], 0.5, 1.0).unwrap();
        let lam = 4.0;
        let s = softmin_compose(&fam, lam).unwrap();
        let x = v(&[0.0, 2.0]);
        let h = fam.members[0].value(&x).unwrap();
        assert!((s.value(&x).unwrap() - (h - 2f64.ln() / lam)).abs() < 1e-14);
    }

    #[test]
    fn sharp_softmin_tracks_the_minimum() {
        let fam = BarrierFamily::new(vec![
            Arc::new(AffineBarrier::new(v(&[0.0, 0.0]), 0.0)),
            Arc::new(AffineBarrier::new(v(&[0.0, 0.0]), -5.0)),
        ]);
        let s = softmin_compose(&fam, 100.0).unwrap();
        // -(1/100) ln(1 + e^-500)
        assert!(s.value(&v(&[0.0, 0.0])).unwrap().abs() < 1e-6);
    }

    #[test]
    fn product_rules() {
        let zero = BarrierFamily::new(vec![
            Arc::new(AffineBarrier::new(v(&[1.0, 0.0]), 0.0)),
            Arc::new(AffineBarrier::new(v(&[0.0, 1.0]), -3.0)),
        ]);
        let p = product_compose(&zero).unwrap();
        let e = p.eval(&v(&[0.0, 1.0])).unwrap();
        assert_eq!(e.value, 0.0);
        // product rule at a zero: g1*h2 + g2*h1 = (1,0)*4 + (0,1)*0
        assert_eq!(e.gradient, v(&[4.0, 0.0]));

        // h1 = 2, h2 = 3 with g1 = (1,2), g2 = (-1,0.5) → value 6, gradient 3 g1 + 2 g2
        let fam = BarrierFamily::new(vec![
            Arc::new(AffineBarrier::new(v(&[1.0, 2.0]), -2.0)),
            Arc::new(AffineBarrier::new(v(&[-1.0, 0.5]), -3.0)),
        ]);
        let p = product_compose(&fam).unwrap();
        let x = v(&[0.0, 0.0]);
        let e = p.eval(&x).unwrap();
        assert_eq!(e.value, 6.0);
        let expected = v(&[1.0, 2.0]) * 3.0 + v(&[-1.0, 0.5]) * 2.0;
        assert!((&e.gradient - &expected).amax() < 1e-14);
        assert!((fd_gradient(&p, &x, 1e-5) - expected).amax() < 1e-9);

        let single = BarrierFamily::point_obstacles(&[[2.0, 0.0]], 0.5, 1.5).unwrap();
        let p = product_compose(&single).unwrap();
        let x = v(&[0.1, 0.7]);
        let (a, b) = (p.eval(&x).unwrap(), single.members[0].eval(&x).unwrap());
        assert_eq!(a.value, b.value);
        assert!((a.gradient - b.gradient).amax() < 1e-15);
        assert_eq!(a.hessian, b.hessian);
    }

    #[test]
    fn goal_barrier_cases() {
        let base: BarrierRef = Arc::new(PowerDistanceBarrier::planar(2.0, 0.0, 1.0, 1.0).unwrap());
        let gb = GoalControlBarrier {
            base: base.clone(),
            goal: v(&[1.0, 0.0]),
            kappa: 1.0,
            alpha_rate: 1.0,
            epsilon: 0.0,
        };
        assert_eq!(goal_barrier_eval(&gb, &v(&[0.0, 0.0])).unwrap().value, 0.0);

        // at the goal only the shifted barrier term is left
        let at_goal = GoalControlBarrier {
            goal: v(&[0.0, 0.5]),
            alpha_rate: 2.5,
            epsilon: 0.1,
            ..gb.clone()
        };
        let h = base.value(&v(&[0.0, 0.5])).unwrap();
        let e = at_goal.eval(&v(&[0.0, 0.5])).unwrap();
        assert!((e.value - 2.5 * (h - 0.1)).abs() < 1e-15);

        // α = κ: gradient is exactly -κ ∇²h (x - g)
        let x = v(&[-0.3, 0.8]);
        let matched = GoalControlBarrier {
            kappa: 1.7,
            alpha_rate: 1.7,
            ..gb.clone()
        };
        let be = base.eval(&x).unwrap();
        let expected = -(&be.hessian * (&x - &matched.goal)) * 1.7;
        assert_eq!(matched.eval(&x).unwrap().gradient, expected);
    }

    #[test]
    fn shift_lowers_values_only() {
        let fam = BarrierFamily::new(vec![Arc::new(AffineBarrier::new(v(&[1.0, 0.0]), 0.0))]);
        let x = v(&[1.0, 0.0]);
        let s0 = shift_epsilon(&fam, 0.0).unwrap();
        assert_eq!(s0.values(&x).unwrap(), fam.values(&x).unwrap());
        let s = shift_epsilon(&fam, 0.25).unwrap();
        assert_eq!(s.values(&x).unwrap(), vec![0.75]);
        assert_eq!(
            s.members[0].eval(&x).unwrap().gradient,
            fam.members[0].eval(&x).unwrap().gradient
        );
        assert_eq!(s.members[0].value(&v(&[0.25, 3.0])).unwrap(), 0.0);
        let pd = BarrierFamily::point_obstacles(&[[0.0, 0.0]], 1.0, 2.0).unwrap();
        assert_eq!(
            shift_epsilon(&pd, 0.3).unwrap().members[0].convexity(),
            Convexity::StronglyConvex(2.0)
        );
    }

    #[test]
    fn embedded_barrier_scatters_derivatives() {
        let inner: BarrierRef = Arc::new(PowerDistanceBarrier::new(v(&[1.0]), 0.5, 2.0).unwrap());
        let b = EmbeddedBarrier::new(inner, vec![0], 2).unwrap();
        let e = b.eval(&v(&[3.0, -7.0])).unwrap();
        assert_eq!(e.value, 4.0 - 0.25);
        assert_eq!(e.gradient, v(&[4.0, 0.0]));
        assert_eq!(e.hessian, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
        assert_eq!(b.convexity(), Convexity::Convex);
    }

    // keeps clear of the p < 2 singularities of `two_points`
    fn random_point(rng: &mut ChaCha8Rng) -> DVector<f64> {
        loop {
            let x = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            let clear = [[2.0, 0.0], [-1.0, 1.5]]
                .iter()
                .all(|q| ((x[0] - q[0]).powi(2) + (x[1] - q[1]).powi(2)).sqrt() > 0.3);
            if clear {
                return x;
            }
        }
    }

    #[test]
    fn finite_differences_agree_with_analytic_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut evaluators: Vec<BarrierRef> = Vec::new();
        for p in [0.5, 1.0, 2.0, 3.0] {
            evaluators.extend(two_points(p).members.iter().cloned());
            evaluators.push(Arc::new(softmin_compose(&two_points(p), 4.0).unwrap()));
        }
        for lam in [2.0, 10.0, 100.0] {
            evaluators.push(Arc::new(softmin_compose(&two_points(1.0), lam).unwrap()));
        }
        evaluators.push(Arc::new(product_compose(&two_points(1.0)).unwrap()));
        evaluators.push(Arc::new(product_compose(&two_points(2.0)).unwrap()));
        for b in &evaluators {
            for _ in 0..100 {
                let x = random_point(&mut rng);
                let e = b.eval(&x).unwrap();
                let g = fd_gradient(b.as_ref(), &x, 1e-5);
                let gerr = (&g - &e.gradient).norm() / e.gradient.norm().max(1.0);
                assert!(gerr <= 1e-5, "{b:?} gradient rel err {gerr} at {x}");
                let h = fd_hessian(b.as_ref(), &x, 1e-5);
                let herr = (&h - &e.hessian).norm() / e.hessian.norm().max(1.0);
                assert!(herr <= 1e-5, "{b:?} hessian rel err {herr} at {x}");
            }
        }
    }

    #[test]
    fn softmin_is_bracketed_by_the_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fam = BarrierFamily::point_obstacles(&[[2.0, 0.0], [-1.0, 1.5], [0.0, -2.0]], 0.5, 1.0).unwrap();
        for lam in [0.5, 2.0, 10.0, 100.0] {
            let s = softmin_compose(&fam, lam).unwrap();
            for _ in 0..200 {
                let x = v(&[rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]);
                let hmin = fam.min_value(&x).unwrap();
                let sv = s.value(&x).unwrap();
                assert!(sv <= hmin + 1e-12);
                assert!(sv >= hmin - 3f64.ln() / lam - 1e-12);
            }
        }
    }

    #[test]
    fn first_order_convexity_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for p in [1.0, 1.5, 2.0, 3.0] {
            let b = PowerDistanceBarrier::planar(0.4, -0.2, 0.7, p).unwrap();
            let mu = b.convexity().strong_modulus().unwrap_or(0.0);
            for _ in 0..1000 {
                let x = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
                let y = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
                let e = b.eval(&x).unwrap();
                let d = &y - &x;
                let lower = e.value + e.gradient.dot(&d) + 0.5 * mu * d.norm_squared();
                assert!(b.value(&y).unwrap() >= lower - 1e-9, "p={p}");
            }
        }
    }

    /// Searches up to 10,000 random pairs in [-3,3]² for a violation of the
    /// first-order condition.
    #[test]
    fn softmin_of_two_power_distances_is_not_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let s = softmin_compose(&two_points(1.0), 2.0).unwrap();
        let found = (0..10_000).any(|_| {
            let x = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            let y = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            match (s.eval(&x), s.value(&y)) {
                (Ok(e), Ok(hy)) => hy < e.value + e.gradient.dot(&(&y - &x)) - 1e-9,
                _ => false,
            }
        });
        assert!(found);
    }
}
