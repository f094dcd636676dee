//! Control barrier corridors for fully actuated, unicycle and linear systems.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::barriers::{BarrierError, BarrierEval, BarrierFamily};
use crate::control::LinearPlant;
use crate::geom::linalg::spectral_abscissa;
use crate::geom::{Corridor, CorridorKind, Halfspace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorridorError {
    #[error("invalid corridor parameters: {0}")]
    InvalidParams(String),
    #[error("anchor is unsafe: barrier {index} has value {value:e}")]
    UnsafeAnchor { index: usize, value: f64 },
    #[error("closed-loop matrix is not Hurwitz (spectral abscissa {abscissa})")]
    NotHurwitz { abscissa: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Barrier(#[from] BarrierError),
}

/// Gain `kappa`, linear barrier decay rate `alpha_rate`, safety margin `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorParams {
    pub kappa: f64,
    pub alpha_rate: f64,
    pub epsilon: f64,
}

impl CorridorParams {
    pub fn new(kappa: f64, alpha_rate: f64, epsilon: f64) -> Result<Self, CorridorError> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(CorridorError::InvalidParams(format!("kappa must be > 0, got {kappa}")));
        }
        if !(alpha_rate > 0.0 && alpha_rate.is_finite()) {
            return Err(CorridorError::InvalidParams(format!(
                "alpha must be > 0, got {alpha_rate}"
            )));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(CorridorError::InvalidParams(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        Ok(Self {
            kappa,
            alpha_rate,
            epsilon,
        })
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self, CorridorError> {
        Self::new(self.kappa, self.alpha_rate, epsilon)
    }
}

fn check_safe(evals: &[BarrierEval]) -> Result<(), CorridorError> {
    match evals.iter().position(|e| e.value < 0.0) {
        Some(index) => Err(CorridorError::UnsafeAnchor {
            index,
            value: evals[index].value,
        }),
        None => Ok(()),
    }
}

fn full_kind(params: &CorridorParams) -> CorridorKind {
    if params.epsilon > 0.0 {
        CorridorKind::FullEps
    } else {
        CorridorKind::Full
    }
}

/// Fully actuated corridor from barrier evaluations at `x`:
/// `κ∇hᵢᵀ g ≥ κ∇hᵢᵀ x − α(hᵢ − ε)` for each barrier.
pub fn bc_full_from_evals(evals: &[BarrierEval], x: &DVector<f64>, params: CorridorParams) -> Corridor {
    let halfspaces = evals
        .iter()
        .map(|e| {
            let normal = &e.gradient * params.kappa;
            let offset = normal.dot(x) - params.alpha_rate * (e.value - params.epsilon);
            Halfspace::new(normal, offset)
        })
        .collect();
    Corridor {
        anchor: x.clone(),
        halfspaces,
        kind: full_kind(&params),
        params,
        anchor_unsafe: evals.iter().any(|e| e.value < 0.0),
    }
}

pub fn bc_full(fam: &BarrierFamily, x: &DVector<f64>, params: CorridorParams) -> Result<Corridor, CorridorError> {
    let evals = fam.evals(x)?;
    check_safe(&evals)?;
    Ok(bc_full_from_evals(&evals, x, params))
}

/// As [`bc_full`] but builds at unsafe states too, setting `anchor_unsafe`.
pub fn bc_full_unchecked(
    fam: &BarrierFamily,
    x: &DVector<f64>,
    params: CorridorParams,
) -> Result<Corridor, CorridorError> {
    Ok(bc_full_from_evals(&fam.evals(x)?, x, params))
}

pub fn heading_vector(theta: f64) -> DVector<f64> {
    DVector::from_vec(vec![theta.cos(), theta.sin()])
}

/// Unicycle corridor: `−κ ∇hᵢᵀ ô ôᵀ (x − g) ≥ −α(hᵢ − ε)`.
pub fn bc_uni_from_evals(evals: &[BarrierEval], x: &DVector<f64>, theta: f64, params: CorridorParams) -> Corridor {
    let o = heading_vector(theta);
    let halfspaces = evals
        .iter()
        .map(|e| {
            let normal = &o * (params.kappa * e.gradient.dot(&o));
            let offset = normal.dot(x) - params.alpha_rate * (e.value - params.epsilon);
            Halfspace::new(normal, offset)
        })
        .collect();
    Corridor {
        anchor: x.clone(),
        halfspaces,
        kind: CorridorKind::Uni,
        params,
        anchor_unsafe: evals.iter().any(|e| e.value < 0.0),
    }
}

pub fn bc_uni(
    fam: &BarrierFamily,
    x: &DVector<f64>,
    theta: f64,
    params: CorridorParams,
) -> Result<Corridor, CorridorError> {
    if x.len() != 2 {
        return Err(CorridorError::DimensionMismatch {
            expected: 2,
            got: x.len(),
        });
    }
    let evals = fam.evals(x)?;
    check_safe(&evals)?;
    Ok(bc_uni_from_evals(&evals, x, theta, params))
}

fn closed_loop(plant: &LinearPlant) -> Result<DMatrix<f64>, CorridorError> {
    let l = &plant.a + &plant.b * &plant.k;
    let abscissa = spectral_abscissa(&l);
    if abscissa >= 0.0 {
        return Err(CorridorError::NotHurwitz { abscissa });
    }
    Ok(l)
}

fn check_state(plant: &LinearPlant, x: &DVector<f64>) -> Result<(), CorridorError> {
    if x.len() != plant.a.nrows() {
        return Err(CorridorError::DimensionMismatch {
            expected: plant.a.nrows(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Output-regulation corridor over references `y*`:
/// `∇hᵢᵀ (A+BK)(x − X y*) ≥ −α(hᵢ − ε)`. May be empty, and `Cx` need not be a member.
pub fn bc_lor(
    fam: &BarrierFamily,
    x: &DVector<f64>,
    plant: &LinearPlant,
    params: CorridorParams,
) -> Result<Corridor, CorridorError> {
    check_state(plant, x)?;
    let l = closed_loop(plant)?;
    let evals = fam.evals(x)?;
    check_safe(&evals)?;
    let lx = &l * x;
    let lxm = &l * &plant.x_map;
    let halfspaces = evals
        .iter()
        .map(|e| {
            let normal = -(lxm.tr_mul(&e.gradient));
            let offset = -params.alpha_rate * (e.value - params.epsilon) - e.gradient.dot(&lx);
            Halfspace::new(normal, offset)
        })
        .collect();
    Ok(Corridor {
        anchor: &plant.c * x,
        halfspaces,
        kind: CorridorKind::Lor,
        params,
        anchor_unsafe: false,
    })
}

/// `‖∇hᵢ‖ ‖A+BK‖ ‖x − X y*‖ ≤ α hᵢ` for every barrier.
pub fn trust_region_contains(
    fam: &BarrierFamily,
    x: &DVector<f64>,
    plant: &LinearPlant,
    alpha_rate: f64,
    y_star: &DVector<f64>,
) -> Result<bool, CorridorError> {
    check_state(plant, x)?;
    let l = closed_loop(plant)?;
    let lnorm = spectral_norm(&l);
    let err = (x - &plant.x_map * y_star).norm();
    for e in fam.evals(x)? {
        if e.gradient.norm() * lnorm * err > alpha_rate * e.value {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 || m.amax() == 0.0 {
        return 0.0;
    }
    let gram = m.tr_mul(m);
    // irrational-ish entries keep the start vector off any coordinate-aligned
    // singular subspace
    let mut v = DVector::from_iterator(n, (0..n).map(|i| 1.0 + (i as f64 + 1.0).sqrt() * 1e-3));
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..200_000 {
        let w = &gram * &v;
        let next = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        if (next - lambda).abs() <= 1e-12 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotient of the final vector
    let w = &gram * &v;
    lambda.max(v.dot(&w)).sqrt()
}

fn fmt_vec(out: &mut String, v: &DVector<f64>) {
    for c in v.iter() {
        let _ = write!(out, " {c}");
    }
}

/// Line-oriented corridor log. Each record is
///
/// ```text
/// corridor <kind> kappa <κ> alpha <α> epsilon <ε> unsafe <0|1>
/// anchor <x1> ... <xn>
/// halfspace <n1> ... <nn> <offset>
/// end
/// ```
///
/// with one `halfspace` line per barrier. Numbers round-trip exactly.
pub fn write_corridor_log(corridors: &[Corridor]) -> String {
    let mut out = String::new();
    for c in corridors {
        let _ = writeln!(
            out,
            "corridor {} kappa {} alpha {} epsilon {} unsafe {}",
            c.kind.as_str(),
            c.params.kappa,
            c.params.alpha_rate,
            c.params.epsilon,
            u8::from(c.anchor_unsafe)
        );
        out.push_str("anchor");
        fmt_vec(&mut out, &c.anchor);
        out.push('\n');
        for h in &c.halfspaces {
            out.push_str("halfspace");
            fmt_vec(&mut out, &h.normal);
            let _ = writeln!(out, " {}", h.offset);
        }
        out.push_str("end\n");
    }
    out
}

pub fn parse_corridor_log(text: &str) -> Result<Vec<Corridor>, String> {
    let mut out = Vec::new();
    let mut current: Option<Corridor> = None;
    let mut goal_dim = 0;
    for (lineno, line) in text.lines().enumerate() {
        let err = |msg: &str| format!("line {}: {msg}", lineno + 1);
        let mut tok = line.split_whitespace();
        let Some(head) = tok.next() else { continue };
        let nums = |tok: std::str::SplitWhitespace| -> Result<Vec<f64>, String> {
            tok.map(|t| t.parse::<f64>().map_err(|_| err(&format!("bad number {t:?}"))))
                .collect()
        };
        match head {
            "corridor" => {
                if current.is_some() {
                    return Err(err("missing end"));
                }
                let fields: Vec<&str> = tok.collect();
                if fields.len() != 9
                    || fields[1] != "kappa"
                    || fields[3] != "alpha"
                    || fields[5] != "epsilon"
                    || fields[7] != "unsafe"
                {
                    return Err(err("malformed corridor header"));
                }
                let kind = CorridorKind::parse(fields[0]).ok_or_else(|| err("unknown kind"))?;
                let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("bad number {s:?}")));
                let params = CorridorParams::new(num(fields[2])?, num(fields[4])?, num(fields[6])?)
                    .map_err(|e| err(&e.to_string()))?;
                let anchor_unsafe = match fields[8] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(err("unsafe flag must be 0 or 1")),
                };
                current = Some(Corridor {
                    anchor: DVector::zeros(0),
                    halfspaces: Vec::new(),
                    kind,
                    params,
                    anchor_unsafe,
                });
            }
            "anchor" => {
                let c = current.as_mut().ok_or_else(|| err("anchor outside record"))?;
                c.anchor = DVector::from_vec(nums(tok)?);
                // lor corridors live in output space, so the goal dimension
                // follows the halfspaces rather than the anchor
                goal_dim = c.anchor.len();
            }
            "halfspace" => {
                let c = current.as_mut().ok_or_else(|| err("halfspace outside record"))?;
                let mut v = nums(tok)?;
                let offset = v.pop().ok_or_else(|| err("empty halfspace"))?;
                if c.kind != CorridorKind::Lor && v.len() != goal_dim {
                    return Err(err("halfspace dimension differs from anchor"));
                }
                c.halfspaces.push(Halfspace::new(DVector::from_vec(v), offset));
            }
            "end" => {
                out.push(current.take().ok_or_else(|| err("end outside record"))?);
            }
            other => return Err(err(&format!("unknown record {other:?}"))),
        }
    }
    if current.is_some() {
        return Err("unterminated corridor record".into());
    }
    Ok(out)
}
