//! Halfspaces, corridors as halfspace intersections, and the planar helpers
//! used to draw and sample them.

pub mod linalg;

use std::fmt::Write as _;

use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corridor::CorridorParams;

/// Default absolute membership tolerance, applied after scaling by `max(1, |normal|)`.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Consecutive rejected draws after which [`sample_corridor`] gives up.
pub const SAMPLE_REJECTION_CAP: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation requires a planar corridor, got dimension {0}")]
    NotPlanar(usize),
    #[error("no corridor member found after {trials} consecutive draws")]
    NoMembers { trials: usize },
    #[error("degenerate bounding box")]
    DegenerateBox,
}

/// How a zero-normal constraint was resolved at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroNormal {
    /// `0 >= offset` with `offset <= 0`: satisfied everywhere.
    Vacuous,
    /// `0 >= offset` with `offset > 0`: satisfied nowhere.
    Infeasible,
}

/// Closed halfspace `normal · g >= offset`. Coefficients are stored as built,
/// without normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: DVector<f64>,
    pub offset: f64,
    zero_normal: Option<ZeroNormal>,
}

impl Halfspace {
    pub fn new(normal: DVector<f64>, offset: f64) -> Self {
        let zero_normal = if normal.iter().all(|&c| c == 0.0) {
            Some(if offset <= 0.0 {
                ZeroNormal::Vacuous
            } else {
                ZeroNormal::Infeasible
            })
        } else {
            None
        };
        Self {
            normal,
            offset,
            zero_normal,
        }
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    pub fn zero_normal(&self) -> Option<ZeroNormal> {
        self.zero_normal
    }

    /// Signed slack `normal·g - offset`, scaled by `max(1, |normal|)`.
    pub fn scaled_slack(&self, g: &DVector<f64>) -> f64 {
        (self.normal.dot(g) - self.offset) / self.normal.norm().max(1.0)
    }

    pub fn contains(&self, g: &DVector<f64>, tol: f64) -> bool {
        self.scaled_slack(g) >= -tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorridorKind {
    Full,
    FullEps,
    Uni,
    Lor,
}

impl CorridorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CorridorKind::Full => "full",
            CorridorKind::FullEps => "full_eps",
            CorridorKind::Uni => "uni",
            CorridorKind::Lor => "lor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "full" => CorridorKind::Full,
            "full_eps" => CorridorKind::FullEps,
            "uni" => CorridorKind::Uni,
            "lor" => CorridorKind::Lor,
            _ => return None,
        })
    }
}

/// Intersection of halfspaces in goal space, anchored at the state it was
/// built from. One halfspace per barrier, in family order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corridor {
    pub anchor: DVector<f64>,
    pub halfspaces: Vec<Halfspace>,
    pub kind: CorridorKind,
    pub params: CorridorParams,
    /// Set when the corridor was built at a state with some negative barrier.
    pub anchor_unsafe: bool,
}

impl Corridor {
    /// Corridor over the whole goal space of dimension `dim`.
    pub fn whole_space(anchor: DVector<f64>, kind: CorridorKind, params: CorridorParams) -> Self {
        Self {
            anchor,
            halfspaces: Vec::new(),
            kind,
            params,
            anchor_unsafe: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// True when a zero-normal constraint already rules out every goal.
    pub fn is_trivially_empty(&self) -> bool {
        self.halfspaces
            .iter()
            .any(|h| h.zero_normal == Some(ZeroNormal::Infeasible))
    }

    pub fn contains(&self, g: &DVector<f64>) -> bool {
        self.halfspaces.iter().all(|h| h.contains(g, MEMBERSHIP_TOL))
    }

    /// Smallest scaled slack over all constraints (`+inf` for the whole space).
    pub fn min_slack(&self, g: &DVector<f64>) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.scaled_slack(g))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Membership test with an explicit tolerance.
pub fn corridor_contains(c: &Corridor, g: &DVector<f64>, tol: f64) -> Result<bool, GeomError> {
    if g.len() != c.dim() {
        return Err(GeomError::DimensionMismatch {
            expected: c.dim(),
            got: g.len(),
        });
    }
    Ok(c.halfspaces.iter().all(|h| h.contains(g, tol)))
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Aabb {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl Aabb {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self, GeomError> {
        if lo.len() != hi.len() {
            return Err(GeomError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo
            .iter()
            .zip(hi.iter())
            .any(|(l, h)| h.partial_cmp(l) != Some(std::cmp::Ordering::Greater))
        {
            return Err(GeomError::DegenerateBox);
        }
        Ok(Self { lo, hi })
    }

    /// Cube of half-width `half_width` around `center`.
    pub fn centered(center: &DVector<f64>, half_width: f64) -> Result<Self, GeomError> {
        let d = DVector::from_element(center.len(), half_width);
        Self::new(center - &d, center + &d)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Convex polygon, counterclockwise. Empty when the clipped region vanishes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon {
    pub vertices: Vec<Vector2<f64>>,
}

impl Polygon {
    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            * 0.5
    }

    /// Vertex average; inside the polygon since it is convex.
    pub fn centroid(&self) -> Option<Vector2<f64>> {
        if self.vertices.is_empty() {
            return None;
        }
        let sum = self.vertices.iter().fold(Vector2::zeros(), |acc, v| acc + v);
        Some(sum / self.vertices.len() as f64)
    }
}

/// Clip one convex polygon by the halfplane `normal·p >= offset`.
fn clip_halfplane(poly: &[Vector2<f64>], normal: Vector2<f64>, offset: f64) -> Vec<Vector2<f64>> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let da = normal.dot(&a) - offset;
        let db = normal.dot(&b) - offset;
        if da >= 0.0 {
            out.push(a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            let t = da / (da - db);
            out.push(a + (b - a) * t);
        }
    }
    out
}

/// `bbox ∩ corridor` as a convex polygon, by successive halfplane clipping.
pub fn clip_corridor_2d(c: &Corridor, bbox: &Aabb) -> Result<Polygon, GeomError> {
    if c.dim() != 2 {
        return Err(GeomError::NotPlanar(c.dim()));
    }
    if bbox.dim() != 2 {
        return Err(GeomError::DimensionMismatch {
            expected: 2,
            got: bbox.dim(),
        });
    }
    let (lo, hi) = (&bbox.lo, &bbox.hi);
    let mut poly = vec![
        Vector2::new(lo[0], lo[1]),
        Vector2::new(hi[0], lo[1]),
        Vector2::new(hi[0], hi[1]),
        Vector2::new(lo[0], hi[1]),
    ];
    for h in &c.halfspaces {
        match h.zero_normal {
            Some(ZeroNormal::Vacuous) => continue,
            Some(ZeroNormal::Infeasible) => return Ok(Polygon::default()),
            None => {}
        }
        // Pull the cut inward by the membership tolerance so that every
        // emitted vertex passes the tolerance-checked membership test.
        let scale = h.normal.norm().max(1.0);
        let normal = Vector2::new(h.normal[0], h.normal[1]);
        poly = clip_halfplane(&poly, normal, h.offset + 0.5 * MEMBERSHIP_TOL * scale);
        if poly.len() < 3 {
            return Ok(Polygon::default());
        }
    }
    dedup_vertices(&mut poly);
    if poly.len() < 3 {
        return Ok(Polygon::default());
    }
    Ok(Polygon { vertices: poly })
}

fn dedup_vertices(poly: &mut Vec<Vector2<f64>>) {
    poly.dedup_by(|a, b| (*a - *b).norm() <= 1e-12);
    while poly.len() > 1 && (poly[0] - poly[poly.len() - 1]).norm() <= 1e-12 {
        poly.pop();
    }
}

/// Uniform rejection sampling of corridor members inside `bbox`.
///
/// Fails with [`GeomError::NoMembers`] after [`SAMPLE_REJECTION_CAP`]
/// consecutive rejections.
pub fn sample_corridor(c: &Corridor, bbox: &Aabb, count: usize, seed: u64) -> Result<Vec<DVector<f64>>, GeomError> {
    if bbox.dim() != c.dim() {
        return Err(GeomError::DimensionMismatch {
            expected: c.dim(),
            got: bbox.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut misses = 0usize;
    while out.len() < count {
        let g = DVector::from_iterator(
            c.dim(),
            bbox.lo
                .iter()
                .zip(bbox.hi.iter())
                .map(|(&l, &h)| rng.random_range(l..h)),
        );
        if c.halfspaces.iter().all(|h| h.contains(&g, 0.0)) {
            out.push(g);
            misses = 0;
        } else {
            misses += 1;
            if misses >= SAMPLE_REJECTION_CAP {
                return Err(GeomError::NoMembers { trials: misses });
            }
        }
    }
    Ok(out)
}

/// Format like C's `%.{sig}g`.
pub fn fmt_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sig = sig.max(1);
    let exp = v.abs().log10().floor() as i32;
    // Rounding can bump the exponent (9.9999999996 -> 10.0000000).
    let sci = format!("{:.*e}", sig - 1, v);
    let (_, e) = sci.split_once('e').expect("exponent");
    let exp = e.parse::<i32>().unwrap_or(exp);
    if exp < -4 || exp >= sig as i32 {
        let (mant, _) = sci.split_once('e').expect("exponent");
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Polygon dump: one `x y` vertex per line at 9 significant digits,
/// polygons separated by a blank line.
pub fn write_polygons(polys: &[Polygon]) -> String {
    let mut out = String::new();
    for (i, p) in polys.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for v in &p.vertices {
            let _ = writeln!(out, "{} {}", fmt_sig(v.x, 9), fmt_sig(v.y, 9));
        }
    }
    out
}

/// Inverse of [`write_polygons`]. Empty polygons do not survive a round trip
/// because they have no lines.
pub fn parse_polygons(text: &str) -> Result<Vec<Polygon>, String> {
    let mut polys = Vec::new();
    let mut cur = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            if !cur.is_empty() {
                polys.push(Polygon {
                    vertices: std::mem::take(&mut cur),
                });
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<f64, String> {
            tok.ok_or_else(|| format!("line {}: missing coordinate", lineno + 1))?
                .parse::<f64>()
                .map_err(|e| format!("line {}: {e}", lineno + 1))
        };
        let x = parse(it.next())?;
        let y = parse(it.next())?;
        if it.next().is_some() {
            return Err(format!("line {}: expected two coordinates", lineno + 1));
        }
        cur.push(Vector2::new(x, y));
    }
    if !cur.is_empty() {
        polys.push(Polygon { vertices: cur });
    }
    Ok(polys)
}
