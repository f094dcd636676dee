//! Scenario files: TOML with the key schema documented in `scenarios/README.md`.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use cbc_core::barriers::{product_compose, softmin_compose, AffineBarrier, BarrierFamily, PowerDistanceBarrier};
use cbc_core::nalgebra::DVector;
use cbc_core::CorridorParams;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSpec,
    #[serde(default)]
    pub barrier: BarrierSpec,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub halfplanes: Vec<HalfplaneSpec>,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub sim: SimSpec,
    pub corridor: Option<CorridorSpec>,
    pub follow: Option<FollowSpec>,
    pub explore: Option<ExploreSpec>,
    pub lor: Option<LorSpec>,
    /// Directory of the scenario file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    FullyActuated,
    Unicycle,
    DoubleIntegrator,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub kind: SystemKind,
    #[serde(default)]
    pub state: Vec<f64>,
    /// State feedback gain of the double integrator.
    #[serde(default = "default_k")]
    pub k: [f64; 2],
}

fn default_k() -> [f64; 2] {
    [-1.0, -2.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    #[default]
    None,
    Softmin,
    Product,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierSpec {
    pub p: f64,
    pub r: f64,
    pub composition: Composition,
    pub lambda: f64,
}

impl Default for BarrierSpec {
    fn default() -> Self {
        Self {
            p: 2.0,
            r: 0.5,
            composition: Composition::None,
            lambda: 10.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub q: Vec<f64>,
    pub r: Option<f64>,
    pub p: Option<f64>,
}

/// `h(x) = a·x − b`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfplaneSpec {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSpec {
    pub kappa: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub kappa_w: f64,
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            alpha: 1.0,
            epsilon: 0.0,
            kappa_w: 2.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub dt: f64,
    pub duration: f64,
    pub sample_and_hold: bool,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            duration: 10.0,
            sample_and_hold: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorSpec {
    /// `[xmin, ymin, xmax, ymax]`.
    pub bbox: [f64; 4],
    #[serde(default)]
    pub p_values: Vec<f64>,
    #[serde(default = "default_ratios")]
    pub alpha_ratios: Vec<f64>,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_corridor_samples")]
    pub samples: usize,
}

fn default_ratios() -> Vec<f64> {
    vec![1.0]
}

fn default_corridor_samples() -> usize {
    2000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowSpec {
    pub path: Vec<[f64; 2]>,
    pub goal_tol: Option<f64>,
    pub n_samples: Option<usize>,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    /// Runs a second pass with `alpha = ratio · kappa` when set.
    pub compare_alpha_ratio: Option<f64>,
    #[serde(default = "default_view")]
    pub view_half_width: f64,
    #[serde(default = "default_corridor_every")]
    pub corridor_every: usize,
}

fn default_resolution() -> f64 {
    0.05
}

fn default_view() -> f64 {
    1.0
}

fn default_corridor_every() -> usize {
    250
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceSpec {
    #[default]
    Sensor,
    Map,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreSpec {
    pub world: PathBuf,
    pub start: [f64; 3],
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default = "default_beams")]
    pub beams: usize,
    #[serde(default = "default_range")]
    pub max_range: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_rescan")]
    pub rescan_period: f64,
    #[serde(default = "default_cycle_time")]
    pub cycle_time_max: f64,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: usize,
    #[serde(default = "default_weight")]
    pub planner_weight: f64,
    #[serde(default = "default_view")]
    pub view_half_width: f64,
    pub goal_tol: Option<f64>,
}

fn default_beams() -> usize {
    360
}
fn default_range() -> f64 {
    5.0
}
fn default_radius() -> f64 {
    0.05
}
fn default_power() -> f64 {
    1.0
}
fn default_rescan() -> f64 {
    0.1
}
fn default_cycle_time() -> f64 {
    30.0
}
fn default_max_cycles() -> usize {
    500
}
fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorSpec {
    pub y_lo: Vec<f64>,
    pub y_hi: Vec<f64>,
    #[serde(default = "default_lor_samples")]
    pub samples: usize,
    #[serde(default = "default_true")]
    pub simulate: bool,
    /// Accepted candidates whose full trajectory is written.
    #[serde(default = "default_lor_traj")]
    pub max_trajectories: usize,
}

fn default_lor_samples() -> usize {
    100
}
fn default_true() -> bool {
    true
}
fn default_lor_traj() -> usize {
    5
}

fn positive(name: &str, v: f64) -> Result<()> {
    ensure!(v > 0.0 && v.is_finite(), "{name} must be positive and finite, got {v}");
    Ok(())
}

impl Scenario {
    pub fn from_table(table: toml::Table, base_dir: &Path) -> Result<Self> {
        let mut s: Scenario = toml::Value::Table(table).try_into().context("invalid scenario")?;
        s.base_dir = base_dir.to_path_buf();
        s.validate()?;
        Ok(s)
    }

    pub fn params(&self) -> Result<CorridorParams> {
        Ok(CorridorParams::new(
            self.control.kappa,
            self.control.alpha,
            self.control.epsilon,
        )?)
    }

    /// Dimension barriers are defined on.
    pub fn barrier_dim(&self) -> usize {
        match self.system.kind {
            SystemKind::FullyActuated => self.system.state.len(),
            SystemKind::Unicycle | SystemKind::DoubleIntegrator => 2,
        }
    }

    fn validate(&self) -> Result<()> {
        let c = &self.control;
        positive("control.kappa", c.kappa)?;
        positive("control.alpha", c.alpha)?;
        positive("control.kappa_w", c.kappa_w)?;
        ensure!(
            c.epsilon >= 0.0 && c.epsilon.is_finite(),
            "control.epsilon must be >= 0"
        );
        positive("sim.dt", self.sim.dt)?;
        positive("sim.duration", self.sim.duration)?;
        positive("barrier.r", self.barrier.r)?;
        positive("barrier.p", self.barrier.p)?;
        positive("barrier.lambda", self.barrier.lambda)?;
        let st = &self.system.state;
        match self.system.kind {
            SystemKind::FullyActuated => ensure!(!st.is_empty(), "system.state is required"),
            SystemKind::Unicycle => ensure!(st.len() == 3, "unicycle state is [x, y, theta]"),
            SystemKind::DoubleIntegrator => ensure!(st.len() == 2, "double integrator state is [x1, x2]"),
        }
        ensure!(st.iter().all(|v| v.is_finite()), "system.state must be finite");
        let d = self.barrier_dim();
        for (i, o) in self.obstacles.iter().enumerate() {
            ensure!(
                o.q.len() == d,
                "obstacles[{i}].q has {} coordinates, expected {d}",
                o.q.len()
            );
            if let Some(r) = o.r {
                positive(&format!("obstacles[{i}].r"), r)?;
            }
            if let Some(p) = o.p {
                positive(&format!("obstacles[{i}].p"), p)?;
            }
        }
        for (i, h) in self.halfplanes.iter().enumerate() {
            ensure!(
                h.a.len() == d,
                "halfplanes[{i}].a has {} coordinates, expected {d}",
                h.a.len()
            );
        }
        if let Some(cs) = &self.corridor {
            let b = cs.bbox;
            ensure!(
                b[0] < b[2] && b[1] < b[3],
                "corridor.bbox must be [xmin, ymin, xmax, ymax]"
            );
            for &p in &cs.p_values {
                positive("corridor.p_values", p)?;
            }
            for &a in &cs.alpha_ratios {
                positive("corridor.alpha_ratios", a)?;
            }
            for &l in &cs.lambdas {
                positive("corridor.lambdas", l)?;
            }
        }
        if let Some(f) = &self.follow {
            ensure!(!f.path.is_empty(), "follow.path needs at least one point");
            positive("follow.resolution", f.resolution)?;
            positive("follow.view_half_width", f.view_half_width)?;
            ensure!(f.corridor_every > 0, "follow.corridor_every must be positive");
            if let Some(r) = f.compare_alpha_ratio {
                positive("follow.compare_alpha_ratio", r)?;
            }
            if let Some(n) = f.n_samples {
                ensure!(n >= 2, "follow.n_samples must be at least 2");
            }
        }
        if let Some(l) = &self.lor {
            ensure!(
                l.y_lo.len() == 1 && l.y_hi.len() == 1,
                "lor.y_lo and lor.y_hi need one entry per output"
            );
            ensure!(l.y_lo[0] < l.y_hi[0], "lor.y_lo must be below lor.y_hi");
        }
        Ok(())
    }

    /// Point obstacles and halfplanes as individual barriers; `p_override`
    /// replaces every obstacle's order.
    pub fn base_family(&self, p_override: Option<f64>) -> Result<BarrierFamily> {
        let mut fam = BarrierFamily::empty();
        for o in &self.obstacles {
            let p = p_override.or(o.p).unwrap_or(self.barrier.p);
            let r = o.r.unwrap_or(self.barrier.r);
            fam.push(PowerDistanceBarrier::new(DVector::from_vec(o.q.clone()), r, p)?);
        }
        for h in &self.halfplanes {
            fam.push(AffineBarrier::new(DVector::from_vec(h.a.clone()), h.b));
        }
        Ok(fam)
    }

    /// The family used for control: the base family, or one composed barrier.
    pub fn family(&self, p_override: Option<f64>) -> Result<BarrierFamily> {
        let base = self.base_family(p_override)?;
        if base.is_empty() {
            return Ok(base);
        }
        Ok(match self.barrier.composition {
            Composition::None => base,
            Composition::Softmin => {
                let mut f = BarrierFamily::empty();
                f.push(softmin_compose(&base, self.barrier.lambda)?);
                f
            }
            Composition::Product => {
                let mut f = BarrierFamily::empty();
                f.push(product_compose(&base)?);
                f
            }
        })
    }

    pub fn state(&self) -> DVector<f64> {
        DVector::from_vec(self.system.state.clone())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Replace the value at a dotted key, creating tables as needed.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => cur = t,
            _ => bail!("sweep key {key}: {part} is not a table"),
        }
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parse one sweep value as a TOML value, falling back to a string.
pub fn parse_value(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}
