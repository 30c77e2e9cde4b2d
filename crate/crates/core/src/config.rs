//! TOML run configuration.
//!
//! A config file declares one system, one grid and the parameters of any
//! task. Fields that are absent take the defaults documented on each struct.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{CrossSection, Kinetics, Nonlocal, Reaction};
use crate::profiles::Grid;
use crate::pulsating::{fusco_hale_medium, MediumShape, PeriodicMedium};
use crate::semiflow::{Scheme, Semiflow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Equilibria,
    Verify,
    Speed,
    Wave,
    Pulsating,
    Lambda1,
    Counterexample,
    Sweep,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Equilibria => "equilibria",
            TaskKind::Verify => "verify",
            TaskKind::Speed => "speed",
            TaskKind::Wave => "wave",
            TaskKind::Pulsating => "pulsating",
            TaskKind::Lambda1 => "lambda1",
            TaskKind::Counterexample => "counterexample",
            TaskKind::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; when present it must agree with the subcommand.
    pub task: Option<TaskKind>,
    pub seed: Option<u64>,
    /// Output directory, overridden by `--out`.
    pub output: Option<PathBuf>,
    pub system: SystemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub equilibria: EquilibriaParams,
    #[serde(default)]
    pub verify: VerifyParams,
    #[serde(default)]
    pub speed: SpeedParams,
    #[serde(default)]
    pub wave: WaveParams,
    #[serde(default)]
    pub pulsating: PulsatingParams,
    #[serde(default)]
    pub lambda1: Lambda1Params,
    #[serde(default)]
    pub counterexample: CounterexampleParams,
    pub sweep: Option<SweepParams>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemFamily {
    #[serde(alias = "periodic_rd_system")]
    ReactionDiffusion,
    Cylinder,
    PeriodicDiffusion,
    NonlocalDelayed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub family: SystemFamily,
    pub reaction: Option<Reaction>,
    /// Defaults to one per species.
    pub diffusion: Option<Vec<f64>>,
    pub bottom: Option<Vec<f64>>,
    pub top: Option<Vec<f64>>,
    pub cross_section: Option<CrossSection>,
    pub medium: Option<MediumConfig>,
    pub nonlocal: Option<Nonlocal>,
}

/// Medium shape (tagged by `name`) plus period and cell resolution.
/// `fusco-hale` ignores `period` and always has period 4.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MediumConfig {
    #[serde(flatten)]
    pub shape: MediumShape,
    pub period: Option<f64>,
    pub samples_per_cell: Option<usize>,
}

fn missing(path: &str, family: SystemFamily) -> Error {
    Error::Config {
        path: path.into(),
        message: format!("required for family {family:?}"),
    }
}

fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Config {
        path: path.into(),
        message: e.to_string(),
    }
}

impl MediumConfig {
    pub fn medium(&self) -> Result<PeriodicMedium> {
        let mut m = match &self.shape {
            MediumShape::FuscoHale { l, smooth, floor } => fusco_hale_medium(*l, *smooth, *floor)?,
            shape => PeriodicMedium {
                shape: shape.clone(),
                period: self.period.ok_or_else(|| Error::Config {
                    path: "system.medium.period".into(),
                    message: "required for this medium".into(),
                })?,
                samples_per_cell: 256,
            },
        };
        if let Some(n) = self.samples_per_cell {
            m = m.with_samples(n);
        }
        m.validate()?;
        Ok(m)
    }
}

impl SystemConfig {
    pub fn kinetics(&self) -> Result<Kinetics> {
        let fam = self.family;
        let reaction = || self.reaction.clone().ok_or_else(|| missing("system.reaction", fam));
        let diffusion = |n: usize| self.diffusion.clone().unwrap_or_else(|| vec![1.0; n]);
        let k = match fam {
            SystemFamily::ReactionDiffusion => {
                let r = reaction()?;
                let n = r.n_species();
                Kinetics::reaction_diffusion(r, diffusion(n)).map_err(at("system"))?
            }
            SystemFamily::Cylinder => {
                let r = reaction()?;
                let n = r.n_species();
                let cs = self
                    .cross_section
                    .clone()
                    .ok_or_else(|| missing("system.cross_section", fam))?;
                Kinetics::cylinder(r, diffusion(n), cs).map_err(at("system.cross_section"))?
            }
            SystemFamily::PeriodicDiffusion => {
                let m = self
                    .medium
                    .as_ref()
                    .ok_or_else(|| missing("system.medium", fam))?
                    .medium()
                    .map_err(at("system.medium"))?;
                Kinetics::periodic_diffusion(reaction()?, m).map_err(at("system"))?
            }
            SystemFamily::NonlocalDelayed => {
                let nl = self.nonlocal.clone().ok_or_else(|| missing("system.nonlocal", fam))?;
                Kinetics::nonlocal_delayed(nl).map_err(at("system.nonlocal"))?
            }
        };
        if self.bottom.is_some() || self.top.is_some() {
            let b = self.bottom.clone().unwrap_or_else(|| k.bottom.clone());
            let t = self.top.clone().unwrap_or_else(|| k.top.clone());
            return k.with_box(b, t).map_err(at("system.top"));
        }
        Ok(k)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub scheme: Scheme,
    /// Time step; chosen from the monotonicity limit when absent.
    pub dt: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x_min: -100.0,
            x_max: 100.0,
            dx: 0.05,
            scheme: Scheme::ExplicitEuler,
            dt: None,
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::with_spacing(self.x_min, self.x_max, self.dx).map_err(at("grid"))
    }

    pub fn semiflow(&self, k: Kinetics) -> Result<Semiflow> {
        let g = self.grid()?;
        match self.dt {
            Some(dt) => Semiflow::new(k, g, dt, self.scheme).map_err(at("grid.dt")),
            None => Semiflow::auto(k, g, self.scheme).map_err(at("grid")),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaParams {}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyParams {
    pub trials: usize,
    pub comparison_tol: f64,
    pub translation_tol: f64,
    pub box_tol: f64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            trials: 100,
            comparison_tol: 1e-10,
            translation_tol: 1e-12,
            box_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeedParams {
    /// Intermediate equilibria to test; all of them when absent.
    pub alpha: Option<Vec<Vec<f64>>>,
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub horizon: f64,
    pub delta_top: f64,
    pub delta_bottom: f64,
    pub margin: f64,
    /// Tolerance of the mu minimization (cylinder family).
    pub mu_tol: f64,
}

impl Default for SpeedParams {
    fn default() -> Self {
        Self {
            alpha: None,
            x_min: -200.0,
            x_max: 200.0,
            dx: 0.1,
            horizon: 100.0,
            delta_top: 0.1,
            delta_bottom: 0.1,
            margin: 0.0,
            mu_tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveMethod {
    Direct,
    Iteration,
    Periodic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveParams {
    pub method: WaveMethod,
    pub horizon: f64,
    /// Start of the fit window; half the horizon when absent.
    pub settle: Option<f64>,
    pub residual_horizon: f64,
    pub tol: f64,
    /// Initial step position and ramp width.
    pub interface: f64,
    pub ramp: f64,
    /// Compression levels of the iteration.
    pub ns: Vec<usize>,
    pub delta: Option<f64>,
    pub map_periods: usize,
    pub k_max: usize,
    /// Phases sampled per period by the periodic method.
    pub n_phase: usize,
}

impl Default for WaveParams {
    fn default() -> Self {
        Self {
            method: WaveMethod::Direct,
            horizon: 40.0,
            settle: None,
            residual_horizon: crate::waves::RESIDUAL_HORIZON,
            tol: crate::waves::RESIDUAL_TOL,
            interface: 0.0,
            ramp: 1.0,
            ns: vec![4, 8, 16, 32],
            delta: None,
            map_periods: 8,
            k_max: 20_000,
            n_phase: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulsatingParams {
    pub horizon: f64,
    pub window: f64,
    pub tol: f64,
    pub periodicity_tol: f64,
    pub stationarity_tol: f64,
}

impl Default for PulsatingParams {
    fn default() -> Self {
        Self {
            horizon: 100.0,
            window: 16.0,
            tol: 1e-2,
            periodicity_tol: 1e-3,
            stationarity_tol: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Lambda1Params {
    /// Evaluate at this constant state.
    pub constant: Option<f64>,
    /// Evaluate at these cell samples.
    pub u_bar: Option<Vec<f64>>,
    /// Otherwise search for periodic steady states with this many seeds.
    pub n_seeds: usize,
}

impl Default for Lambda1Params {
    fn default() -> Self {
        Self {
            constant: None,
            u_bar: None,
            n_seeds: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleParams {
    pub n_seeds: usize,
    pub margin: f64,
}

impl Default for CounterexampleParams {
    fn default() -> Self {
        Self {
            n_seeds: 200,
            margin: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    /// Task run at every point.
    pub task: TaskKind,
    #[serde(default)]
    pub parameters: Vec<SweepAxis>,
}

/// One swept config entry, addressed by a dotted path such as
/// `system.reaction.a` (array entries by index: `system.diffusion.0`).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    pub values: Option<Vec<f64>>,
    pub range: Option<SweepRange>,
}

/// `steps` evenly spaced values from `start` to `stop` inclusive.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl SweepAxis {
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match (&self.values, &self.range) {
            (Some(v), None) => v.clone(),
            (None, Some(r)) => match r.steps {
                0 => vec![],
                1 => vec![r.start],
                n => (0..n)
                    .map(|i| r.start + (r.stop - r.start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
            _ => {
                return Err(Error::Config {
                    path: format!("sweep.parameters[{}]", self.path),
                    message: "give exactly one of `values` and `range`".into(),
                })
            }
        };
        if pts.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config {
                path: format!("sweep.parameters[{}]", self.path),
                message: "sweep values must be finite".into(),
            });
        }
        Ok(pts)
    }
}

impl SweepParams {
    /// Cartesian product of the axes, first axis slowest.
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let mut rows = vec![vec![]];
        for axis in &self.parameters {
            let pts = axis.points()?;
            rows = rows
                .into_iter()
                .flat_map(|r| {
                    pts.iter().map(move |&v| {
                        let mut r = r.clone();
                        r.push(v);
                        r
                    })
                })
                .collect();
        }
        if self.parameters.is_empty() {
            rows.clear();
        }
        Ok(rows)
    }
}

/// Parsed config together with its raw TOML tree (kept for sweeps).
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: toml::Value,
}

pub fn parse_value(raw: toml::Value) -> Result<RunConfig> {
    serde_path_to_error::deserialize(raw).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().message().to_string(),
    })
}

pub fn parse_str(text: &str) -> Result<LoadedConfig> {
    let raw: toml::Value = toml::from_str(text).map_err(|e| Error::Config {
        path: ".".into(),
        message: e.message().to_string(),
    })?;
    let config = parse_value(raw.clone())?;
    Ok(LoadedConfig { config, raw })
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_str(&text)
}

/// Writes `value` at a dotted path, creating intermediate tables. Integral
/// values replace integer entries as integers.
pub fn set_path(raw: &mut toml::Value, path: &str, value: f64) -> Result<()> {
    let bad = |msg: &str| Error::Config {
        path: path.into(),
        message: msg.into(),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad("empty path segment"));
    }
    let mut cur = raw;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        let slot = match cur {
            toml::Value::Table(t) => {
                if !last && !t.contains_key(*key) {
                    t.insert((*key).into(), toml::Value::Table(Default::default()));
                }
                if last {
                    let as_int = matches!(t.get(*key), Some(toml::Value::Integer(_))) && value.fract() == 0.0;
                    t.insert((*key).into(), number(value, as_int));
                    return Ok(());
                }
                t.get_mut(*key).expect("inserted above")
            }
            toml::Value::Array(a) => {
                let idx: usize = key.parse().map_err(|_| bad("array entries are addressed by index"))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| bad(&format!("index {idx} out of range (len {len})")))?;
                if last {
                    let as_int = matches!(slot, toml::Value::Integer(_)) && value.fract() == 0.0;
                    *slot = number(value, as_int);
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad("path runs through a non-table value")),
        };
        cur = slot;
    }
    Ok(())
}

fn number(v: f64, as_int: bool) -> toml::Value {
    if as_int {
        toml::Value::Integer(v as i64)
    } else {
        toml::Value::Float(v)
    }
}
