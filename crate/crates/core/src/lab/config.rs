//! Experiment configuration: one strict JSON document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::entropy::{GridParams, Method};
use crate::error::{Error, Result};
use crate::rng::BirkhoffSampler;
use crate::suspension::{SuspensionFlow, SuspensionPoint};
use crate::torus::{BaseMap, BaseMapSpec, TorusPoint};

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

/// Everything a run depends on. Two runs with equal configs write equal files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub base_map: BaseMapSpec,
    pub seed: u64,
    /// Where output files go; the `--out` flag takes precedence.
    pub output_dir: Option<PathBuf>,
    pub field: FieldConfig,
    pub flat: FlatConfig,
    pub grid: GridConfig,
    pub samples: SampleConfig,
    pub recurrence: RecurrenceConfig,
    pub timechange: TimeChangeConfig,
    pub flatfn: FlatFnConfig,
    pub entropy: EntropyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            base_map: BaseMap::cat_map().spec(),
            seed: 1,
            output_dir: None,
            field: FieldConfig::default(),
            flat: FlatConfig::default(),
            grid: GridConfig::default(),
            samples: SampleConfig::default(),
            recurrence: RecurrenceConfig::default(),
            timechange: TimeChangeConfig::default(),
            flatfn: FlatFnConfig::default(),
            entropy: EntropyConfig::default(),
        }
    }
}

/// Stopped point and chart shared by every speed field of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub stopped_base: Vec<f64>,
    pub stopped_height: f64,
    pub chart_radius: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig { stopped_base: vec![0.3, 0.6], stopped_height: 0.0, chart_radius: 0.2 }
    }
}

/// Where the `β` sequence of the flat profile comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSource {
    /// `β_i = ratio^{i+1}`.
    Geometric {
        ratio: f64,
        len: usize,
    },
    /// The recipe `β_{i-1} = l_j / j · 1/L(1/j)`, `j = i0 + i`, with `L`
    /// from the recurrence of the base map.
    Recurrence {
        i0: usize,
        len: usize,
    },
    Explicit {
        betas: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlatConfig {
    pub profile: ProfileSource,
    /// Floors of the flat ladder, one per profile index, decreasing.
    pub floors: Vec<f64>,
}

impl Default for FlatConfig {
    fn default() -> Self {
        FlatConfig {
            profile: ProfileSource::Recurrence { i0: 1, len: 40 },
            floors: vec![1e-2, 1e-4, 1e-7, 1e-11, 1e-16, 1e-22],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub delta: f64,
    pub n_values: Vec<usize>,
    pub eps_values: Vec<f64>,
    /// Sampling step of flow orbits.
    pub time_step: f64,
    pub method: Method,
    pub saturation: f64,
    pub skip_saturated: bool,
    pub skip_leading: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridParams::default();
        GridConfig {
            delta: g.delta,
            n_values: (1..=10).collect(),
            eps_values: g.eps_values,
            time_step: 0.05,
            method: g.method,
            saturation: g.saturation,
            skip_saturated: g.skip_saturated,
            skip_leading: g.skip_leading,
        }
    }
}

impl GridConfig {
    pub fn params(&self) -> GridParams {
        GridParams {
            delta: self.delta,
            n_values: self.n_values.clone(),
            eps_values: self.eps_values.clone(),
            method: self.method,
            saturation: self.saturation,
            skip_saturated: self.skip_saturated,
            skip_leading: self.skip_leading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Points per entropy cloud.
    pub cloud_size: usize,
    pub burn_in: usize,
    pub chain_len: usize,
    /// Base points per side of the lattice used for expected return times.
    pub gamma_lattice: usize,
    /// Suspension samples for mass estimates.
    pub mass_samples: usize,
    pub witness_points: usize,
    pub witness_horizon: f64,
    pub witness_samples: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            cloud_size: 20_000,
            burn_in: 64,
            chain_len: 256,
            gamma_lattice: 128,
            mass_samples: 100_000,
            witness_points: 10,
            witness_horizon: 5.0,
            witness_samples: 50,
        }
    }
}

impl SampleConfig {
    pub fn sampler(&self) -> BirkhoffSampler {
        BirkhoffSampler { burn_in: self.burn_in, chain_len: self.chain_len }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecurrenceConfig {
    pub epsilons: Vec<f64>,
    pub grid_resolution: f64,
    pub horizon: u64,
    /// Random pairs per radius for maps without a certified constant.
    pub pairs: usize,
    pub ball_centers: usize,
    pub orbit_len: usize,
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        RecurrenceConfig {
            epsilons: vec![0.2, 0.15, 0.1, 0.05, 0.02],
            grid_resolution: 1e-3,
            horizon: 1_000_000,
            pairs: 200,
            ball_centers: 32,
            orbit_len: 100_000,
        }
    }
}

/// A speed field choice for the clock and entropy commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldChoice {
    /// The clock `a ≡ 1/speed`.
    Constant {
        speed: f64,
    },
    Quadratic,
    Flat {
        floor: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeChangeConfig {
    pub field: FieldChoice,
    /// Randomized `(q, s, t)` triples for the cocycle check.
    pub trials: usize,
    pub max_time: f64,
    pub constants: Vec<f64>,
}

impl Default for TimeChangeConfig {
    fn default() -> Self {
        TimeChangeConfig { field: FieldChoice::Quadratic, trials: 1000, max_time: 3.0, constants: vec![0.5, 2.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlatFnConfig {
    /// Log grid `10^{-decades} ≤ t ≤ 1`.
    pub decades: u32,
    pub points_per_decade: usize,
    pub shells: usize,
    pub points_per_shell: usize,
}

impl Default for FlatFnConfig {
    fn default() -> Self {
        FlatFnConfig { decades: 4, points_per_decade: 10, shells: 10, points_per_shell: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropyConfig {
    /// Also estimate the suspension flow.
    pub suspension: bool,
    /// Time-changed flows to estimate as well.
    pub time_changes: Vec<FieldChoice>,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig { suspension: true, time_changes: Vec::new() }
    }
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| config_err(&format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let map = self.map().map_err(|e| config_err("base_map", e.to_string()))?;
        let f = &self.field;
        if f.stopped_base.len() != map.dim() {
            return Err(config_err("field.stopped_base", format!("expected {} coordinates", map.dim())));
        }
        if f.stopped_base.iter().any(|v| !v.is_finite()) || !f.stopped_height.is_finite() {
            return Err(config_err("field.stopped_base", "coordinates must be finite"));
        }
        if !(f.chart_radius > 0.0 && f.chart_radius < 0.25) {
            return Err(config_err("field.chart_radius", "must lie in (0, 1/4)"));
        }
        match &self.flat.profile {
            ProfileSource::Geometric { ratio, len } => {
                if !(*ratio > 0.0 && *ratio < 1.0) || *len == 0 {
                    return Err(config_err("flat.profile", "ratio in (0, 1) and len > 0 required"));
                }
            }
            ProfileSource::Recurrence { len, .. } if *len == 0 => {
                return Err(config_err("flat.profile.len", "must be positive"));
            }
            ProfileSource::Explicit { betas } if betas.is_empty() => {
                return Err(config_err("flat.profile.betas", "must be non-empty"));
            }
            _ => {}
        }
        if self.flat.floors.iter().any(|c| !(0.0..1.0).contains(c)) {
            return Err(config_err("flat.floors", "every floor must lie in [0, 1)"));
        }
        if self.flat.floors.windows(2).any(|w| w[1] >= w[0]) {
            return Err(config_err("flat.floors", "floors must be decreasing"));
        }
        let g = &self.grid;
        if !(g.delta > 0.0 && g.delta < 1.0) {
            return Err(config_err("grid.delta", "must lie in (0, 1)"));
        }
        if g.n_values.is_empty() || g.n_values[0] == 0 || g.n_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("grid.n_values", "must be positive and increasing"));
        }
        if g.eps_values.is_empty()
            || g.eps_values.windows(2).any(|w| w[1] >= w[0])
            || g.eps_values.iter().any(|e| *e <= 0.0)
        {
            return Err(config_err("grid.eps_values", "must be positive and decreasing"));
        }
        let per_unit = (1.0 / g.time_step).round();
        if !(g.time_step > 0.0 && g.time_step <= *g.eps_values.last().unwrap())
            || (per_unit * g.time_step - 1.0).abs() > 1e-9
        {
            return Err(config_err("grid.time_step", "must divide 1 and not exceed the smallest eps"));
        }
        if !(g.saturation > 0.0 && g.saturation <= 1.0) {
            return Err(config_err("grid.saturation", "must lie in (0, 1]"));
        }
        let s = &self.samples;
        if s.cloud_size < 2 || s.gamma_lattice == 0 || s.mass_samples == 0 || s.chain_len == 0 {
            return Err(config_err("samples", "sample sizes must be positive"));
        }
        if s.witness_points == 0 || s.witness_samples == 0 || !(s.witness_horizon > 0.0) {
            return Err(config_err("samples.witness_points", "witness sizes must be positive"));
        }
        let r = &self.recurrence;
        if r.epsilons.is_empty() || r.epsilons.iter().any(|e| !(*e > r.grid_resolution)) {
            return Err(config_err("recurrence.epsilons", "every epsilon must exceed the grid resolution"));
        }
        if !(r.grid_resolution > 0.0) || r.pairs == 0 || r.ball_centers == 0 || r.orbit_len == 0 {
            return Err(config_err("recurrence", "resolution and sample sizes must be positive"));
        }
        let t = &self.timechange;
        if !(t.max_time > 0.0) || t.constants.iter().any(|c| !(*c > 0.0)) {
            return Err(config_err("timechange", "max_time and constants must be positive"));
        }
        for (name, choice) in std::iter::once(("timechange.field", &t.field))
            .chain(self.entropy.time_changes.iter().map(|c| ("entropy.time_changes", c)))
        {
            match choice {
                FieldChoice::Constant { speed } if !(*speed > 0.0 && *speed <= 1.0) => {
                    return Err(config_err(name, "constant speed must lie in (0, 1]"));
                }
                FieldChoice::Flat { floor } if !(0.0..1.0).contains(floor) => {
                    return Err(config_err(name, "floor must lie in [0, 1)"));
                }
                _ => {}
            }
        }
        let ff = &self.flatfn;
        if ff.decades == 0 || ff.points_per_decade == 0 || ff.points_per_shell == 0 {
            return Err(config_err("flatfn", "grid sizes must be positive"));
        }
        Ok(())
    }

    pub fn map(&self) -> Result<BaseMap> {
        BaseMap::from_spec(&self.base_map)
    }

    pub fn flow(&self) -> Result<SuspensionFlow> {
        Ok(SuspensionFlow::new(self.map()?))
    }

    pub fn stopped_point(&self) -> SuspensionPoint {
        SuspensionPoint::new(TorusPoint::new(self.field.stopped_base.clone()), self.field.stopped_height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"grid": {"deltaa": 0.1}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
        assert!(err.to_string().contains("line 1"));
        let err = ExperimentConfig::from_json(r#"{"grid": {"delta": 1.5}}"#).unwrap_err();
        assert!(err.to_string().contains("grid.delta"));
    }
}
