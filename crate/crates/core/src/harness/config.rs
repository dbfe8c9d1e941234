//! Scenario files.
//!
//! A scenario is a TOML document (sectioned `key = value` text). Unknown keys
//! are rejected. See `configs/` for annotated examples.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dbm_to_watts;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::kpi::{AccessMode, RadioConfig};
use crate::optimizer::{
    MeasurementNoise, DEFAULT_GRID_EXTENT_M, DEFAULT_GRID_STEP_M, DEFAULT_GROUP_SIZE,
    DEFAULT_MAX_PASSES,
};
use crate::propagation::{DirectPath, Fading, PathLossKind, PathLossModel};
use crate::surface::BlockLayout;

pub const PHASE1_DEFAULT: &str = include_str!("../../configs/phase1.cfg");
pub const PHASE2_DEFAULT: &str = include_str!("../../configs/phase2.cfg");
pub const PHASE3_DEFAULT: &str = include_str!("../../configs/phase3.cfg");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_access_mode")]
    pub access_mode: AccessModeConfig,
    pub geometry: GeometryConfig,
    pub layout: BlockLayout,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

fn default_access_mode() -> AccessModeConfig {
    AccessModeConfig::InitialAccess
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessModeConfig {
    InitialAccess,
    Maintaining,
}

impl From<AccessModeConfig> for AccessMode {
    fn from(m: AccessModeConfig) -> Self {
        match m {
            AccessModeConfig::InitialAccess => AccessMode::InitialAccess,
            AccessModeConfig::Maintaining => AccessMode::Maintaining,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub ris_center: Vec3,
    pub ris_normal: Vec3,
    pub tx_positions: Vec<Vec3>,
    pub rx_positions: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectPathConfig {
    Absent,
    /// Direct Tx→Rx path attenuated by `blockage_db` on top of path loss.
    Present {
        blockage_db: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub freq_hz: f64,
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub path_loss: PathLossKind,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_reference_distance")]
    pub reference_distance_m: f64,
    #[serde(default = "default_fading")]
    pub fading: Fading,
    pub direct_path: DirectPathConfig,
}

fn default_exponent() -> f64 {
    2.0
}

fn default_reference_distance() -> f64 {
    1.0
}

fn default_fading() -> Fading {
    Fading::None
}

impl ChannelConfig {
    pub fn model(&self) -> PathLossModel {
        PathLossModel {
            kind: self.path_loss,
            exponent: self.exponent,
            reference_distance_m: self.reference_distance_m,
            fading: self.fading,
            blockage_extra_loss_db: match self.direct_path {
                DirectPathConfig::Absent => 0.0,
                DirectPathConfig::Present { blockage_db } => blockage_db,
            },
        }
    }

    pub fn direct(&self) -> DirectPath {
        match self.direct_path {
            DirectPathConfig::Absent => DirectPath::Absent,
            DirectPathConfig::Present { .. } => DirectPath::Obstructed,
        }
    }

    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Iterative,
    GroupedIterative,
    LocationBased,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Iterative => "iterative",
            Method::GroupedIterative => "grouped_iterative",
            Method::LocationBased => "location_based",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iterative" => Ok(Method::Iterative),
            "grouped_iterative" => Ok(Method::GroupedIterative),
            "location_based" => Ok(Method::LocationBased),
            _ => Err(Error::Config(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Runs of `group_size` consecutive element indices.
    Consecutive,
    /// Square √group_size × √group_size patches of the element grid.
    SpatialTiles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialConfig {
    Zeros,
    Random,
}

/// Oracle reading noise. `sigma_dbm` is the absolute standard deviation
/// expressed as a power level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Off,
    Relative { sigma: f64 },
    Absolute { sigma_dbm: f64 },
}

impl NoiseConfig {
    pub fn to_noise(self) -> MeasurementNoise {
        match self {
            NoiseConfig::Off => MeasurementNoise::Off,
            NoiseConfig::Relative { sigma } => MeasurementNoise::Relative { sigma },
            NoiseConfig::Absolute { sigma_dbm } => MeasurementNoise::Absolute {
                sigma_w: dbm_to_watts(sigma_dbm),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub methods: Vec<Method>,
    pub max_passes: usize,
    pub group_size: usize,
    pub grouping: Grouping,
    pub initial: InitialConfig,
    pub measurement_noise: NoiseConfig,
    /// Half-width of the horizontal search box around each position estimate.
    pub grid_extent_m: f64,
    /// Half-height of the search box; 0 searches a single plane.
    pub grid_extent_z_m: f64,
    pub grid_step_m: f64,
    /// Standard deviation of the horizontal position-estimate error.
    pub position_error_m: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            methods: Vec::new(),
            max_passes: DEFAULT_MAX_PASSES,
            group_size: DEFAULT_GROUP_SIZE,
            grouping: Grouping::Consecutive,
            initial: InitialConfig::Zeros,
            measurement_noise: NoiseConfig::Off,
            grid_extent_m: DEFAULT_GRID_EXTENT_M,
            grid_extent_z_m: 0.0,
            grid_step_m: DEFAULT_GRID_STEP_M,
            position_error_m: 0.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Every `*.cfg` file in `dir`, sorted by file name. Scenario names must
    /// be unique.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
            .collect::<Result<Vec<_>>>()?;
        paths.retain(|p| p.extension().is_some_and(|x| x == "cfg"));
        paths.sort();
        if paths.is_empty() {
            return Err(Error::Config(format!("no .cfg files in {}", dir.display())));
        }
        let configs = paths
            .iter()
            .map(|p| Self::load(p))
            .collect::<Result<Vec<_>>>()?;
        let mut names: Vec<&str> = configs.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate scenario name `{}`", w[0])));
        }
        Ok(configs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.name)));
        if self.name.trim().is_empty() {
            return Err(Error::Config("name must be non-empty".into()));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if i64::try_from(self.master_seed).is_err() {
            return bad("master_seed must fit in a signed 64-bit integer");
        }
        let g = &self.geometry;
        if g.tx_positions.is_empty() || g.rx_positions.is_empty() {
            return bad("need at least one tx and one rx position");
        }
        let all = [g.ris_center, g.ris_normal]
            .into_iter()
            .chain(g.tx_positions.iter().copied())
            .chain(g.rx_positions.iter().copied());
        if !all.into_iter().all(|p| p.is_finite()) {
            return bad("positions must be finite");
        }
        if g.ris_normal.normalized().is_none() {
            return bad("ris_normal must be non-zero");
        }
        self.layout
            .validate()
            .map_err(|e| Error::Config(format!("{}: {e}", self.name)))?;
        let ch = &self.channel;
        if !(ch.freq_hz > 0.0) || !ch.tx_power_dbm.is_finite() {
            return bad("channel frequency and tx power must be finite and positive");
        }
        if !ch.tx_gain_dbi.is_finite() || !ch.rx_gain_dbi.is_finite() {
            return bad("antenna gains must be finite");
        }
        if let DirectPathConfig::Present { blockage_db } = ch.direct_path {
            if !(blockage_db >= 0.0) {
                return bad("blockage_db must be non-negative");
            }
        }
        ch.model()
            .validate()
            .map_err(|e| Error::Config(format!("{}: {e}", self.name)))?;
        self.radio
            .validate()
            .map_err(|e| Error::Config(format!("{}: {e}", self.name)))?;
        let o = &self.optimizer;
        let mut methods = o.methods.clone();
        methods.sort_unstable();
        methods.dedup();
        if methods.len() != o.methods.len() {
            return bad("methods must not repeat");
        }
        if o.max_passes == 0 || o.group_size == 0 {
            return bad("max_passes and group_size must be at least 1");
        }
        if o.grouping == Grouping::SpatialTiles {
            let t = o.group_size.isqrt();
            if t * t != o.group_size || !crate::surface::BLOCK_DIM.is_multiple_of(t) {
                return bad("spatial tiles need a square group size whose side divides 8");
            }
        }
        if !(o.grid_step_m > 0.0) || !(o.grid_extent_m >= 0.0) || !(o.grid_extent_z_m >= 0.0) {
            return bad("grid step must be positive and extents non-negative");
        }
        if !(o.position_error_m >= 0.0) {
            return bad("position_error_m must be non-negative");
        }
        match o.measurement_noise {
            NoiseConfig::Relative { sigma } if !(sigma >= 0.0) => {
                bad("noise sigma must be non-negative")
            }
            NoiseConfig::Absolute { sigma_dbm } if !sigma_dbm.is_finite() => {
                bad("noise sigma_dbm must be finite")
            }
            _ => Ok(()),
        }
    }
}
