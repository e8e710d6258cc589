//! Experiment configuration as TOML.
//!
//! ```toml
//! seed = 1
//! runs = 10
//! output_dir = "runs/and"
//!
//! [kinetics]      # epsilon f q d_u d_v dt dx clamp_negative_u
//! [light]         # high threshold low
//! [geometry]      # rows cols cell_w cell_h origin_x origin_y
//! [render]        # v_lo v_hi
//! [simulation]    # init_iterations epoch_iterations activity_threshold
//! [mask]          # path, or a [mask.layout] table; bundled mask otherwise
//! [task]          # gate active_cell_target cycles_per_presentation memory beta persist_memory
//! [search]        # mutations_per_generation budget_presentations accept_rule controller_kind
//! ```
//!
//! Every key is optional and defaults to the value in the matching type's
//! `Default`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::SearchConfig;
use crate::gates::{GateExperiment, GateTask, Simulation, DEFAULT_INIT_ITERATIONS};
use crate::imaging::{GridGeometry, RenderBounds};
use crate::mask::{InitiationMask, TreeLayout};
use crate::reaction::{KineticParams, LightLevels};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub init_iterations: u64,
    pub epoch_iterations: u64,
    pub activity_threshold: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            init_iterations: DEFAULT_INIT_ITERATIONS,
            epoch_iterations: 600,
            activity_threshold: 0.10,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    /// P5 graymap of region labels. Relative paths resolve against the
    /// config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<TreeLayout>,
}

impl MaskConfig {
    pub fn load(&self) -> Result<InitiationMask> {
        match (&self.path, &self.layout) {
            (Some(_), Some(_)) => Err(Error::Config("mask: give either path or layout, not both".into())),
            (Some(p), None) => InitiationMask::load(p),
            (None, Some(l)) => l.rasterize(),
            (None, None) => Ok(InitiationMask::builtin()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub runs: usize,
    pub output_dir: PathBuf,
    pub kinetics: KineticParams,
    pub light: LightLevels,
    pub geometry: GridGeometry,
    pub render: RenderBounds,
    pub simulation: SimulationConfig,
    pub mask: MaskConfig,
    pub task: GateExperiment,
    pub search: SearchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            runs: 10,
            output_dir: PathBuf::from("runs"),
            kinetics: KineticParams::default(),
            light: LightLevels::default(),
            geometry: GridGeometry::default(),
            render: RenderBounds::default(),
            simulation: SimulationConfig::default(),
            mask: MaskConfig::default(),
            task: GateExperiment::default(),
            search: SearchConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Reads a config file. A relative mask path is made relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(p) = cfg.mask.path.as_mut() {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn simulation(&self) -> Result<Simulation> {
        let sim = Simulation {
            kinetics: self.kinetics,
            levels: self.light,
            geometry: self.geometry,
            render: self.render,
            mask: Arc::new(self.mask.load()?),
            init_iterations: self.simulation.init_iterations,
            epoch_iterations: self.simulation.epoch_iterations,
            activity_threshold: self.simulation.activity_threshold,
        };
        sim.validate()?;
        Ok(sim)
    }

    /// Checks every section, including loading the mask.
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        self.simulation()?;
        self.task.validate()?;
        self.search.validate()
    }

    /// Gate task with the initiated media precomputed.
    pub fn gate_task(&self) -> Result<GateTask> {
        GateTask::new(self.simulation()?, self.task.clone())
    }

    /// Seed of run `index`.
    pub fn run_seed(&self, index: usize) -> u64 {
        run_seed(self.seed, index)
    }
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Element `index` of the SplitMix64 stream started at `seed`. Depends only on
/// `(seed, index)`, so adding runs leaves earlier runs untouched.
pub fn run_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index as u64 + 1)))
}
