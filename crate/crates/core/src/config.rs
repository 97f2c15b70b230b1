//! Run configuration: one JSON document holding the plant, synthesis,
//! scheduling, trajectory and simulation blocks. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{RobotParams, TrajectorySpec};
use crate::error::{Error, Result};
use crate::scheduling::SchedulingConfig;
use crate::sim::SimConfig;
use crate::synthesis::SynthesisConfig;

/// The defaults as shipped.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../defaults.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    /// Parameters of the simulated arm.
    #[serde(rename = "true")]
    pub actual: RobotParams,
    /// Parameters used for controller design.
    pub measured: RobotParams,
}

impl Default for RobotConfig {
    fn default() -> Self {
        RobotConfig { actual: RobotParams::nominal(), measured: RobotParams::measured() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub robot: RobotConfig,
    pub synthesis: SynthesisConfig,
    pub scheduling: SchedulingConfig,
    pub trajectory: TrajectorySpec,
    pub sim: SimConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            robot: RobotConfig::default(),
            synthesis: SynthesisConfig::default(),
            scheduling: SchedulingConfig::default(),
            trajectory: TrajectorySpec::default(),
            sim: SimConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.robot.actual.validate()?;
        self.robot.measured.validate()?;
        self.synthesis.validate()?;
        self.scheduling.validate()?;
        self.trajectory.validate()?;
        self.sim.validate()
    }

    /// Parses and validates; any problem is reported as a config error.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn embedded_default() -> Result<Self> {
        Self::from_json(DEFAULT_CONFIG_JSON)
    }
}
