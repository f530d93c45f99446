//! Run configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::backreach::{GoalSet, ReachConfig};
use crate::geometry::{BoxDomain, Polytope};
use crate::nfl::{load_network, Dynamics, DynamicsSpec, NeuralFeedbackLoop};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dynamics: DynamicsSpec,
    /// Controller file, relative to the config file.
    pub network: PathBuf,
    pub domain: BoxDomain,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub result: Option<PathBuf>,
    pub timing: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig { samples: 10_000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSet {
    pub name: String,
    pub polytope: Polytope,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default)]
    pub start_sets: Vec<NamedSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub goal: Polytope,
    #[serde(default)]
    pub reach: ReachConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub coverage: CoverageConfig,
    #[serde(default)]
    pub check: CheckConfig,
}

/// A parsed and validated config plus the directory relative paths resolve against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.system.domain.validate().map_err(|e| bad(&e))?;
        self.goal.validate().map_err(|e| bad(&e))?;
        self.reach.validate().map_err(|e| bad(&e))?;
        if self.goal.dim() != self.system.domain.dim() {
            return Err(CliError::Config("goal and domain dimensions differ".into()));
        }
        for s in &self.check.start_sets {
            s.polytope.validate().map_err(|e| bad(&e))?;
            if s.polytope.dim() != self.system.domain.dim() {
                return Err(CliError::Config(format!("start set {:?} has the wrong dimension", s.name)));
            }
        }
        Ok(())
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn system(&self) -> Result<NeuralFeedbackLoop, CliError> {
        let path = self.resolve(&self.config.system.network);
        if !path.is_file() {
            return Err(CliError::Config(format!("network file not found: {}", path.display())));
        }
        let controller = load_network(&path).map_err(|e| CliError::Config(e.to_string()))?;
        let dynamics = Dynamics::from_spec(&self.config.system.dynamics).map_err(|e| CliError::Config(e.to_string()))?;
        NeuralFeedbackLoop::new(dynamics, controller, self.config.system.domain.clone())
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn goal(&self) -> Result<GoalSet, CliError> {
        GoalSet::new(self.config.goal.clone()).map_err(|e| CliError::Config(e.to_string()))
    }
}
