//! Serialized output of a backward reachability run.

use serde::{Deserialize, Serialize};

use super::ReachConfig;
use crate::error::ReachError;
use crate::geometry::{BoxDomain, NormBall, Polytope};
use crate::solver::SolveStatus;

pub const RESULT_FORMAT: &str = "nfl-reach/backreach-result/1";

/// Where a ball came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub sobol_index: u64,
    /// Best escaping distance found, if the solver found one.
    pub incumbent: Option<f64>,
    /// Proved lower bound on the smallest escaping distance; absent when no
    /// point of the encoded region escapes.
    pub bound: Option<f64>,
    pub status: SolveStatus,
    pub nodes: u64,
    pub lp_iterations: u64,
    /// Escape distance found by simulation, when probing was used.
    pub probe_radius: Option<f64>,
    /// Radius of the largest ball inside the encoded region.
    pub region_radius: f64,
    pub binaries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallRecord {
    #[serde(flatten)]
    pub ball: NormBall,
    pub provenance: Provenance,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepResult {
    pub t: usize,
    pub balls: Vec<BallRecord>,
    /// Centers that failed, with the reason.
    #[serde(default)]
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackreachResult {
    pub format: String,
    pub config_hash: String,
    pub config: ReachConfig,
    pub goal: Polytope,
    pub domain: BoxDomain,
    pub envelope_segments: Vec<usize>,
    pub steps: Vec<StepResult>,
}

impl BackreachResult {
    pub fn balls(&self) -> impl Iterator<Item = (usize, &NormBall)> {
        self.steps.iter().flat_map(|s| s.balls.iter().map(move |b| (s.t, &b.ball)))
    }

    pub fn balls_at(&self, t: usize) -> Vec<&NormBall> {
        self.steps.iter().filter(|s| s.t == t).flat_map(|s| s.balls.iter().map(|b| &b.ball)).collect()
    }

    pub fn state_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self, ReachError> {
        let r: BackreachResult = serde_json::from_str(s).map_err(|e| ReachError::Config(format!("result file: {e}")))?;
        if r.format != RESULT_FORMAT {
            return Err(ReachError::Config(format!("unsupported result format `{}`", r.format)));
        }
        Ok(r)
    }
}

/// Wall-clock figures kept apart from the result so results stay reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub setup_seconds: f64,
    pub step_seconds: Vec<f64>,
    pub ball_seconds: Vec<Vec<f64>>,
    pub total_seconds: f64,
}
