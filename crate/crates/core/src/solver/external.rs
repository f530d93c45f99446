//! Escape hatch to an external MILP solver through files.
//!
//! The model is written in CPLEX-LP format and the configured command is run
//! with `{lp}` and `{solution}` placeholders substituted in its arguments. The
//! command must write a plain-text solution file:
//!
//! ```text
//! status optimal          # optimal | infeasible | unbounded | gap_limit | iter_limit
//! objective 1.25          # incumbent objective, omitted when none
//! bound 1.2               # proven bound, defaults to the objective
//! eps_3 1.25              # one `name value` pair per variable
//! ```

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::bnb::{Solution, SolveOptions, SolveStats, SolveStatus};
use crate::error::SolverError;
use crate::milp::{lp_format, MilpModel, ObjectiveSense};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSolver {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl ExternalSolver {
    pub fn solve(&self, model: &MilpModel, _opts: &SolveOptions) -> Result<Solution, SolverError> {
        let start = std::time::Instant::now();
        let dir = std::env::temp_dir().join(format!(
            "nfl-reach-ext-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&dir).map_err(|e| SolverError::External(e.to_string()))?;
        let lp = dir.join("model.lp");
        let sol = dir.join("model.sol");
        std::fs::write(&lp, lp_format::write_lp(model)).map_err(|e| SolverError::External(e.to_string()))?;
        let _ = std::fs::remove_file(&sol);
        let subst = |a: &str| {
            a.replace("{lp}", &lp.to_string_lossy()).replace("{solution}", &sol.to_string_lossy())
        };
        let out = Command::new(&self.command)
            .args(self.args.iter().map(|a| subst(a)))
            .output()
            .map_err(|e| SolverError::External(format!("cannot run {}: {e}", self.command)))?;
        if !out.status.success() {
            return Err(SolverError::External(format!(
                "{} exited with {}: {}",
                self.command,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = read(&sol)?;
        let mut s = parse_solution(model, &text)?;
        s.stats.wall_seconds = start.elapsed().as_secs_f64();
        let _ = std::fs::remove_dir_all(&dir);
        Ok(s)
    }
}

fn read(p: &Path) -> Result<String, SolverError> {
    std::fs::read_to_string(p).map_err(|e| SolverError::External(format!("cannot read {}: {e}", p.display())))
}

/// Parse the plain-text solution format against the names `write_lp` emits.
pub fn parse_solution(model: &MilpModel, text: &str) -> Result<Solution, SolverError> {
    let names = lp_format::var_names(model);
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut status = None;
    let mut objective = None;
    let mut bound = None;
    let mut values = vec![f64::NAN; model.num_vars()];
    let bad = |line: usize, msg: &str| SolverError::External(format!("solution line {}: {msg}", line + 1));
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().unwrap_or_default();
        let val = it.next().ok_or_else(|| bad(ln, "missing value"))?;
        if it.next().is_some() {
            return Err(bad(ln, "expected `name value`"));
        }
        match key {
            "status" => {
                status = Some(match val {
                    "optimal" => SolveStatus::Optimal,
                    "infeasible" => SolveStatus::Infeasible,
                    "unbounded" => SolveStatus::Unbounded,
                    "gap_limit" => SolveStatus::GapLimit,
                    "iter_limit" => SolveStatus::IterLimit,
                    other => return Err(bad(ln, &format!("unknown status {other}"))),
                })
            }
            "objective" | "bound" => {
                let v: f64 = val.parse().map_err(|_| bad(ln, "bad number"))?;
                if key == "objective" {
                    objective = Some(v);
                } else {
                    bound = Some(v);
                }
            }
            name => {
                let i = *index.get(name).ok_or_else(|| bad(ln, &format!("unknown variable {name}")))?;
                values[i] = val.parse().map_err(|_| bad(ln, "bad number"))?;
            }
        }
    }
    let status = status.ok_or_else(|| SolverError::External("solution has no status line".into()))?;
    let has_point = objective.is_some() && matches!(status, SolveStatus::Optimal | SolveStatus::GapLimit | SolveStatus::IterLimit);
    if has_point {
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(SolverError::External(format!("solution omits variable {}", names[i])));
        }
    } else {
        values.clear();
    }
    let maximize = model.objective().1 == ObjectiveSense::Maximize;
    let default_bound = match status {
        SolveStatus::Infeasible => if maximize { f64::NEG_INFINITY } else { f64::INFINITY },
        _ => objective.unwrap_or(if maximize { f64::INFINITY } else { f64::NEG_INFINITY }),
    };
    Ok(Solution {
        status,
        incumbent: if has_point { objective } else { None },
        bound: bound.unwrap_or(default_bound),
        values,
        stats: SolveStats::default(),
    })
}
