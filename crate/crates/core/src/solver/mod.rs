//! MILP solving: an in-process branch-and-bound reference solver and a
//! file-driven external backend behind one contract.

pub mod bnb;
pub mod external;
pub(crate) mod simplex;

use serde::{Deserialize, Serialize};

pub use bnb::{BranchAndBound, Feasibility, Solution, SolveOptions, SolveStats, SolveStatus};
pub use external::ExternalSolver;

use crate::error::SolverError;
use crate::milp::{LinExpr, MilpModel, ObjectiveSense};

/// Which backend solves the MILPs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Backend {
    #[default]
    Reference,
    External(ExternalSolver),
}

impl Backend {
    pub fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<Solution, SolverError> {
        match self {
            Backend::Reference => BranchAndBound::solve(model, opts),
            Backend::External(e) => e.solve(model, opts),
        }
    }

    pub fn check_feasible(&self, model: &MilpModel, opts: &SolveOptions) -> Result<Feasibility, SolverError> {
        match self {
            Backend::Reference => BranchAndBound::check_feasible(model, opts),
            Backend::External(e) => {
                let mut m = model.clone();
                m.set_objective(LinExpr::new(), ObjectiveSense::Feasibility)?;
                let s = e.solve(&m, opts)?;
                Ok(match s.status {
                    SolveStatus::Infeasible => Feasibility::Infeasible,
                    _ if s.incumbent.is_some() => Feasibility::Feasible(s.values),
                    st => Feasibility::Undecided(st),
                })
            }
        }
    }
}

/// Solve with the reference branch-and-bound.
pub fn solve(model: &MilpModel, opts: &SolveOptions) -> Result<Solution, SolverError> {
    BranchAndBound::solve(model, opts)
}

pub fn check_feasible(model: &MilpModel, opts: &SolveOptions) -> Result<Feasibility, SolverError> {
    BranchAndBound::check_feasible(model, opts)
}
