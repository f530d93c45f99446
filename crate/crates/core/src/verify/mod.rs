//! Goal-reaching checks and coverage estimates over computed ball unions.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backreach::{add_polytope_rows, polytope_bounding_box, BackreachResult, GoalSet};
use crate::error::ReachError;
use crate::geometry::{BoxDomain, NormBall, Polytope};
use crate::milp::{add_not_in_ball, LinExpr, MilpModel, ObjectiveSense};
use crate::nfl::NeuralFeedbackLoop;
use crate::solver::{Backend, SolveOptions, SolveStatus};

/// Slack used when re-evaluating witnesses and goal membership.
pub const EVAL_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// Every start state lies in the union of the stored balls.
    Subset,
    /// A start state outside every stored ball.
    NotSubset { witness: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckVerdict {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub balls: usize,
    pub binaries: usize,
    pub nodes: u64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl CheckVerdict {
    pub fn is_subset(&self) -> bool {
        self.verdict == Verdict::Subset
    }
}

/// Decides whether the start set `{x | C x ≤ d}` lies inside the union of all
/// balls in `result`, by searching for a start state outside every ball.
pub fn check_goal_reaching(
    start: &Polytope,
    result: &BackreachResult,
    opts: &SolveOptions,
    backend: &Backend,
) -> Result<CheckVerdict, ReachError> {
    let began = Instant::now();
    start.validate()?;
    if start.dim() != result.state_dim() {
        return Err(ReachError::Config("start set dimension does not match the result".into()));
    }
    let bbox = polytope_bounding_box(start, opts)?;
    let d = &result.domain;
    let inside = (0..d.dim()).all(|i| bbox.lo[i] >= d.lo[i] - EVAL_SLACK && bbox.hi[i] <= d.hi[i] + EVAL_SLACK);
    if !inside {
        return Err(ReachError::Config("start set is not contained in the analysis domain".into()));
    }
    let balls: Vec<&NormBall> = result.balls().map(|(_, b)| b).collect();
    let mut v = check_in_box(start, &bbox, &balls, opts, backend)?;
    v.wall_seconds = began.elapsed().as_secs_f64();
    Ok(v)
}

/// Same as [`check_goal_reaching`] for an explicit ball list.
pub fn check_against_balls(
    start: &Polytope,
    balls: &[&NormBall],
    opts: &SolveOptions,
    backend: &Backend,
) -> Result<CheckVerdict, ReachError> {
    start.validate()?;
    let bbox = polytope_bounding_box(start, opts)?;
    check_in_box(start, &bbox, balls, opts, backend)
}

fn check_in_box(
    start: &Polytope,
    bbox: &BoxDomain,
    balls: &[&NormBall],
    opts: &SolveOptions,
    backend: &Backend,
) -> Result<CheckVerdict, ReachError> {
    let began = Instant::now();
    let bounds = bbox.intervals();
    let mut m = MilpModel::new();
    let x: Vec<_> = bounds.iter().map(|iv| m.add_var(iv.lo, iv.hi)).collect();
    add_polytope_rows(&mut m, &x, start)?;
    let mut used = 0;
    for b in balls {
        b.norm.ensure_linear()?;
        if b.dim() != x.len() {
            return Err(ReachError::Config("ball dimension does not match the start set".into()));
        }
        // a zero-radius ball has no interior to avoid
        if b.radius > 0.0 {
            add_not_in_ball(&mut m, &x, b, &bounds)?;
            used += 1;
        }
    }
    let binaries = m.num_binaries();
    m.set_objective(LinExpr::new(), ObjectiveSense::Feasibility)?;
    let sol = backend.solve(&m, opts)?;
    let verdict = match (sol.status, &sol.incumbent) {
        (SolveStatus::Infeasible, _) => Verdict::Subset,
        (_, Some(_)) => {
            let w: Vec<f64> = x.iter().map(|v| sol.values[v.index()]).collect();
            if start.max_violation(&w) > EVAL_SLACK {
                return Err(ReachError::Internal(format!("witness {w:?} violates the start set")));
            }
            if let Some(b) = balls.iter().find(|b| b.norm.distance(&w, &b.center) < b.radius - EVAL_SLACK) {
                return Err(ReachError::Internal(format!("witness {w:?} lies inside ball {:?}", b.center)));
            }
            Verdict::NotSubset { witness: w }
        }
        (s, None) => return Err(ReachError::Internal(format!("check stopped at a solver limit ({s:?})"))),
    };
    let nodes = sol.stats.nodes;
    Ok(CheckVerdict { verdict, balls: used, binaries, nodes, wall_seconds: began.elapsed().as_secs_f64() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCoverage {
    /// Horizon, or `None` for the pooled union column.
    pub t: Option<usize>,
    /// Samples whose true image lies in the goal.
    pub accepted: usize,
    /// Accepted samples inside the relevant ball union.
    pub covered: usize,
    /// `covered / accepted`; `None` when nothing was accepted.
    pub fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub samples: usize,
    pub seed: u64,
    pub n_samp: usize,
    pub steps: Vec<StepCoverage>,
    pub union: StepCoverage,
}

const SHARD: usize = 1024;

fn coverage_cell(t: Option<usize>, accepted: usize, covered: usize) -> StepCoverage {
    StepCoverage { t, accepted, covered, fraction: (accepted > 0).then(|| covered as f64 / accepted as f64) }
}

/// Monte-Carlo volume fraction of each step's true backward set covered by
/// that step's balls, with `n` uniform samples over the domain per step.
///
/// Samples come from ChaCha8 seeded with `seed`, one stream per
/// `(step, shard)` pair, so the report does not depend on thread count.
pub fn estimate_coverage(
    nfl: &NeuralFeedbackLoop,
    goal: &GoalSet,
    result: &BackreachResult,
    n: usize,
    seed: u64,
) -> Result<CoverageReport, ReachError> {
    if n == 0 {
        return Err(ReachError::Config("coverage needs at least one sample".into()));
    }
    let all: Vec<&NormBall> = result.balls().map(|(_, b)| b).collect();
    let mut steps = Vec::new();
    let (mut pooled_acc, mut pooled_cov) = (0, 0);
    for s in &result.steps {
        let t = s.t;
        let balls = result.balls_at(t);
        let shards = n.div_ceil(SHARD);
        let counts: Vec<(usize, usize, usize)> = (0..shards)
            .into_par_iter()
            .map(|shard| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((t as u64) << 32) | shard as u64);
                let len = SHARD.min(n - shard * SHARD);
                let (mut acc, mut cov, mut ucov) = (0, 0, 0);
                let dim = nfl.state_dim();
                for _ in 0..len {
                    let u: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                    let x = nfl.domain.from_unit(&u);
                    if !goal.polytope.contains(&nfl.simulate(&x, t), EVAL_SLACK) {
                        continue;
                    }
                    acc += 1;
                    if balls.iter().any(|b| b.contains(&x, 0.0)) {
                        cov += 1;
                    }
                    if all.iter().any(|b| b.contains(&x, 0.0)) {
                        ucov += 1;
                    }
                }
                (acc, cov, ucov)
            })
            .collect();
        let acc: usize = counts.iter().map(|c| c.0).sum();
        let cov: usize = counts.iter().map(|c| c.1).sum();
        pooled_acc += acc;
        pooled_cov += counts.iter().map(|c| c.2).sum::<usize>();
        steps.push(coverage_cell(Some(t), acc, cov));
    }
    Ok(CoverageReport {
        samples: n,
        seed,
        n_samp: result.config.n_samp,
        steps,
        union: coverage_cell(None, pooled_acc, pooled_cov),
    })
}

fn fmt_fraction(f: Option<f64>) -> String {
    match f {
        Some(v) => format!("{v:.4}"),
        None => "NA".into(),
    }
}

/// Table with one row per report: `n_samp`, one column per step, then the union.
pub fn coverage_csv(reports: &[CoverageReport]) -> String {
    let k = reports.iter().map(|r| r.steps.len()).max().unwrap_or(0);
    let mut out = String::from("n_samp");
    for t in 1..=k {
        let _ = write!(out, ",t{t}");
    }
    out.push_str(",union\n");
    for r in reports {
        let _ = write!(out, "{}", r.n_samp);
        for t in 0..k {
            out.push(',');
            out.push_str(&fmt_fraction(r.steps.get(t).and_then(|s| s.fraction)));
        }
        out.push(',');
        out.push_str(&fmt_fraction(r.union.fraction));
        out.push('\n');
    }
    out
}
