//! Norm-ball underapproximations of backward reachable sets.
//!
//! For each horizon `t` the run draws centers whose true `t`-step image lands
//! in the goal, then grows the largest ball around each center whose every
//! abstracted trajectory stays in the goal. The radius is the solver's proved
//! lower bound on the smallest escaping distance, so early termination only
//! shrinks balls.

pub mod result;
pub mod sobol;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use result::{BackreachResult, BallRecord, Provenance, RunTiming, StepResult, RESULT_FORMAT};
pub use sobol::{SobolSampler, MAX_SOBOL_DIM};

use crate::error::ReachError;
use crate::geometry::{BoxDomain, Interval, Norm, NormBall, Polytope};
use crate::milp::{add_norm_le, add_not_in_interior, LinExpr, MilpModel, ObjectiveSense};
use crate::nfl::{encode_rollout, propagate_bounds, BoundsCache, EnvelopeSet, NeuralFeedbackLoop};
use crate::solver::{Backend, Feasibility, Solution, SolveOptions, SolveStatus};

/// Where the big-M bounds of a ball problem come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    /// Propagate from a box around the center sized by a simulation probe.
    #[default]
    Ball,
    /// Propagate once from the whole domain.
    Domain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachConfig {
    /// Horizon: balls are computed for `t = 1..=k`.
    pub k: usize,
    /// Balls per step.
    pub n_samp: usize,
    pub norm: Norm,
    /// Relative tolerance of the dynamics envelopes.
    pub rel_tol: f64,
    /// Sobol draws allowed per center.
    pub rejection_cap: u64,
    pub bounds_mode: BoundsMode,
    /// Rays cast by the escape probe in `BoundsMode::Ball`.
    pub probe_rays: usize,
    pub solver: SolveOptions,
    pub backend: Backend,
}

impl Default for ReachConfig {
    fn default() -> Self {
        ReachConfig {
            k: 1,
            n_samp: 1,
            norm: Norm::LInf,
            rel_tol: 1e-6,
            rejection_cap: 100_000,
            bounds_mode: BoundsMode::Ball,
            probe_rays: 64,
            solver: SolveOptions::default(),
            backend: Backend::Reference,
        }
    }
}

impl ReachConfig {
    pub fn validate(&self) -> Result<(), ReachError> {
        let bad = |m: &str| Err(ReachError::Config(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.n_samp == 0 {
            return bad("n_samp must be at least 1");
        }
        if self.rejection_cap == 0 {
            return bad("rejection_cap must be at least 1");
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad("rel_tol must be positive");
        }
        if self.probe_rays == 0 {
            return bad("probe_rays must be at least 1");
        }
        if !(self.solver.feas_tol > 0.0 && self.solver.gap_tol >= 0.0) {
            return bad("solver tolerances must be positive");
        }
        self.norm.ensure_linear()?;
        Ok(())
    }
}

/// Coordinates further out than this are treated as unbounded when bounding a polytope.
pub const FAR_BOUND: f64 = 1e7;

/// Target set `G`, closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalSet {
    pub polytope: Polytope,
}

impl GoalSet {
    /// Rejects empty polytopes (checked by an LP).
    pub fn new(polytope: Polytope) -> Result<Self, ReachError> {
        polytope.validate()?;
        let mut m = MilpModel::new();
        let x: Vec<_> = (0..polytope.dim()).map(|_| m.add_var(-FAR_BOUND, FAR_BOUND)).collect();
        add_polytope_rows(&mut m, &x, &polytope)?;
        match crate::solver::check_feasible(&m, &SolveOptions::default())? {
            Feasibility::Feasible(_) => Ok(GoalSet { polytope }),
            _ => Err(ReachError::Config("goal set is empty".into())),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.polytope.contains(x, 0.0)
    }
}

pub(crate) fn add_polytope_rows(m: &mut MilpModel, x: &[crate::milp::VarId], p: &Polytope) -> Result<(), ReachError> {
    for (row, b) in p.a.iter().zip(&p.b) {
        let mut e = LinExpr::new();
        for (v, c) in x.iter().zip(row) {
            e.add_term(*v, *c);
        }
        m.add_constraint(e, crate::milp::Sense::Le, *b)?;
    }
    Ok(())
}

/// An accepted center and its position in the Sobol sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Center {
    pub sobol_index: u64,
    pub point: Vec<f64>,
}

/// Draws Sobol points over the domain until one reaches `goal` in exactly `t`
/// true closed-loop steps.
pub fn sample_center(
    sampler: &mut SobolSampler,
    goal: &GoalSet,
    nfl: &NeuralFeedbackLoop,
    t: usize,
    cap: u64,
) -> Result<Center, ReachError> {
    for _ in 0..cap {
        let (i, u) = sampler.next_point();
        let x = nfl.domain.from_unit(&u);
        if goal.contains(&nfl.simulate(&x, t)) {
            return Ok(Center { sobol_index: i, point: x });
        }
    }
    Err(ReachError::RejectionCapExhausted { t, cap })
}

/// Unit-norm probe directions: axis directions first, then Sobol directions.
fn probe_directions(n: usize, count: usize, norm: Norm) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(count.max(2 * n));
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = s;
            dirs.push(d);
        }
    }
    if n == 2 {
        let extra = count.saturating_sub(dirs.len());
        for j in 0..extra {
            let a = std::f64::consts::TAU * (j as f64 + 0.5) / extra as f64;
            dirs.push(vec![a.cos(), a.sin()]);
        }
    } else if let Ok(s) = SobolSampler::new(n.min(MAX_SOBOL_DIM)) {
        let mut i = 1;
        while dirs.len() < count && n <= MAX_SOBOL_DIM {
            let d: Vec<f64> = s.point(i).iter().map(|u| 2.0 * u - 1.0).collect();
            i += 1;
            if norm.of(&d) > 1e-9 {
                dirs.push(d);
            }
        }
    }
    dirs.into_iter()
        .map(|d| {
            let l = norm.of(&d);
            d.into_iter().map(|v| v / l).collect()
        })
        .collect()
}

/// Smallest distance, along a fan of rays, at which the true `t`-step image of
/// a point leaves `goal`; `limit` when no ray escapes before it. Any escaping
/// point bounds the optimal ball radius from above.
pub fn probe_escape_radius(
    nfl: &NeuralFeedbackLoop,
    goal: &GoalSet,
    x_d: &[f64],
    t: usize,
    norm: Norm,
    limit: f64,
    rays: usize,
) -> f64 {
    const MARCH: usize = 32;
    let mut best = limit;
    if limit <= 0.0 {
        return 0.0;
    }
    let at = |d: &[f64], s: f64| -> Vec<f64> { x_d.iter().zip(d).map(|(c, v)| c + s * v).collect() };
    for d in probe_directions(x_d.len(), rays, norm) {
        let step = best / MARCH as f64;
        let mut prev = 0.0;
        for j in 1..=MARCH {
            let s = step * j as f64;
            if !goal.contains(&nfl.simulate(&at(&d, s), t)) {
                let (mut lo, mut hi) = (prev, s);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if goal.contains(&nfl.simulate(&at(&d, mid), t)) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                best = best.min(hi);
                break;
            }
            prev = s;
        }
    }
    best
}

/// Outcome of one ball problem.
#[derive(Clone, Debug)]
pub struct BallSolve {
    /// Sound radius: the proved bound, capped by the encoded region.
    pub radius: f64,
    pub incumbent: Option<f64>,
    pub bound: f64,
    /// Largest ball around the center inside the encoded region.
    pub cap: f64,
    pub binaries: usize,
    pub solution: Solution,
}

/// Builds the ball MILP: minimize `ε` subject to `‖x − x_d‖ ≤ ε`, `x` in the
/// cache's initial box, `x_t = f̂^t(x)` and `x_t ∉ int G`.
pub fn build_ball_model(
    nfl: &NeuralFeedbackLoop,
    envelopes: &EnvelopeSet,
    cache: &BoundsCache,
    x_d: &[f64],
    goal: &GoalSet,
    t: usize,
    norm: Norm,
) -> Result<(MilpModel, crate::milp::VarId), ReachError> {
    norm.ensure_linear()?;
    let mut m = MilpModel::new();
    let roll = encode_rollout(&mut m, nfl, envelopes, t, cache)?;
    let init = &cache.states[0];
    let reach: Vec<f64> = init.iter().zip(x_d).map(|(iv, c)| (c - iv.lo).abs().max((iv.hi - c).abs())).collect();
    let eps_max = match norm {
        Norm::L1 => reach.iter().sum(),
        _ => reach.iter().cloned().fold(0.0, f64::max),
    };
    let eps = m.add_named_var("eps", 0.0, eps_max);
    add_norm_le(&mut m, roll.initial(), x_d, eps, norm)?;
    add_not_in_interior(&mut m, roll.final_state(), &goal.polytope, &cache.states[t])?;
    m.set_objective(LinExpr::from(eps), ObjectiveSense::Minimize)?;
    Ok((m, eps))
}

pub fn min_ball_radius(
    nfl: &NeuralFeedbackLoop,
    envelopes: &EnvelopeSet,
    cache: &BoundsCache,
    x_d: &[f64],
    goal: &GoalSet,
    t: usize,
    norm: Norm,
    opts: &SolveOptions,
    backend: &Backend,
) -> Result<BallSolve, ReachError> {
    let (model, _) = build_ball_model(nfl, envelopes, cache, x_d, goal, t, norm)?;
    let cap = BoxDomain::from_intervals(&cache.states[0]).inner_radius(x_d);
    let solution = backend.solve(&model, opts)?;
    let (radius, incumbent, bound) = match solution.status {
        SolveStatus::Infeasible => (cap, None, f64::INFINITY),
        SolveStatus::Unbounded => return Err(ReachError::Internal("ball problem reported unbounded".into())),
        _ => {
            // shave the solver's feasibility tolerance off the bound
            let b = solution.bound;
            let safe = (b - opts.feas_tol * (1.0 + b.abs())).max(0.0);
            (safe.min(cap), solution.incumbent, b)
        }
    };
    Ok(BallSolve { radius, incumbent, bound, cap, binaries: model.num_binaries(), solution })
}

/// Bounds used for the ball problem at `x_d`: the domain cache, or a box of
/// the probed escape radius around the center. Also returns the probe radius.
pub fn center_bounds(
    nfl: &NeuralFeedbackLoop,
    envelopes: &EnvelopeSet,
    domain_cache: Option<&BoundsCache>,
    x_d: &[f64],
    goal: &GoalSet,
    t: usize,
    config: &ReachConfig,
) -> Result<(Option<f64>, BoundsCache), ReachError> {
    match (config.bounds_mode, domain_cache) {
        (BoundsMode::Domain, Some(c)) => Ok((None, truncate(c, t))),
        (BoundsMode::Domain, None) => Ok((None, propagate_bounds(nfl, envelopes, &nfl.domain, t)?)),
        (BoundsMode::Ball, _) => {
            let inner = nfl.domain.inner_radius(x_d);
            let r = probe_escape_radius(nfl, goal, x_d, t, config.norm, inner, config.probe_rays);
            let b = BoxDomain {
                lo: x_d.iter().map(|c| c - r).collect(),
                hi: x_d.iter().map(|c| c + r).collect(),
            };
            Ok((Some(r), propagate_bounds(nfl, envelopes, &b, t)?))
        }
    }
}

/// Computes the ball around one accepted center, choosing bounds per `config.bounds_mode`.
pub fn solve_center(
    nfl: &NeuralFeedbackLoop,
    envelopes: &EnvelopeSet,
    domain_cache: Option<&BoundsCache>,
    center: &Center,
    goal: &GoalSet,
    t: usize,
    config: &ReachConfig,
) -> Result<BallRecord, ReachError> {
    let start = Instant::now();
    let x_d = &center.point;
    let (probe, cache) = center_bounds(nfl, envelopes, domain_cache, x_d, goal, t, config)?;
    let solve = min_ball_radius(nfl, envelopes, &cache, x_d, goal, t, config.norm, &config.solver, &config.backend)?;
    let ball = NormBall::new(x_d.clone(), solve.radius, config.norm)?;
    log::debug!(
        "t={t} center {:?}: radius {:.6} status {:?} nodes {} binaries {} in {:.2}s",
        x_d,
        solve.radius,
        solve.solution.status,
        solve.solution.stats.nodes,
        solve.binaries,
        start.elapsed().as_secs_f64()
    );
    Ok(BallRecord {
        ball,
        provenance: Provenance {
            sobol_index: center.sobol_index,
            incumbent: solve.incumbent,
            bound: solve.bound.is_finite().then_some(solve.bound),
            status: solve.solution.status,
            nodes: solve.solution.stats.nodes,
            lp_iterations: solve.solution.stats.lp_iterations,
            probe_radius: probe,
            region_radius: solve.cap,
            binaries: solve.binaries,
        },
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn config_hash(nfl: &NeuralFeedbackLoop, goal: &GoalSet, config: &ReachConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(config).expect("config serializes"));
    h.update(serde_json::to_string(goal).expect("goal serializes"));
    h.update(serde_json::to_string(&nfl.domain).expect("domain serializes"));
    h.update(serde_json::to_string(&nfl.controller).expect("network serializes"));
    h.update(format!("{:?}", nfl.dynamics));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// The full run: envelopes over the domain, then `n_samp` balls for each `t = 1..=k`.
pub fn run_backreach(
    nfl: &NeuralFeedbackLoop,
    goal: &GoalSet,
    config: &ReachConfig,
) -> Result<(BackreachResult, RunTiming), ReachError> {
    config.validate()?;
    if goal.polytope.dim() != nfl.state_dim() {
        return Err(ReachError::Config("goal dimension does not match the state".into()));
    }
    let started = Instant::now();
    let envelopes = EnvelopeSet::fit(nfl, &nfl.domain, config.k, config.rel_tol)?;
    let domain_cache = match config.bounds_mode {
        BoundsMode::Domain => Some(propagate_bounds(nfl, &envelopes, &nfl.domain, config.k)?),
        BoundsMode::Ball => None,
    };
    let setup_seconds = started.elapsed().as_secs_f64();
    log::info!("envelopes {:?} segments, setup {setup_seconds:.2}s", envelopes.envelopes.iter().map(|e| e.segments()).collect::<Vec<_>>());
    let mut steps = Vec::with_capacity(config.k);
    let mut timing = RunTiming { setup_seconds, ..Default::default() };
    for t in 1..=config.k {
        let step_start = Instant::now();
        let mut errors = Vec::new();
        // every step scans the sequence from its start, so a run's centers
        // at step t are a prefix of those of any run with a larger n_samp
        let mut sampler = SobolSampler::new(nfl.state_dim())?;
        let mut centers = Vec::with_capacity(config.n_samp);
        for _ in 0..config.n_samp {
            match sample_center(&mut sampler, goal, nfl, t, config.rejection_cap) {
                Ok(c) => centers.push(c),
                Err(e) => {
                    errors.push(e.to_string());
                    break;
                }
            }
        }
        let outcomes: Vec<Result<BallRecord, ReachError>> = centers
            .par_iter()
            .map(|c| solve_center(nfl, &envelopes, domain_cache.as_ref(), c, goal, t, config))
            .collect();
        let mut balls = Vec::with_capacity(outcomes.len());
        let mut ball_seconds = Vec::with_capacity(outcomes.len());
        for (c, o) in centers.iter().zip(outcomes) {
            match o {
                Ok(b) => {
                    ball_seconds.push(b.wall_seconds);
                    balls.push(b);
                }
                Err(e) => errors.push(format!("center {:?}: {e}", c.point)),
            }
        }
        if balls.is_empty() {
            log::warn!("step {t}: no balls computed");
        }
        for e in &errors {
            log::warn!("step {t}: {e}");
        }
        timing.step_seconds.push(step_start.elapsed().as_secs_f64());
        timing.ball_seconds.push(ball_seconds);
        steps.push(StepResult { t, balls, errors });
    }
    timing.total_seconds = started.elapsed().as_secs_f64();
    let result = BackreachResult {
        format: RESULT_FORMAT.to_string(),
        config_hash: config_hash(nfl, goal, config),
        config: config.clone(),
        goal: goal.polytope.clone(),
        domain: nfl.domain.clone(),
        envelope_segments: envelopes.envelopes.iter().map(|e| e.segments()).collect(),
        steps,
    };
    Ok((result, timing))
}

fn truncate(cache: &BoundsCache, t: usize) -> BoundsCache {
    BoundsCache { states: cache.states[..=t].to_vec(), steps: cache.steps[..t].to_vec() }
}

/// Interval hull of a polytope, by one LP per coordinate direction.
pub fn polytope_bounding_box(p: &Polytope, opts: &SolveOptions) -> Result<BoxDomain, ReachError> {
    let n = p.dim();
    let mut m = MilpModel::new();
    let x: Vec<_> = (0..n).map(|_| m.add_var(-FAR_BOUND, FAR_BOUND)).collect();
    add_polytope_rows(&mut m, &x, p)?;
    let mut ivs = Vec::with_capacity(n);
    for &xi in &x {
        let mut ends = [0.0; 2];
        for (k, sense) in [ObjectiveSense::Minimize, ObjectiveSense::Maximize].into_iter().enumerate() {
            let mut mm = m.clone();
            mm.set_objective(LinExpr::from(xi), sense)?;
            let s = crate::solver::solve(&mm, opts)?;
            match (s.status, s.incumbent) {
                (SolveStatus::Optimal, Some(v)) => ends[k] = v,
                (SolveStatus::Infeasible, _) => return Err(ReachError::Config("polytope is empty".into())),
                _ => return Err(ReachError::Internal("bounding LP did not finish".into())),
            }
        }
        if ends[0] <= -FAR_BOUND * 0.999 || ends[1] >= FAR_BOUND * 0.999 {
            return Err(ReachError::Config("polytope is unbounded".into()));
        }
        ivs.push(Interval::new(ends[0], ends[1]));
    }
    Ok(BoxDomain::from_intervals(&ivs))
}
