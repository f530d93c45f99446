//! Best-first branch-and-bound over LP relaxations.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::rc::Rc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::simplex::{LpData, LpStatus, Tableau};
use crate::error::SolverError;
use crate::milp::MilpModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub feas_tol: f64,
    /// Absolute optimality gap.
    pub gap_tol: f64,
    pub node_limit: Option<u64>,
    /// Seconds. Runs that hit a time limit are not reproducible.
    pub time_limit: Option<f64>,
    /// Per-node cap on simplex iterations; `None` scales with model size.
    pub lp_iteration_limit: Option<u64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { feas_tol: 1e-7, gap_tol: 1e-6, node_limit: None, time_limit: None, lp_iteration_limit: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    GapLimit,
    IterLimit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: u64,
    pub lp_iterations: u64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    /// Best integral objective found, if any.
    pub incumbent: Option<f64>,
    /// Proven bound on the optimum: lower for minimize, upper for maximize.
    pub bound: f64,
    /// Assignment of the incumbent, indexed by `VarId::index`.
    pub values: Vec<f64>,
    pub stats: SolveStats,
}

impl Solution {
    pub fn value(&self, v: crate::milp::VarId) -> f64 {
        self.values[v.index()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible,
    /// Limits were reached before either outcome was proven.
    Undecided(SolveStatus),
}

struct Node {
    id: u64,
    parent: u64,
    depth: u32,
    bound: f64,
    fixes: Vec<i8>,
    branch: Option<(usize, i8)>,
    parent_basis: Option<Rc<Vec<usize>>>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // BinaryHeap pops the greatest: smallest bound, then deepest, then oldest.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&o.depth))
            .then(o.id.cmp(&self.id))
    }
}

const CACHE_BUDGET_F64: usize = 32 << 20;
const INTEGRALITY_TOL: f64 = 1e-6;

struct WarmCache {
    entries: HashMap<u64, (Tableau, u8)>,
    order: VecDeque<u64>,
    capacity: usize,
}

impl WarmCache {
    fn new(tableau_size: usize) -> Self {
        let capacity = (CACHE_BUDGET_F64 / tableau_size.max(1)).clamp(1, 64);
        WarmCache { entries: HashMap::new(), order: VecDeque::new(), capacity }
    }

    fn insert(&mut self, id: u64, t: Tableau) {
        while self.entries.len() >= self.capacity {
            match self.order.pop_front() {
                Some(old) => {
                    self.entries.remove(&old);
                }
                None => break,
            }
        }
        self.entries.insert(id, (t, 2));
        self.order.push_back(id);
    }

    fn take(&mut self, id: u64) -> Option<Tableau> {
        let (left, t) = match self.entries.get_mut(&id) {
            None => return None,
            Some(e) => {
                e.1 -= 1;
                (e.1, if e.1 > 0 { Some(e.0.clone()) } else { None })
            }
        };
        if left == 0 {
            self.order.retain(|&o| o != id);
            return self.entries.remove(&id).map(|e| e.0);
        }
        t
    }
}

/// Reference in-process solver.
pub struct BranchAndBound;

impl BranchAndBound {
    pub fn solve(model: &MilpModel, opts: &SolveOptions) -> Result<Solution, SolverError> {
        run(model, opts, false)
    }

    pub fn check_feasible(model: &MilpModel, opts: &SolveOptions) -> Result<Feasibility, SolverError> {
        let mut m = model.clone();
        m.set_objective(crate::milp::LinExpr::new(), crate::milp::ObjectiveSense::Feasibility)?;
        let sol = run(&m, opts, true)?;
        Ok(match sol.status {
            SolveStatus::Infeasible => Feasibility::Infeasible,
            _ if sol.incumbent.is_some() => Feasibility::Feasible(sol.values),
            s => Feasibility::Undecided(s),
        })
    }
}

fn node_bounds(data: &LpData, fixes: &[i8]) -> (Vec<f64>, Vec<f64>) {
    let mut lo = data.lo.clone();
    let mut hi = data.hi.clone();
    for (k, &f) in fixes.iter().enumerate() {
        if f >= 0 {
            let j = data.binaries[k];
            lo[j] = f as f64;
            hi[j] = f as f64;
        }
    }
    (lo, hi)
}

fn run(model: &MilpModel, opts: &SolveOptions, first_feasible: bool) -> Result<Solution, SolverError> {
    let start = Instant::now();
    let data = LpData::from_model(model)?;
    let nbin = data.binaries.len();
    let iter_cap = opts.lp_iteration_limit.unwrap_or(50 * (data.n + data.m) as u64 + 10_000);
    let mut stats = SolveStats::default();
    let mut cache: Option<WarmCache> = None;
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        parent: u64::MAX,
        depth: 0,
        bound: f64::NEG_INFINITY,
        fixes: vec![-1; nbin],
        branch: None,
        parent_basis: None,
    });
    let mut next_id = 1u64;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut pruned_min = f64::INFINITY;
    let mut stopped: Option<SolveStatus> = None;
    let mut stopped_bound = f64::INFINITY;

    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &incumbent {
            if node.bound >= inc - opts.gap_tol {
                pruned_min = pruned_min.min(node.bound);
                // everything left is at least as bad
                for n in heap.drain() {
                    pruned_min = pruned_min.min(n.bound);
                }
                break;
            }
        }
        let over_nodes = opts.node_limit.is_some_and(|l| stats.nodes >= l);
        let over_time = opts.time_limit.is_some_and(|l| start.elapsed().as_secs_f64() >= l);
        if over_nodes || over_time {
            stopped = Some(SolveStatus::GapLimit);
            stopped_bound = node.bound;
            heap.push(node);
            break;
        }
        stats.nodes += 1;
        if stats.nodes % 1000 == 0 {
            log::debug!(
                "b&b: {} nodes, {} open, bound {:.6}, incumbent {:?}, {} lp iterations",
                stats.nodes,
                heap.len(),
                node.bound,
                incumbent.as_ref().map(|i| i.0),
                stats.lp_iterations
            );
        }
        let mut tab = match cache.as_mut().and_then(|c| c.take(node.parent)) {
            Some(mut t) => {
                if let Some((k, v)) = node.branch {
                    let j = data.binaries[k];
                    t.set_bounds(j, v as f64, v as f64);
                }
                t
            }
            None => {
                let (lo, hi) = node_bounds(&data, &node.fixes);
                match &node.parent_basis {
                    Some(b) => Tableau::from_basis(&data, &lo, &hi, b),
                    None => Tableau::new(&data, &lo, &hi),
                }
            }
        };
        let before = tab.iterations;
        let status = tab.solve(iter_cap);
        stats.lp_iterations += tab.iterations - before;
        match status {
            LpStatus::Infeasible => continue,
            LpStatus::IterLimit => {
                stopped = Some(SolveStatus::IterLimit);
                stopped_bound = node.bound;
                heap.push(node);
                break;
            }
            LpStatus::Optimal => {}
        }
        let obj = tab.dual_bound().max(node.bound);
        if let Some((inc, _)) = &incumbent {
            if obj >= inc - opts.gap_tol {
                pruned_min = pruned_min.min(obj);
                continue;
            }
        }
        // most fractional binary, lowest index on ties
        let mut branch_on: Option<(usize, f64)> = None;
        for (k, &j) in data.binaries.iter().enumerate() {
            let v = tab.x[j];
            let frac = (v - v.floor()).min(v.ceil() - v);
            if frac > INTEGRALITY_TOL && branch_on.is_none_or(|(_, f)| frac > f + 1e-12) {
                branch_on = Some((k, frac));
            }
        }
        match branch_on {
            None => {
                let mut values = tab.x[..data.n].to_vec();
                for &j in &data.binaries {
                    values[j] = values[j].round();
                }
                let residual = data.max_row_residual(&tab.x[..data.n], &tab.x[data.n..]);
                if residual > 1e-6 {
                    return Err(SolverError::Numerical(format!(
                        "row residual {residual:e} at an integral node; the model is badly scaled"
                    )));
                }
                let exact_obj = tab.objective();
                incumbent = Some((exact_obj, values));
                if first_feasible {
                    stopped = Some(SolveStatus::Optimal);
                    stopped_bound = f64::NEG_INFINITY;
                    break;
                }
            }
            Some((k, _)) => {
                let basis = Rc::new(tab.basis().to_vec());
                let c = cache.get_or_insert_with(|| WarmCache::new(tab.size()));
                for v in [0i8, 1] {
                    let mut fixes = node.fixes.clone();
                    fixes[k] = v;
                    heap.push(Node {
                        id: next_id,
                        parent: node.id,
                        depth: node.depth + 1,
                        bound: obj,
                        fixes,
                        branch: Some((k, v)),
                        parent_basis: Some(basis.clone()),
                    });
                    next_id += 1;
                }
                c.insert(node.id, tab);
            }
        }
    }
    stats.wall_seconds = start.elapsed().as_secs_f64();

    let open_min = heap.iter().map(|n| n.bound).fold(stopped_bound, f64::min);
    let sign = data.obj_sign;
    let konst = data.obj_const;
    let external = |internal: f64| sign * internal + konst;
    let (status, inc, bound, values) = match (incumbent, stopped) {
        (Some((inc, vals)), None) => {
            let b = pruned_min.min(inc);
            (SolveStatus::Optimal, Some(inc), b, vals)
        }
        (Some((inc, vals)), Some(SolveStatus::Optimal)) => (SolveStatus::Optimal, Some(inc), inc, vals),
        (Some((inc, vals)), Some(s)) => (s, Some(inc), open_min.min(pruned_min).min(inc), vals),
        (None, None) => (SolveStatus::Infeasible, None, f64::INFINITY, Vec::new()),
        (None, Some(s)) => (s, None, open_min.min(pruned_min), Vec::new()),
    };
    Ok(Solution {
        status,
        incumbent: inc.map(external),
        bound: if bound.is_finite() { external(bound) } else { sign * bound },
        values,
        stats,
    })
}
