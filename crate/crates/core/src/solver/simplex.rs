//! Bounded dual simplex on a dense tableau.
//!
//! Every variable, slacks included, is boxed. Any basis can then be made dual
//! feasible by placing each nonbasic variable at the bound matching the sign of
//! its reduced cost, so no phase one is needed and warm starts after bound
//! changes only require dual simplex iterations.

use crate::error::SolverError;
use crate::milp::{MilpModel, ObjectiveSense, Sense, VarKind};

const NONBASIC: usize = usize::MAX;
const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const COST_PERTURBATION: f64 = 1e-7;
const REFRESH_EVERY: usize = 100;
const DEGENERATE_BEFORE_BLAND: usize = 200;

/// Constraint data in computational form: `A x + s = b`, minimize `cost . (x, s)`.
#[derive(Clone, Debug)]
pub(crate) struct LpData {
    pub n: usize,
    pub m: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub b: Vec<f64>,
    pub cost: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub binaries: Vec<usize>,
    /// +1 for minimize/feasibility, -1 for maximize.
    pub obj_sign: f64,
    pub obj_const: f64,
}

impl LpData {
    pub fn from_model(model: &MilpModel) -> Result<LpData, SolverError> {
        model.validate()?;
        let n = model.num_vars();
        let m = model.constraints().len();
        let mut lo: Vec<f64> = model.vars().iter().map(|v| v.lo).collect();
        let mut hi: Vec<f64> = model.vars().iter().map(|v| v.hi).collect();
        let mut rows = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        for c in model.constraints() {
            let row: Vec<(usize, f64)> = c.expr.terms().iter().map(|&(v, a)| (v.index(), a)).collect();
            let (mut amin, mut amax) = (0.0, 0.0);
            for &(j, a) in &row {
                if a > 0.0 {
                    amin += a * lo[j];
                    amax += a * hi[j];
                } else {
                    amin += a * hi[j];
                    amax += a * lo[j];
                }
            }
            // slack s = b - a x
            let (slo, shi) = match c.sense {
                Sense::Le => (0.0, c.rhs - amin),
                Sense::Ge => (c.rhs - amax, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(slo);
            hi.push(shi);
            rows.push(row);
            b.push(c.rhs);
        }
        let (obj, sense) = model.objective();
        let obj_sign = if sense == ObjectiveSense::Maximize { -1.0 } else { 1.0 };
        let mut cost = vec![0.0; n + m];
        if sense != ObjectiveSense::Feasibility {
            for &(v, c) in obj.terms() {
                cost[v.index()] = obj_sign * c;
            }
        }
        let binaries = model
            .vars()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| i)
            .collect();
        Ok(LpData {
            n,
            m,
            rows,
            b,
            cost,
            lo,
            hi,
            binaries,
            obj_sign,
            obj_const: if sense == ObjectiveSense::Feasibility { 0.0 } else { obj.constant_part() },
        })
    }

    /// Largest row residual of a structural assignment, relative to row scale.
    pub fn max_row_residual(&self, x: &[f64], slacks: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            let ax: f64 = row.iter().map(|&(j, a)| a * x[j]).sum();
            let r = (ax + slacks[i] - self.b[i]).abs() / (1.0 + self.b[i].abs());
            worst = worst.max(r);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    IterLimit,
}

#[derive(Clone, Debug)]
pub(crate) struct Tableau {
    m: usize,
    ncols: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    d: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    at_upper: Vec<bool>,
    pub x: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub iterations: u64,
    since_refresh: usize,
    nz: Vec<usize>,
}

impl Tableau {
    /// Slack basis with the given bounds.
    pub fn new(data: &LpData, lo: &[f64], hi: &[f64]) -> Tableau {
        let (m, n) = (data.m, data.n);
        let ncols = n + m;
        let mut t = vec![0.0; m * ncols];
        for (i, row) in data.rows.iter().enumerate() {
            for &(j, a) in row {
                t[i * ncols + j] += a;
            }
            t[i * ncols + n + i] = 1.0;
        }
        let mut tab = Tableau {
            m,
            ncols,
            t,
            beta: data.b.clone(),
            d: data.cost.clone(),
            cost: data.cost.clone(),
            basis: (n..n + m).collect(),
            row_of: (0..ncols).map(|j| if j >= n { j - n } else { NONBASIC }).collect(),
            at_upper: vec![false; ncols],
            x: vec![0.0; ncols],
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            iterations: 0,
            since_refresh: 0,
            nz: Vec::new(),
        };
        tab.reset_nonbasic_to_bounds();
        tab.recompute_basic_values();
        tab
    }

    /// Tableau for a stored basis. Columns that turn out dependent stay nonbasic.
    pub fn from_basis(data: &LpData, lo: &[f64], hi: &[f64], basis: &[usize]) -> Tableau {
        let mut tab = Tableau::new(data, lo, hi);
        let n = data.n;
        let mut wanted = vec![false; tab.ncols];
        for &v in basis {
            wanted[v] = true;
        }
        for &v in basis {
            if tab.row_of[v] != NONBASIC {
                continue;
            }
            let mut best = None;
            let mut best_abs = 1e-7;
            for r in 0..tab.m {
                let bv = tab.basis[r];
                if bv >= n && !wanted[bv] {
                    let a = tab.t[r * tab.ncols + v].abs();
                    if a > best_abs {
                        best_abs = a;
                        best = Some(r);
                    }
                }
            }
            if let Some(r) = best {
                tab.pivot_tableau(r, v);
            }
        }
        tab.recompute_reduced_costs();
        tab.reset_nonbasic_to_bounds();
        tab.recompute_basic_values();
        tab
    }

    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    pub fn size(&self) -> usize {
        self.t.len()
    }

    pub fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    fn reset_nonbasic_to_bounds(&mut self) {
        for j in 0..self.ncols {
            if self.row_of[j] == NONBASIC {
                self.at_upper[j] = self.d[j] < 0.0 && self.lo[j] < self.hi[j];
                self.x[j] = if self.at_upper[j] { self.hi[j] } else { self.lo[j] };
            }
        }
    }

    fn recompute_basic_values(&mut self) {
        for i in 0..self.m {
            let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
            let mut v = self.beta[i];
            for (j, &a) in row.iter().enumerate() {
                if a != 0.0 && self.row_of[j] == NONBASIC {
                    v -= a * self.x[j];
                }
            }
            self.x[self.basis[i]] = v;
        }
        self.since_refresh = 0;
    }

    fn recompute_reduced_costs(&mut self) {
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
                for (dj, &a) in self.d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    /// Change the bounds of one variable, keeping nonbasic variables on a bound
    /// that is dual feasible.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        if self.row_of[j] != NONBASIC {
            return;
        }
        self.at_upper[j] = self.d[j] < 0.0 && lo < hi;
        let new = if self.at_upper[j] { hi } else { lo };
        let delta = new - self.x[j];
        if delta != 0.0 {
            for i in 0..self.m {
                let a = self.t[i * self.ncols + j];
                if a != 0.0 {
                    self.x[self.basis[i]] -= a * delta;
                }
            }
            self.x[j] = new;
        }
    }

    fn pivot_tableau(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let piv = self.t[r * nc + q];
        {
            let row = &mut self.t[r * nc..(r + 1) * nc];
            let inv = 1.0 / piv;
            self.nz.clear();
            for (j, a) in row.iter_mut().enumerate() {
                if *a != 0.0 {
                    *a *= inv;
                    self.nz.push(j);
                }
            }
            row[q] = 1.0;
            self.beta[r] *= inv;
        }
        let (before, rest) = self.t.split_at_mut(r * nc);
        let (prow, after) = rest.split_at_mut(nc);
        let beta_r = self.beta[r];
        let nz = &self.nz;
        let apply = |row: &mut [f64], beta_i: &mut f64| {
            let f = row[q];
            if f != 0.0 {
                for &j in nz {
                    row[j] -= f * prow[j];
                }
                row[q] = 0.0;
                *beta_i -= f * beta_r;
            }
        };
        for (i, row) in before.chunks_mut(nc).enumerate() {
            apply(row, &mut self.beta[i]);
        }
        for (k, row) in after.chunks_mut(nc).enumerate() {
            apply(row, &mut self.beta[r + 1 + k]);
        }
        let f = self.d[q];
        if f != 0.0 {
            for &j in nz {
                self.d[j] -= f * prow[j];
            }
        }
        self.d[q] = 0.0;
        let leaving = self.basis[r];
        self.basis[r] = q;
        self.row_of[q] = r;
        self.row_of[leaving] = NONBASIC;
    }

    fn infeasibility(&self, v: usize) -> f64 {
        let x = self.x[v];
        if x < self.lo[v] - PRIMAL_TOL {
            self.lo[v] - x
        } else if x > self.hi[v] + PRIMAL_TOL {
            x - self.hi[v]
        } else {
            0.0
        }
    }

    fn choose_leaving(&self, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.m {
            let v = self.basis[r];
            let inf = self.infeasibility(v);
            if inf <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((br, bi)) => {
                    let bv = self.basis[br];
                    if bland {
                        v < bv
                    } else {
                        inf > bi || (inf == bi && v < bv)
                    }
                }
            };
            if better {
                best = Some((r, inf));
            }
        }
        best.map(|b| b.0)
    }

    /// Returns the entering column and the dual step length.
    fn ratio_test(&self, r: usize, increase: bool, bland: bool) -> Option<(usize, f64)> {
        let row = &self.t[r * self.ncols..(r + 1) * self.ncols];
        // candidate: (j, |alpha|, ratio numerator |d|)
        let mut cands: Vec<(usize, f64, f64)> = Vec::new();
        for (j, &a) in row.iter().enumerate() {
            if a.abs() <= PIVOT_TOL || self.row_of[j] != NONBASIC || self.lo[j] >= self.hi[j] {
                continue;
            }
            let up = self.at_upper[j];
            // increase: leaving var rises to its lower bound; needs sum(alpha dz) < 0
            let ok = if increase { (!up && a < 0.0) || (up && a > 0.0) } else { (!up && a > 0.0) || (up && a < 0.0) };
            if ok {
                let dj = if up { (-self.d[j]).max(0.0) } else { self.d[j].max(0.0) };
                cands.push((j, a.abs(), dj));
            }
        }
        if cands.is_empty() {
            return None;
        }
        if bland {
            let mut best = cands[0];
            for &c in &cands[1..] {
                let (rc, rb) = (c.2 / c.1, best.2 / best.1);
                if rc < rb || (rc == rb && c.0 < best.0) {
                    best = c;
                }
            }
            return Some((best.0, best.2 / best.1));
        }
        let theta_max = cands
            .iter()
            .map(|&(_, a, dj)| (dj + DUAL_TOL) / a)
            .fold(f64::INFINITY, f64::min);
        let mut best: Option<(usize, f64, f64)> = None;
        for &c in &cands {
            if c.2 / c.1 <= theta_max {
                let better = match best {
                    None => true,
                    Some(b) => c.1 > b.1 || (c.1 == b.1 && c.0 < b.0),
                };
                if better {
                    best = Some(c);
                }
            }
        }
        best.map(|b| (b.0, b.2 / b.1))
    }

    /// Dual simplex to optimality. Costs are first perturbed so that zero
    /// reduced costs do not stall the dual; the true costs are then restored
    /// and the solve finishes from the perturbed optimal basis.
    pub fn solve(&mut self, max_iter: u64) -> LpStatus {
        if self.lo.iter().zip(&self.hi).any(|(l, h)| l > &(h + PRIMAL_TOL)) {
            return LpStatus::Infeasible;
        }
        let mut iters = 0u64;
        let original = self.cost.clone();
        self.reset_nonbasic_to_bounds();
        self.recompute_basic_values();
        self.perturb_costs();
        let status = self.dual_iterations(max_iter, &mut iters);
        self.cost = original;
        self.recompute_reduced_costs();
        self.recompute_basic_values();
        status
    }

    /// Lower bound on the true LP optimum from the current basis: the
    /// objective with every nonbasic variable moved to its best bound.
    /// Equals `objective()` when the basis is optimal for the true costs.
    pub fn dual_bound(&self) -> f64 {
        let mut loss = 0.0;
        for j in 0..self.ncols {
            if self.row_of[j] != NONBASIC {
                continue;
            }
            let dj = self.d[j];
            let best = (dj * self.lo[j]).min(dj * self.hi[j]);
            loss += (dj * self.x[j] - best).max(0.0);
        }
        self.objective() - loss
    }

    fn perturb_costs(&mut self) {
        for j in 0..self.ncols {
            if self.row_of[j] != NONBASIC || self.lo[j] >= self.hi[j] {
                continue;
            }
            // deterministic spread in [1, 2) so ties between columns break
            let spread = 1.0 + (j as f64 * 0.618_033_988_749_895).fract();
            let delta = COST_PERTURBATION * spread * (1.0 + self.cost[j].abs());
            let signed = if self.at_upper[j] { -delta } else { delta };
            self.cost[j] += signed;
            self.d[j] += signed;
        }
    }

    fn dual_iterations(&mut self, max_iter: u64, iters: &mut u64) -> LpStatus {
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            let r = match self.choose_leaving(bland) {
                Some(r) => r,
                None => {
                    if self.since_refresh == 0 {
                        return LpStatus::Optimal;
                    }
                    self.recompute_basic_values();
                    match self.choose_leaving(bland) {
                        Some(r) => r,
                        None => return LpStatus::Optimal,
                    }
                }
            };
            if *iters >= max_iter {
                return LpStatus::IterLimit;
            }
            let leaving = self.basis[r];
            let increase = self.x[leaving] < self.lo[leaving];
            let target = if increase { self.lo[leaving] } else { self.hi[leaving] };
            let (q, step) = match self.ratio_test(r, increase, bland) {
                Some(c) => c,
                None => return LpStatus::Infeasible,
            };
            if step <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_BEFORE_BLAND {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, q, target);
            *iters += 1;
            self.iterations += 1;
            self.since_refresh += 1;
            if self.since_refresh >= REFRESH_EVERY {
                self.recompute_basic_values();
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize, target: f64) {
        let nc = self.ncols;
        let alpha = self.t[r * nc + q];
        let leaving = self.basis[r];
        let delta = (self.x[leaving] - target) / alpha;
        if delta != 0.0 {
            for i in 0..self.m {
                let a = self.t[i * nc + q];
                if a != 0.0 {
                    self.x[self.basis[i]] -= a * delta;
                }
            }
            self.x[q] += delta;
        }
        self.x[leaving] = target;
        self.pivot_tableau(r, q);
        self.at_upper[leaving] = target == self.hi[leaving] && self.lo[leaving] < self.hi[leaving];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{LinExpr, MilpModel};

    fn solve(model: &MilpModel) -> (LpStatus, Tableau, LpData) {
        let data = LpData::from_model(model).unwrap();
        let mut t = Tableau::new(&data, &data.lo, &data.hi);
        let s = t.solve(10_000);
        (s, t, data)
    }

    #[test]
    fn small_lp_optimum() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6, x,y in [0,10] -> (1.6, 1.2), obj 2.8
        let mut m = MilpModel::new();
        let x = m.add_var(0.0, 10.0);
        let y = m.add_var(0.0, 10.0);
        m.add_constraint(LinExpr::from(x) + LinExpr::term(y, 2.0), Sense::Le, 4.0).unwrap();
        m.add_constraint(LinExpr::term(x, 3.0) + LinExpr::from(y), Sense::Le, 6.0).unwrap();
        m.set_objective(LinExpr::from(x) + LinExpr::from(y), ObjectiveSense::Maximize).unwrap();
        let (s, t, _) = solve(&m);
        assert_eq!(s, LpStatus::Optimal);
        assert!((t.x[0] - 1.6).abs() < 1e-9 && (t.x[1] - 1.2).abs() < 1e-9);
        assert!((-t.objective() - 2.8).abs() < 1e-9);
    }

    #[test]
    fn infeasible_lp() {
        let mut m = MilpModel::new();
        let x = m.add_var(0.0, 1.0);
        m.add_constraint(LinExpr::from(x), Sense::Ge, 2.0).unwrap();
        let (s, _, _) = solve(&m);
        assert_eq!(s, LpStatus::Infeasible);
    }

    #[test]
    fn warm_start_after_bound_change() {
        let mut m = MilpModel::new();
        let x = m.add_var(0.0, 4.0);
        let y = m.add_var(0.0, 4.0);
        m.add_constraint(LinExpr::from(x) + LinExpr::from(y), Sense::Ge, 3.0).unwrap();
        m.set_objective(LinExpr::term(x, 2.0) + LinExpr::from(y), ObjectiveSense::Minimize).unwrap();
        let (s, mut t, data) = solve(&m);
        assert_eq!(s, LpStatus::Optimal);
        assert!((t.objective() - 3.0).abs() < 1e-9);
        t.set_bounds(1, 0.0, 1.0);
        assert_eq!(t.solve(100), LpStatus::Optimal);
        assert!((t.objective() - 5.0).abs() < 1e-9);
        let mut lo = data.lo.clone();
        let mut hi = data.hi.clone();
        lo[1] = 0.0;
        hi[1] = 1.0;
        let mut rebuilt = Tableau::from_basis(&data, &lo, &hi, &t.basis().to_vec());
        assert_eq!(rebuilt.solve(100), LpStatus::Optimal);
        assert!((rebuilt.objective() - 5.0).abs() < 1e-9);
    }
}
