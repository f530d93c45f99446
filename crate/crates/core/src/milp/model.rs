use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::ModelError;
use crate::geometry::Interval;

/// Handle into a model's variable table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Affine expression `sum c_i v_i + constant`, kept sorted by variable with merged terms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    terms: Vec<(VarId, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn term(v: VarId, c: f64) -> Self {
        let mut e = LinExpr::new();
        e.add_term(v, c);
        e
    }

    pub fn terms(&self) -> &[(VarId, f64)] {
        &self.terms
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    pub fn add_term(&mut self, v: VarId, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.binary_search_by_key(&v, |t| t.0) {
            Ok(i) => {
                self.terms[i].1 += c;
                if self.terms[i].1 == 0.0 {
                    self.terms.remove(i);
                }
            }
            Err(i) => self.terms.insert(i, (v, c)),
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, s: f64) {
        for &(v, c) in &other.terms {
            self.add_term(v, s * c);
        }
        self.constant += s * other.constant;
    }

    pub fn scaled(&self, s: f64) -> LinExpr {
        let mut e = LinExpr::new();
        e.add_scaled(self, s);
        e
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// The variable itself if this expression is exactly `1 * v`.
    pub fn as_var(&self) -> Option<VarId> {
        match self.terms.as_slice() {
            [(v, c)] if *c == 1.0 && self.constant == 0.0 => Some(*v),
            _ => None,
        }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>()
    }

    /// Interval of the expression over the model's variable bounds.
    pub fn range(&self, model: &MilpModel) -> Interval {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for &(v, c) in &self.terms {
            let b = model.bounds(v);
            let s = b.scale(c);
            lo += s.lo;
            hi += s.hi;
        }
        Interval::new(lo, hi)
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl AddAssign<&LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: &LinExpr) {
        self.add_scaled(rhs, 1.0);
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, s: f64) -> LinExpr {
        self.scaled(s)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// `expr sense rhs`, stored with the expression constant folded into `rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.expr.eval(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub lo: f64,
    pub hi: f64,
    pub kind: VarKind,
    pub name: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
    Feasibility,
}

/// A mixed-integer linear program under construction.
#[derive(Clone, Debug)]
pub struct MilpModel {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: LinExpr,
    sense: ObjectiveSense,
}

impl Default for MilpModel {
    fn default() -> Self {
        Self::new()
    }
}

impl MilpModel {
    pub fn new() -> Self {
        MilpModel {
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: LinExpr::new(),
            sense: ObjectiveSense::Feasibility,
        }
    }

    pub fn add_var(&mut self, lo: f64, hi: f64) -> VarId {
        self.vars.push(Variable { lo, hi, kind: VarKind::Continuous, name: None });
        VarId(self.vars.len() - 1)
    }

    pub fn add_named_var(&mut self, name: &str, lo: f64, hi: f64) -> VarId {
        let v = self.add_var(lo, hi);
        self.vars[v.0].name = Some(name.to_string());
        v
    }

    pub fn add_binary(&mut self) -> VarId {
        self.vars.push(Variable { lo: 0.0, hi: 1.0, kind: VarKind::Binary, name: None });
        VarId(self.vars.len() - 1)
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn binary_vars(&self) -> Vec<VarId> {
        (0..self.vars.len()).filter(|&i| self.vars[i].kind == VarKind::Binary).map(VarId).collect()
    }

    pub fn bounds(&self, v: VarId) -> Interval {
        let var = &self.vars[v.0];
        Interval::new(var.lo, var.hi)
    }

    pub fn set_bounds(&mut self, v: VarId, lo: f64, hi: f64) -> Result<(), ModelError> {
        self.check_var(v)?;
        self.vars[v.0].lo = lo;
        self.vars[v.0].hi = hi;
        Ok(())
    }

    pub fn set_name(&mut self, v: VarId, name: &str) {
        self.vars[v.0].name = Some(name.to_string());
    }

    fn check_var(&self, v: VarId) -> Result<(), ModelError> {
        if v.0 >= self.vars.len() {
            Err(ModelError::DanglingVar(v.0))
        } else {
            Ok(())
        }
    }

    fn check_expr(&self, e: &LinExpr) -> Result<(), ModelError> {
        for &(v, c) in e.terms() {
            self.check_var(v)?;
            if !c.is_finite() {
                return Err(ModelError::NonFinite(format!("coefficient of variable {}", v.0)));
            }
        }
        if !e.constant_part().is_finite() {
            return Err(ModelError::NonFinite("expression constant".into()));
        }
        Ok(())
    }

    pub fn add_constraint(&mut self, expr: LinExpr, sense: Sense, rhs: f64) -> Result<usize, ModelError> {
        self.check_expr(&expr)?;
        if !rhs.is_finite() {
            return Err(ModelError::NonFinite("constraint right-hand side".into()));
        }
        let mut expr = expr;
        let rhs = rhs - expr.constant_part();
        expr.constant = 0.0;
        self.constraints.push(Constraint { expr, sense, rhs });
        Ok(self.constraints.len() - 1)
    }

    pub fn add_le(&mut self, lhs: LinExpr, rhs: LinExpr) -> Result<usize, ModelError> {
        self.add_constraint(lhs - rhs, Sense::Le, 0.0)
    }

    pub fn add_ge(&mut self, lhs: LinExpr, rhs: LinExpr) -> Result<usize, ModelError> {
        self.add_constraint(lhs - rhs, Sense::Ge, 0.0)
    }

    pub fn add_eq(&mut self, lhs: LinExpr, rhs: LinExpr) -> Result<usize, ModelError> {
        self.add_constraint(lhs - rhs, Sense::Eq, 0.0)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn set_objective(&mut self, expr: LinExpr, sense: ObjectiveSense) -> Result<(), ModelError> {
        self.check_expr(&expr)?;
        self.objective = expr;
        self.sense = sense;
        Ok(())
    }

    pub fn objective(&self) -> (&LinExpr, ObjectiveSense) {
        (&self.objective, self.sense)
    }

    /// Every variable must carry finite bounds with `lo <= hi`.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, v) in self.vars.iter().enumerate() {
            if !v.lo.is_finite() || !v.hi.is_finite() {
                return Err(ModelError::UnboundedVar { index: i, lo: v.lo, hi: v.hi });
            }
        }
        Ok(())
    }

    /// Largest constraint or bound violation of a full assignment.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, x) in self.vars.iter().zip(values) {
            worst = worst.max(v.lo - x).max(x - v.hi);
            if v.kind == VarKind::Binary {
                worst = worst.max((x - x.round()).abs());
            }
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(values));
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expr_terms_merge_and_cancel() {
        let mut m = MilpModel::new();
        let x = m.add_var(0.0, 1.0);
        let y = m.add_var(0.0, 1.0);
        let e = LinExpr::from(x) + LinExpr::term(y, 2.0) - LinExpr::from(x);
        assert_eq!(e.terms(), &[(y, 2.0)]);
        let r = (LinExpr::term(x, -1.0) + LinExpr::constant(3.0)).range(&m);
        assert_eq!((r.lo, r.hi), (2.0, 3.0));
    }

    #[test]
    fn dangling_var_rejected() {
        let mut m = MilpModel::new();
        let mut other = MilpModel::new();
        other.add_var(0.0, 1.0);
        let v = other.add_var(0.0, 1.0);
        assert_eq!(
            m.add_constraint(LinExpr::from(v), Sense::Le, 1.0),
            Err(ModelError::DanglingVar(1))
        );
    }

    #[test]
    fn constant_folds_into_rhs() {
        let mut m = MilpModel::new();
        let x = m.add_var(0.0, 1.0);
        m.add_constraint(LinExpr::from(x) + LinExpr::constant(2.0), Sense::Le, 3.0).unwrap();
        assert_eq!(m.constraints()[0].rhs, 1.0);
        assert_eq!(m.constraints()[0].expr.constant_part(), 0.0);
    }

    #[test]
    fn validate_requires_finite_bounds() {
        let mut m = MilpModel::new();
        m.add_var(0.0, f64::INFINITY);
        assert!(matches!(m.validate(), Err(ModelError::UnboundedVar { index: 0, .. })));
    }
}
