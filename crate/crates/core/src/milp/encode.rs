//! Big-M encodings of piecewise-linear primitives and set-membership constraints.
//!
//! All big-M constants come from the bounds handed to each encoder; there is no
//! global fallback constant.

use crate::error::ModelError;
use crate::geometry::{Interval, NormBall, Norm, Polytope};

use super::model::{LinExpr, MilpModel, Sense, VarId};

fn check_bounds(b: Interval, what: &str) -> Result<(), ModelError> {
    if !b.is_finite() {
        return Err(ModelError::Encoding(format!("{what} has unbounded interval {b}")));
    }
    if b.lo > b.hi {
        return Err(ModelError::Encoding(format!("{what} has empty interval {b}")));
    }
    Ok(())
}

/// `max(x, 0)` for an affine expression with bounds `[l, u]`.
///
/// Stable cases short-circuit: `l >= 0` returns `x`, `u <= 0` returns the constant 0.
pub fn relu_expr(model: &mut MilpModel, x: &LinExpr, b: Interval) -> Result<LinExpr, ModelError> {
    check_bounds(b, "relu input")?;
    if b.lo >= 0.0 {
        return Ok(x.clone());
    }
    if b.hi <= 0.0 {
        return Ok(LinExpr::constant(0.0));
    }
    let t = model.add_var(0.0, b.hi);
    let delta = model.add_binary();
    let tx = LinExpr::from(t);
    // t >= x
    model.add_ge(tx.clone(), x.clone())?;
    // t <= u * delta
    model.add_le(tx.clone(), LinExpr::term(delta, b.hi))?;
    // t <= x - l (1 - delta)
    let mut rhs = x.clone();
    rhs.add_constant(-b.lo);
    rhs.add_term(delta, b.lo);
    model.add_le(tx, rhs)?;
    Ok(LinExpr::from(t))
}

/// `t = max(x, 0)`. Returns `x` itself when the neuron is always active.
pub fn add_relu(model: &mut MilpModel, x: VarId, bounds: Interval) -> Result<VarId, ModelError> {
    let e = relu_expr(model, &LinExpr::from(x), bounds)?;
    Ok(match e.as_var() {
        Some(v) => v,
        None => {
            // dead neuron: a variable pinned at zero
            model.add_var(0.0, 0.0)
        }
    })
}

/// `max_i x_i` over affine expressions. Inputs whose upper bound lies below the
/// largest lower bound can never attain the maximum and are dropped.
pub fn max_expr(model: &mut MilpModel, xs: &[LinExpr], bounds: &[Interval]) -> Result<LinExpr, ModelError> {
    if xs.is_empty() {
        return Err(ModelError::Encoding("max over an empty input list".into()));
    }
    if xs.len() != bounds.len() {
        return Err(ModelError::Encoding(format!(
            "max has {} inputs but {} bounds",
            xs.len(),
            bounds.len()
        )));
    }
    for b in bounds {
        check_bounds(*b, "max input")?;
    }
    let l_max = bounds.iter().map(|b| b.lo).fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = (0..xs.len()).filter(|&i| bounds[i].hi >= l_max).collect();
    if keep.len() == 1 {
        return Ok(xs[keep[0]].clone());
    }
    let u_all = keep.iter().map(|&i| bounds[i].hi).fold(f64::NEG_INFINITY, f64::max);
    let t = model.add_var(l_max, u_all);
    let mut select = LinExpr::new();
    for &i in &keep {
        let u_other = keep
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| bounds[j].hi)
            .fold(f64::NEG_INFINITY, f64::max);
        let big_m = (u_other - bounds[i].lo).max(0.0);
        let delta = model.add_binary();
        select.add_term(delta, 1.0);
        // x_i <= t
        model.add_le(xs[i].clone(), LinExpr::from(t))?;
        // t <= x_i + M (1 - delta)
        let mut rhs = xs[i].clone();
        rhs.add_constant(big_m);
        rhs.add_term(delta, -big_m);
        model.add_le(LinExpr::from(t), rhs)?;
    }
    model.add_constraint(select, Sense::Eq, 1.0)?;
    Ok(LinExpr::from(t))
}

fn to_exprs(xs: &[VarId]) -> Vec<LinExpr> {
    xs.iter().map(|&v| LinExpr::from(v)).collect()
}

fn expr_to_var(model: &mut MilpModel, e: LinExpr, b: Interval) -> Result<VarId, ModelError> {
    if let Some(v) = e.as_var() {
        return Ok(v);
    }
    let v = model.add_var(b.lo, b.hi);
    model.add_eq(LinExpr::from(v), e)?;
    Ok(v)
}

/// `t = max_i x_i`.
pub fn add_max(model: &mut MilpModel, xs: &[VarId], bounds: &[Interval]) -> Result<VarId, ModelError> {
    let e = max_expr(model, &to_exprs(xs), bounds)?;
    let b = e.range(model);
    expr_to_var(model, e, b)
}

/// `min_i x_i = -max_i(-x_i)`.
pub fn min_expr(model: &mut MilpModel, xs: &[LinExpr], bounds: &[Interval]) -> Result<LinExpr, ModelError> {
    let neg: Vec<LinExpr> = xs.iter().map(|e| e.scaled(-1.0)).collect();
    let nb: Vec<Interval> = bounds.iter().map(|b| b.scale(-1.0)).collect();
    Ok(max_expr(model, &neg, &nb)?.scaled(-1.0))
}

/// `t = min_i x_i`.
pub fn add_min(model: &mut MilpModel, xs: &[VarId], bounds: &[Interval]) -> Result<VarId, ModelError> {
    let e = min_expr(model, &to_exprs(xs), bounds)?;
    let b = e.range(model);
    expr_to_var(model, e, b)
}

/// `||x - center||_p <= eps` for `p` in {1, inf}.
pub fn add_norm_le(
    model: &mut MilpModel,
    x: &[VarId],
    center: &[f64],
    eps: VarId,
    p: Norm,
) -> Result<(), ModelError> {
    p.ensure_linear()?;
    if x.len() != center.len() {
        return Err(ModelError::Encoding(format!(
            "norm constraint over {} variables with a {}-dimensional center",
            x.len(),
            center.len()
        )));
    }
    match p {
        Norm::LInf => {
            for (&xi, &ci) in x.iter().zip(center) {
                // x_i - c_i <= eps and x_i - c_i >= -eps
                model.add_constraint(LinExpr::from(xi) - LinExpr::from(eps), Sense::Le, ci)?;
                model.add_constraint(LinExpr::from(xi) + LinExpr::from(eps), Sense::Ge, ci)?;
            }
        }
        Norm::L1 => {
            let mut total = LinExpr::new();
            for (&xi, &ci) in x.iter().zip(center) {
                let b = model.bounds(xi);
                check_bounds(b, "norm argument")?;
                let zmax = (b.lo - ci).abs().max((b.hi - ci).abs());
                let z = model.add_var(0.0, zmax);
                model.add_constraint(LinExpr::from(z) - LinExpr::from(xi), Sense::Ge, -ci)?;
                model.add_constraint(LinExpr::from(z) + LinExpr::from(xi), Sense::Ge, ci)?;
                total.add_term(z, 1.0);
            }
            total.add_term(eps, -1.0);
            model.add_constraint(total, Sense::Le, 0.0)?;
        }
        Norm::L2 => unreachable!(),
    }
    Ok(())
}

/// `x` outside the interior of `{A x <= b}`, as `max_i(a_i x - b_i) >= 0`.
///
/// Boundary points stay feasible. One binary per row that survives pruning.
pub fn add_not_in_interior(
    model: &mut MilpModel,
    x: &[VarId],
    s: &Polytope,
    bounds: &[Interval],
) -> Result<(), ModelError> {
    s.validate()?;
    if s.dim() != x.len() || bounds.len() != x.len() {
        return Err(ModelError::Encoding(format!(
            "polytope of dimension {} applied to {} variables with {} bounds",
            s.dim(),
            x.len(),
            bounds.len()
        )));
    }
    for b in bounds {
        check_bounds(*b, "complement argument")?;
    }
    let mut exprs = Vec::with_capacity(s.rows());
    let mut ranges = Vec::with_capacity(s.rows());
    for (row, &bi) in s.a.iter().zip(&s.b) {
        let mut e = LinExpr::constant(-bi);
        let mut r = Interval::point(-bi);
        for ((&xi, &aij), bj) in x.iter().zip(row).zip(bounds) {
            e.add_term(xi, aij);
            r = r.add(&bj.scale(aij));
        }
        exprs.push(e);
        ranges.push(r);
    }
    let t = max_expr(model, &exprs, &ranges)?;
    model.add_constraint(t, Sense::Ge, 0.0)?;
    Ok(())
}

/// `x` outside the interior of a 1- or inf-norm ball.
pub fn add_not_in_ball(
    model: &mut MilpModel,
    x: &[VarId],
    ball: &NormBall,
    bounds: &[Interval],
) -> Result<(), ModelError> {
    let p = ball.to_polytope()?;
    add_not_in_interior(model, x, &p, bounds)
}
