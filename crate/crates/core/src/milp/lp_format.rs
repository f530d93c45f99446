//! CPLEX-LP text export.
//!
//! Keywords emitted: `Minimize`/`Maximize`, `Subject To`, `Bounds`, `Binaries`, `End`.
//! A pure feasibility model is written as `Minimize` with a zero objective.

use std::fmt::Write;

use super::model::{LinExpr, MilpModel, ObjectiveSense, Sense, VarKind};

/// LP-file name of every variable, indexed by `VarId::index`.
pub fn var_names(model: &MilpModel) -> Vec<String> {
    model
        .vars()
        .iter()
        .enumerate()
        .map(|(i, v)| match &v.name {
            Some(n) => {
                let clean: String = n
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
                    .collect();
                format!("{clean}_{i}")
            }
            None => format!("x{i}"),
        })
        .collect()
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "+infinity".into()
    } else if v == f64::NEG_INFINITY {
        "-infinity".into()
    } else {
        format!("{v}")
    }
}

fn write_expr(out: &mut String, e: &LinExpr, names: &[String]) {
    if e.terms().is_empty() {
        // LP syntax needs at least one term
        let _ = write!(out, " 0 {}", names.first().map_or("x0", String::as_str));
        return;
    }
    for (k, &(v, c)) in e.terms().iter().enumerate() {
        if k > 0 && k % 8 == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        if k == 0 && c >= 0.0 {
            let _ = write!(out, " {} {}", num(c), names[v.index()]);
        } else {
            let _ = write!(out, " {sign} {} {}", num(c.abs()), names[v.index()]);
        }
    }
}

pub fn write_lp(model: &MilpModel) -> String {
    let names = var_names(model);
    let mut out = String::new();
    out.push_str("\\ written by nfl-reach\n");
    let (obj, sense) = model.objective();
    let zero = LinExpr::new();
    let (kw, obj) = match sense {
        ObjectiveSense::Minimize => ("Minimize", obj),
        ObjectiveSense::Maximize => ("Maximize", obj),
        ObjectiveSense::Feasibility => ("Minimize", &zero),
    };
    if obj.constant_part() != 0.0 {
        let _ = writeln!(out, "\\ objective constant: {}", num(obj.constant_part()));
    }
    let _ = writeln!(out, "{kw}");
    out.push_str(" obj:");
    write_expr(&mut out, obj, &names);
    out.push_str("\nSubject To\n");
    for (i, c) in model.constraints().iter().enumerate() {
        let _ = write!(out, " c{i}:");
        write_expr(&mut out, &c.expr, &names);
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", num(c.rhs));
    }
    out.push_str("Bounds\n");
    for (v, name) in model.vars().iter().zip(&names) {
        if v.kind == VarKind::Binary && v.lo == 0.0 && v.hi == 1.0 {
            continue;
        }
        if v.lo == v.hi {
            let _ = writeln!(out, " {name} = {}", num(v.lo));
        } else {
            let _ = writeln!(out, " {} <= {name} <= {}", num(v.lo), num(v.hi));
        }
    }
    let bins: Vec<&String> = model
        .vars()
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.kind == VarKind::Binary)
        .map(|(_, n)| n)
        .collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for chunk in bins.chunks(8) {
            let line: Vec<&str> = chunk.iter().map(|s| s.as_str()).collect();
            let _ = writeln!(out, " {}", line.join(" "));
        }
    }
    out.push_str("End\n");
    out
}
