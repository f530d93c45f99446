use nfl_reach::geometry::{Interval, NormBall, Norm, Polytope};
use nfl_reach::milp::{
    add_max, add_norm_le, add_not_in_interior, add_relu, LinExpr, MilpModel, ObjectiveSense, Sense, VarId,
};
use nfl_reach::solver::{check_feasible, solve, Feasibility, SolveOptions, SolveStatus};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum of `c·(x,y)` over `{lo ≤ (x,y) ≤ hi, rows}` by enumerating vertices.
/// Rows are `(a, b)` meaning `a·(x,y) ≤ b`.
fn lp2_vertex_min(c: [f64; 2], lo: [f64; 2], hi: [f64; 2], rows: &[([f64; 2], f64)]) -> Option<f64> {
    let mut lines: Vec<([f64; 2], f64)> = rows.to_vec();
    lines.push(([1.0, 0.0], lo[0]));
    lines.push(([1.0, 0.0], hi[0]));
    lines.push(([0.0, 1.0], lo[1]));
    lines.push(([0.0, 1.0], hi[1]));
    let feasible = |p: [f64; 2]| {
        (0..2).all(|i| p[i] >= lo[i] - 1e-9 && p[i] <= hi[i] + 1e-9)
            && rows.iter().all(|(a, b)| a[0] * p[0] + a[1] * p[1] <= b + 1e-9)
    };
    let mut best: Option<f64> = None;
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (a, b) = lines[i];
            let (c2, d) = lines[j];
            let det = a[0] * c2[1] - a[1] * c2[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let p = [(b * c2[1] - a[1] * d) / det, (a[0] * d - b * c2[0]) / det];
            if feasible(p) {
                let v = c[0] * p[0] + c[1] * p[1];
                best = Some(best.map_or(v, |bv: f64| bv.min(v)));
            }
        }
    }
    best
}

struct RandomMilp {
    model: MilpModel,
    obj_c: [f64; 2],
    obj_b: Vec<f64>,
    rows: Vec<(Vec<f64>, [f64; 2], f64)>,
    lo: [f64; 2],
    hi: [f64; 2],
}

fn random_milp(seed: u64) -> RandomMilp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.random_range(1..=8usize);
    let m = rng.random_range(1..=6usize);
    let lo = [rng.random_range(-3.0..0.0), rng.random_range(-3.0..0.0)];
    let hi = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
    let mut model = MilpModel::new();
    let xs = [model.add_var(lo[0], hi[0]), model.add_var(lo[1], hi[1])];
    let bs: Vec<VarId> = (0..nb).map(|_| model.add_binary()).collect();
    let anchor_x = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
    let anchor_b: Vec<f64> = (0..nb).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let anchored = rng.random_bool(0.8);
    let mut rows = Vec::new();
    for _ in 0..m {
        let a = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let ab: Vec<f64> = (0..nb).map(|_| rng.random_range(-3.0..3.0)).collect();
        let lhs_anchor = a[0] * anchor_x[0] + a[1] * anchor_x[1] + ab.iter().zip(&anchor_b).map(|(c, v)| c * v).sum::<f64>();
        let rhs = if anchored { lhs_anchor + rng.random_range(0.0..1.0) } else { rng.random_range(-4.0..2.0) };
        let mut e = LinExpr::term(xs[0], a[0]) + LinExpr::term(xs[1], a[1]);
        for (k, &b) in bs.iter().enumerate() {
            e.add_term(b, ab[k]);
        }
        model.add_constraint(e, Sense::Le, rhs).unwrap();
        rows.push((ab, a, rhs));
    }
    let obj_c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let obj_b: Vec<f64> = (0..nb).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut obj = LinExpr::term(xs[0], obj_c[0]) + LinExpr::term(xs[1], obj_c[1]);
    for (k, &b) in bs.iter().enumerate() {
        obj.add_term(b, obj_b[k]);
    }
    model.set_objective(obj, ObjectiveSense::Minimize).unwrap();
    RandomMilp { model, obj_c, obj_b, rows, lo, hi }
}

fn enumerate_optimum(p: &RandomMilp) -> Option<f64> {
    let nb = p.obj_b.len();
    let mut best: Option<f64> = None;
    for mask in 0..(1u32 << nb) {
        let bv: Vec<f64> = (0..nb).map(|k| ((mask >> k) & 1) as f64).collect();
        let rows: Vec<([f64; 2], f64)> = p
            .rows
            .iter()
            .map(|(ab, a, rhs)| (*a, rhs - ab.iter().zip(&bv).map(|(c, v)| c * v).sum::<f64>()))
            .collect();
        if let Some(v) = lp2_vertex_min(p.obj_c, p.lo, p.hi, &rows) {
            let total = v + p.obj_b.iter().zip(&bv).map(|(c, v)| c * v).sum::<f64>();
            best = Some(best.map_or(total, |b: f64| b.min(total)));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn branch_and_bound_matches_enumeration(seed in any::<u64>()) {
        let p = random_milp(seed);
        let opts = SolveOptions::default();
        let sol = solve(&p.model, &opts).unwrap();
        match enumerate_optimum(&p) {
            None => prop_assert_eq!(sol.status, SolveStatus::Infeasible),
            Some(opt) => {
                prop_assert_eq!(sol.status, SolveStatus::Optimal);
                prop_assert!((sol.incumbent.unwrap() - opt).abs() < 1e-6, "{} vs {}", sol.incumbent.unwrap(), opt);
                prop_assert!(sol.bound <= opt + 1e-6);
                prop_assert!(p.model.max_violation(&sol.values) <= 1e-7);
                let limited = solve(&p.model, &SolveOptions { node_limit: Some(2), ..opts }).unwrap();
                prop_assert!(limited.bound <= opt + 1e-6, "truncated bound {} above optimum {}", limited.bound, opt);
            }
        }
    }

    #[test]
    fn solve_is_deterministic(seed in any::<u64>()) {
        let p = random_milp(seed);
        let a = solve(&p.model, &SolveOptions::default()).unwrap();
        let b = solve(&p.model, &SolveOptions::default()).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.incumbent.map(f64::to_bits), b.incumbent.map(f64::to_bits));
        prop_assert_eq!(a.bound.to_bits(), b.bound.to_bits());
        prop_assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!((a.stats.nodes, a.stats.lp_iterations), (b.stats.nodes, b.stats.lp_iterations));
    }

    #[test]
    fn feasible_witnesses_satisfy_constraints(seed in any::<u64>()) {
        let p = random_milp(seed);
        if let Feasibility::Feasible(w) = check_feasible(&p.model, &SolveOptions::default()).unwrap() {
            prop_assert!(p.model.max_violation(&w) <= 1e-7);
        }
    }

    /// With the binary fixed, the range of `t` at fixed `x` is exactly `max(x, 0)`
    /// for the consistent branch and empty otherwise.
    #[test]
    fn relu_branches_project_to_graph(l in -5.0..-0.01f64, u in 0.01..5.0f64, s in 0.0..1.0f64) {
        let x0 = l + s * (u - l);
        let mut union = Vec::new();
        for delta in [0.0, 1.0] {
            let mut m = MilpModel::new();
            let x = m.add_var(l, u);
            let t = add_relu(&mut m, x, Interval::new(l, u)).unwrap();
            prop_assert_eq!(m.num_binaries(), 1);
            let d = m.binary_vars()[0];
            m.set_bounds(d, delta, delta).unwrap();
            m.set_bounds(x, x0, x0).unwrap();
            let mut lo_m = m.clone();
            lo_m.set_objective(LinExpr::from(t), ObjectiveSense::Minimize).unwrap();
            let mut hi_m = m;
            hi_m.set_objective(LinExpr::from(t), ObjectiveSense::Maximize).unwrap();
            let a = solve(&lo_m, &SolveOptions::default()).unwrap();
            let b = solve(&hi_m, &SolveOptions::default()).unwrap();
            if a.status == SolveStatus::Optimal {
                prop_assert!((a.incumbent.unwrap() - b.incumbent.unwrap()).abs() < 1e-7);
                union.push(a.incumbent.unwrap());
            } else {
                prop_assert_eq!(a.status, SolveStatus::Infeasible);
            }
        }
        prop_assert!(!union.is_empty());
        for v in union {
            prop_assert!((v - x0.max(0.0)).abs() < 1e-7);
        }
    }

    #[test]
    fn max_projection_is_the_graph(
        b in prop::collection::vec((-3.0..1.0f64, 0.1..3.0f64), 2..5),
        s in prop::collection::vec(0.0..1.0f64, 5),
    ) {
        let bounds: Vec<Interval> = b.iter().map(|&(l, w)| Interval::new(l, l + w)).collect();
        let point: Vec<f64> = bounds.iter().zip(&s).map(|(iv, s)| iv.lo + s * iv.width()).collect();
        let truth = point.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut m = MilpModel::new();
        let xs: Vec<VarId> = bounds.iter().map(|iv| m.add_var(iv.lo, iv.hi)).collect();
        let t = add_max(&mut m, &xs, &bounds).unwrap();
        for (x, v) in xs.iter().zip(&point) {
            m.set_bounds(*x, *v, *v).unwrap();
        }
        for sense in [ObjectiveSense::Minimize, ObjectiveSense::Maximize] {
            let mut mm = m.clone();
            mm.set_objective(LinExpr::from(t), sense).unwrap();
            let sol = solve(&mm, &SolveOptions::default()).unwrap();
            prop_assert_eq!(sol.status, SolveStatus::Optimal);
            prop_assert!((sol.incumbent.unwrap() - truth).abs() < 1e-9 + 1e-7);
        }
    }
}

#[test]
fn not_in_interior_agrees_with_direct_evaluation_on_grid() {
    let p = Polytope::new(
        vec![vec![1.0, 0.5], vec![-1.0, 0.2], vec![0.0, -1.0], vec![0.3, 1.0]],
        vec![1.0, 0.8, 0.6, 0.9],
    )
    .unwrap();
    let bounds = [Interval::new(-2.0, 2.0), Interval::new(-2.0, 2.0)];
    let mut base = MilpModel::new();
    let xs = [base.add_var(-2.0, 2.0), base.add_var(-2.0, 2.0)];
    add_not_in_interior(&mut base, &xs, &p, &bounds).unwrap();
    assert_eq!(base.num_binaries(), 4);
    let n = 100;
    let mut mismatches = 0;
    for i in 0..n {
        for j in 0..n {
            let pt = [-2.0 + 4.0 * (i as f64 + 0.5) / n as f64, -2.0 + 4.0 * (j as f64 + 0.5) / n as f64];
            let direct = p.a.iter().zip(&p.b).map(|(a, b)| a[0] * pt[0] + a[1] * pt[1] - b).fold(f64::NEG_INFINITY, f64::max) >= 0.0;
            let mut m = base.clone();
            m.set_bounds(xs[0], pt[0], pt[0]).unwrap();
            m.set_bounds(xs[1], pt[1], pt[1]).unwrap();
            let milp = matches!(check_feasible(&m, &SolveOptions::default()).unwrap(), Feasibility::Feasible(_));
            // grid points on a facet up to rounding count either way
            if milp != direct && p.max_violation(&pt).abs() > 1e-9 {
                mismatches += 1;
            }
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn infeasible_bound_conflict() {
    let mut m = MilpModel::new();
    let x = m.add_var(0.0, 1.0);
    m.add_constraint(LinExpr::from(x), Sense::Ge, 2.0).unwrap();
    assert_eq!(solve(&m, &SolveOptions::default()).unwrap().status, SolveStatus::Infeasible);
    assert_eq!(check_feasible(&m, &SolveOptions::default()).unwrap(), Feasibility::Infeasible);
}

#[test]
fn empty_constraint_set_is_feasible() {
    let mut m = MilpModel::new();
    m.add_var(0.0, 1.0);
    assert!(matches!(check_feasible(&m, &SolveOptions::default()).unwrap(), Feasibility::Feasible(_)));
}

#[test]
fn distance_from_origin_to_box_boundary() {
    let mut m = MilpModel::new();
    let xs = [m.add_var(-3.0, 3.0), m.add_var(-3.0, 3.0)];
    let eps = m.add_var(0.0, 10.0);
    add_norm_le(&mut m, &xs, &[0.0, 0.0], eps, Norm::LInf).unwrap();
    let sq = Polytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
    add_not_in_interior(&mut m, &xs, &sq, &[Interval::new(-3.0, 3.0); 2]).unwrap();
    m.set_objective(LinExpr::from(eps), ObjectiveSense::Minimize).unwrap();
    let sol = solve(&m, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let grid_min = (0..=100)
        .flat_map(|i| (0..=100).map(move |j| [-3.0 + 0.06 * i as f64, -3.0 + 0.06 * j as f64]))
        .filter(|p| !sq.in_interior(p))
        .map(|p| p[0].abs().max(p[1].abs()))
        .fold(f64::INFINITY, f64::min);
    assert!((sol.incumbent.unwrap() - 1.0).abs() < 1e-6);
    assert!((grid_min - 1.0).abs() < 0.06);
    assert!(sol.bound <= sol.incumbent.unwrap() + 1e-6);
}

#[test]
fn containment_in_inflated_box_is_infeasible() {
    let mut m = MilpModel::new();
    let xs = [m.add_var(0.0, 1.0), m.add_var(0.0, 1.0)];
    let big = Polytope::from_box(&[-0.5, -0.5], &[1.5, 1.5]).unwrap();
    add_not_in_interior(&mut m, &xs, &big, &[Interval::new(0.0, 1.0); 2]).unwrap();
    assert_eq!(check_feasible(&m, &SolveOptions::default()).unwrap(), Feasibility::Infeasible);
}

#[test]
fn witness_outside_unit_box_interior() {
    let mut m = MilpModel::new();
    let xs = [m.add_var(0.0, 2.0), m.add_var(0.0, 2.0)];
    let unit = Polytope::from_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    add_not_in_interior(&mut m, &xs, &unit, &[Interval::new(0.0, 2.0); 2]).unwrap();
    match check_feasible(&m, &SolveOptions::default()).unwrap() {
        Feasibility::Feasible(w) => {
            let p = [w[0], w[1]];
            assert!(unit.max_violation(&p) >= -1e-7);
        }
        other => panic!("expected a witness, got {other:?}"),
    }
}

#[test]
fn ball_complement_examples() {
    let ball = NormBall::new(vec![0.0, 0.0], 1.0, Norm::LInf).unwrap();
    let poly = ball.to_polytope().unwrap();
    assert_eq!(poly.rows(), 4);
    let l1 = NormBall::new(vec![0.0; 3], 1.0, Norm::L1).unwrap().to_polytope().unwrap();
    assert_eq!(l1.rows(), 8);
}
