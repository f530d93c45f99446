//! Piecewise-linear lower/upper envelopes of scalar functions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::PwlError;
use crate::geometry::Interval;
use crate::milp::{LinExpr, MilpModel, VarId};

/// A scalar function with a certified Lipschitz bound.
pub trait ScalarFunction: Send + Sync {
    fn eval(&self, x: f64) -> f64;
    /// Lipschitz constant valid on `[a, b]`.
    fn lipschitz(&self, a: f64, b: f64) -> f64;
    /// Bound on `|g''|` over `[a, b]`, if known.
    fn curvature(&self, _a: f64, _b: f64) -> Option<f64> {
        None
    }
    /// Exact image of `[a, b]`, if known in closed form.
    fn range(&self, _a: f64, _b: f64) -> Option<Interval> {
        None
    }
}

/// Built-in scalar nonlinearities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFn {
    Sin,
    Cos,
    Affine { slope: f64, intercept: f64 },
}

impl ScalarFn {
    pub fn name(&self) -> &'static str {
        match self {
            ScalarFn::Sin => "sin",
            ScalarFn::Cos => "cos",
            ScalarFn::Affine { .. } => "affine",
        }
    }
}

/// Range of `sin` over `[a, b]`: endpoint values plus any interior extrema.
fn sin_range(a: f64, b: f64) -> Interval {
    let (mut lo, mut hi) = (a.sin().min(b.sin()), a.sin().max(b.sin()));
    // maxima at pi/2 + 2k pi, minima at -pi/2 + 2k pi
    let k_max = ((a - PI / 2.0) / (2.0 * PI)).ceil();
    if PI / 2.0 + 2.0 * PI * k_max <= b {
        hi = 1.0;
    }
    let k_min = ((a + PI / 2.0) / (2.0 * PI)).ceil();
    if -PI / 2.0 + 2.0 * PI * k_min <= b {
        lo = -1.0;
    }
    Interval::new(lo, hi)
}

impl ScalarFunction for ScalarFn {
    fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Sin => x.sin(),
            ScalarFn::Cos => x.cos(),
            ScalarFn::Affine { slope, intercept } => slope * x + intercept,
        }
    }

    fn lipschitz(&self, _a: f64, _b: f64) -> f64 {
        match self {
            ScalarFn::Sin | ScalarFn::Cos => 1.0,
            ScalarFn::Affine { slope, .. } => slope.abs(),
        }
    }

    fn curvature(&self, _a: f64, _b: f64) -> Option<f64> {
        match self {
            ScalarFn::Sin | ScalarFn::Cos => Some(1.0),
            ScalarFn::Affine { .. } => Some(0.0),
        }
    }

    fn range(&self, a: f64, b: f64) -> Option<Interval> {
        Some(match self {
            ScalarFn::Sin => sin_range(a, b),
            ScalarFn::Cos => sin_range(a + PI / 2.0, b + PI / 2.0),
            ScalarFn::Affine { slope, intercept } => Interval::new(a, b).scale(*slope).add(&Interval::point(*intercept)),
        })
    }
}

/// Wraps an arbitrary evaluator with a caller-certified Lipschitz constant.
#[derive(Clone)]
pub struct LipschitzFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lipschitz: f64,
}

impl LipschitzFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, lipschitz: f64) -> Self {
        LipschitzFn { f: Arc::new(f), lipschitz }
    }
}

impl fmt::Debug for LipschitzFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LipschitzFn(L = {})", self.lipschitz)
    }
}

impl ScalarFunction for LipschitzFn {
    fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
    fn lipschitz(&self, _a: f64, _b: f64) -> f64 {
        self.lipschitz
    }
}

/// Linear interpolation through strictly increasing knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwlFunction {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl PwlFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self, PwlError> {
        let f = PwlFunction { knots, values };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), PwlError> {
        if self.knots.len() < 2 {
            return Err(PwlError::Malformed("need at least two knots".into()));
        }
        if self.knots.len() != self.values.len() {
            return Err(PwlError::Malformed("knot and value counts differ".into()));
        }
        if self.knots.iter().chain(&self.values).any(|v| !v.is_finite()) {
            return Err(PwlError::Malformed("non-finite entry".into()));
        }
        if self.knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PwlError::Malformed("knots must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    /// Index of the segment containing `x`, clamped to the domain.
    pub fn segment_of(&self, x: f64) -> usize {
        let n = self.segments();
        match self.knots.partition_point(|&k| k <= x) {
            0 => 0,
            i => (i - 1).min(n - 1),
        }
    }

    /// Slope and intercept of segment `s`.
    pub fn line(&self, s: usize) -> (f64, f64) {
        let (x0, x1) = (self.knots[s], self.knots[s + 1]);
        let (y0, y1) = (self.values[s], self.values[s + 1]);
        let slope = (y1 - y0) / (x1 - x0);
        (slope, y0 - slope * x0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = self.segment_of(x);
        let (x0, x1) = (self.knots[s], self.knots[s + 1]);
        let w = (x - x0) / (x1 - x0);
        self.values[s] * (1.0 - w) + self.values[s + 1] * w
    }

    /// Exact min and max over `[lo, hi]` (extrema sit at knots or endpoints).
    pub fn extrema(&self, lo: f64, hi: f64) -> Interval {
        let (a, b) = (self.eval(lo), self.eval(hi));
        let (mut min, mut max) = (a.min(b), a.max(b));
        for (k, v) in self.knots.iter().zip(&self.values) {
            if *k > lo && *k < hi {
                min = min.min(*v);
                max = max.max(*v);
            }
        }
        Interval::new(min, max)
    }
}

/// Sound lower/upper bound pair on a shared knot grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvelopeWire", into = "EnvelopeWire")]
pub struct PwlEnvelope {
    pub domain: Interval,
    pub lower: PwlFunction,
    pub upper: PwlFunction,
    pub certified_rel_error: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeWire {
    domain: [f64; 2],
    knots: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    certified_rel_error: f64,
}

impl From<PwlEnvelope> for EnvelopeWire {
    fn from(e: PwlEnvelope) -> Self {
        EnvelopeWire {
            domain: [e.domain.lo, e.domain.hi],
            knots: e.lower.knots,
            lower: e.lower.values,
            upper: e.upper.values,
            certified_rel_error: e.certified_rel_error,
        }
    }
}

impl TryFrom<EnvelopeWire> for PwlEnvelope {
    type Error = PwlError;
    fn try_from(w: EnvelopeWire) -> Result<Self, PwlError> {
        let env = PwlEnvelope {
            domain: Interval::new(w.domain[0], w.domain[1]),
            lower: PwlFunction::new(w.knots.clone(), w.lower)?,
            upper: PwlFunction::new(w.knots, w.upper)?,
            certified_rel_error: w.certified_rel_error,
        };
        env.validate()?;
        Ok(env)
    }
}

impl PwlEnvelope {
    pub fn validate(&self) -> Result<(), PwlError> {
        self.lower.validate()?;
        self.upper.validate()?;
        if self.lower.knots != self.upper.knots {
            return Err(PwlError::Malformed("lower and upper must share knots".into()));
        }
        let k = &self.lower.knots;
        if k[0] != self.domain.lo || k[k.len() - 1] != self.domain.hi {
            return Err(PwlError::Malformed("knots must span the domain".into()));
        }
        if self.lower.values.iter().zip(&self.upper.values).any(|(l, u)| l > u) {
            return Err(PwlError::Malformed("lower above upper at a knot".into()));
        }
        Ok(())
    }

    pub fn knots(&self) -> &[f64] {
        &self.lower.knots
    }

    pub fn segments(&self) -> usize {
        self.lower.segments()
    }

    /// Largest vertical gap between the bounds.
    pub fn max_gap(&self) -> f64 {
        self.lower.values.iter().zip(&self.upper.values).map(|(l, u)| u - l).fold(0.0, f64::max)
    }

    pub fn bounds_at(&self, x: f64) -> Interval {
        Interval::new(self.lower.eval(x), self.upper.eval(x))
    }

    /// Enclosure of every value the envelope admits for inputs in `x`.
    pub fn image(&self, x: Interval) -> Result<Interval, PwlError> {
        self.check_inside(x)?;
        Ok(Interval::new(self.lower.extrema(x.lo, x.hi).lo, self.upper.extrema(x.lo, x.hi).hi))
    }

    fn check_inside(&self, x: Interval) -> Result<(), PwlError> {
        if !(x.lo >= self.domain.lo && x.hi <= self.domain.hi && x.lo <= x.hi) {
            return Err(PwlError::OutsideDomain { lo: x.lo, hi: x.hi, a: self.domain.lo, b: self.domain.hi });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, PwlError> {
        serde_json::from_str(s).map_err(|e| PwlError::Malformed(e.to_string()))
    }
}

pub const DEFAULT_MAX_KNOTS: usize = 1 << 20;
const SAMPLES_PER_SEGMENT: usize = 32;

/// Envelope on a uniform grid, doubled until the certified relative error
/// meets `rel_tol`.
pub fn build_envelope(g: &dyn ScalarFunction, domain: Interval, rel_tol: f64) -> Result<PwlEnvelope, PwlError> {
    build_envelope_capped(g, domain, rel_tol, DEFAULT_MAX_KNOTS)
}

pub fn build_envelope_capped(
    g: &dyn ScalarFunction,
    domain: Interval,
    rel_tol: f64,
    max_knots: usize,
) -> Result<PwlEnvelope, PwlError> {
    let (a, b) = (domain.lo, domain.hi);
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(PwlError::Domain(a, b));
    }
    if !(rel_tol > 0.0 && rel_tol.is_finite()) {
        return Err(PwlError::Tolerance(rel_tol));
    }
    let lip = g.lipschitz(a, b);
    let curv = g.curvature(a, b);
    let exact_range = g.range(a, b);
    let mut n = 1usize;
    loop {
        if n + 1 > max_knots {
            return Err(PwlError::TooTight { knots: n + 1, rel_tol });
        }
        let env = envelope_on_grid(g, a, b, n, lip, curv, exact_range)?;
        if env.certified_rel_error <= rel_tol {
            return Ok(env);
        }
        n *= 2;
    }
}

fn envelope_on_grid(
    g: &dyn ScalarFunction,
    a: f64,
    b: f64,
    n: usize,
    lip: f64,
    curv: Option<f64>,
    exact_range: Option<Interval>,
) -> Result<PwlEnvelope, PwlError> {
    let h = (b - a) / n as f64;
    let knots: Vec<f64> = (0..=n).map(|i| if i == n { b } else { a + h * i as f64 }).collect();
    let gk: Vec<f64> = knots.iter().map(|&x| g.eval(x)).collect();
    if gk.iter().any(|v| !v.is_finite()) {
        return Err(PwlError::Malformed("function is not finite on the domain".into()));
    }
    let mut up = vec![0.0; n];
    let mut dn = vec![0.0; n];
    let (mut gmin, mut gmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in 0..n {
        let (x0, x1) = (knots[s], knots[s + 1]);
        let hs = x1 - x0;
        let slope = (gk[s + 1] - gk[s]) / hs;
        let step = hs / SAMPLES_PER_SEGMENT as f64;
        let mut dmax: f64 = 0.0;
        let mut dmin: f64 = 0.0;
        for j in 0..=SAMPLES_PER_SEGMENT {
            let x = if j == SAMPLES_PER_SEGMENT { x1 } else { x0 + step * j as f64 };
            let gx = g.eval(x);
            gmin = gmin.min(gx);
            gmax = gmax.max(gx);
            let d = gx - (gk[s] + slope * (x - x0));
            dmax = dmax.max(d);
            dmin = dmin.min(d);
        }
        // between samples the deviation from the secant moves at most
        // L_e * step / 2 (tent bound) or M2 * step^2 / 8 (curvature bound)
        let mut l_e = lip + slope.abs();
        let mut infl = l_e * step / 2.0;
        if let Some(m2) = curv {
            l_e = l_e.min(m2 * hs);
            infl = (l_e * step / 2.0).min(m2 * step * step / 8.0);
        }
        let pad = 4.0 * f64::EPSILON * (gk[s].abs().max(gk[s + 1].abs()) + slope.abs() * hs + 1.0);
        up[s] = dmax + infl + pad;
        dn[s] = -dmin + infl + pad;
    }
    let mut lower = Vec::with_capacity(n + 1);
    let mut upper = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let left = if i > 0 { i - 1 } else { 0 };
        let right = i.min(n - 1);
        upper.push(gk[i] + up[left].max(up[right]));
        lower.push(gk[i] - dn[left].max(dn[right]));
    }
    let range = match exact_range {
        Some(r) => r.width(),
        None => gmax - gmin,
    };
    let gap = lower.iter().zip(&upper).map(|(l, u)| u - l).fold(0.0, f64::max);
    Ok(PwlEnvelope {
        domain: Interval::new(a, b),
        lower: PwlFunction { knots: knots.clone(), values: lower },
        upper: PwlFunction { knots, values: upper },
        certified_rel_error: gap / range.max(1e-12),
    })
}

/// Encodes `y` with `lower(x) ≤ y ≤ upper(x)` for `x` in `x_bounds`.
///
/// Each segment meeting `x_bounds` gets one indicator; the segment choice and
/// the bounds are written in disaggregated (convex hull) form, so the LP
/// relaxation of a fixed indicator pattern is exact.
pub fn encode_envelope_expr(
    model: &mut MilpModel,
    env: &PwlEnvelope,
    x: &LinExpr,
    x_bounds: Interval,
) -> Result<LinExpr, PwlError> {
    env.check_inside(x_bounds)?;
    let knots = env.knots();
    let first = env.lower.segment_of(x_bounds.lo);
    let last = env.lower.segment_of(x_bounds.hi).max(first);
    let image = env.image(x_bounds)?;
    let y = model.add_var(image.lo, image.hi);
    if first == last {
        let (ls, li) = env.lower.line(first);
        let (us, ui) = env.upper.line(first);
        model.add_ge(LinExpr::from(y), x.scaled(ls) + LinExpr::constant(li))?;
        model.add_le(LinExpr::from(y), x.scaled(us) + LinExpr::constant(ui))?;
        return Ok(LinExpr::from(y));
    }
    let mut sum_d = LinExpr::new();
    let mut sum_x = LinExpr::new();
    let mut sum_y = LinExpr::new();
    for s in first..=last {
        let lo = knots[s].max(x_bounds.lo);
        let hi = knots[s + 1].min(x_bounds.hi);
        let d = model.add_binary();
        let xs = model.add_var(lo.min(0.0), hi.max(0.0));
        let piece = env.image(Interval::new(lo, hi))?;
        let ys = model.add_var(piece.lo.min(0.0), piece.hi.max(0.0));
        model.add_ge(LinExpr::from(xs), LinExpr::term(d, lo))?;
        model.add_le(LinExpr::from(xs), LinExpr::term(d, hi))?;
        let (ls, li) = env.lower.line(s);
        let (us, ui) = env.upper.line(s);
        model.add_ge(LinExpr::from(ys), LinExpr::term(xs, ls) + LinExpr::term(d, li))?;
        model.add_le(LinExpr::from(ys), LinExpr::term(xs, us) + LinExpr::term(d, ui))?;
        sum_d.add_term(d, 1.0);
        sum_x.add_term(xs, 1.0);
        sum_y.add_term(ys, 1.0);
    }
    model.add_eq(sum_d, LinExpr::constant(1.0))?;
    model.add_eq(sum_x, x.clone())?;
    model.add_eq(sum_y, LinExpr::from(y))?;
    Ok(LinExpr::from(y))
}

pub fn encode_envelope(
    model: &mut MilpModel,
    env: &PwlEnvelope,
    x: VarId,
    x_bounds: Interval,
) -> Result<VarId, PwlError> {
    let y = encode_envelope_expr(model, env, &LinExpr::from(x), x_bounds)?;
    Ok(y.as_var().expect("envelope output is a fresh variable"))
}
