//! Interval bound propagation through unrolled closed-loop steps, and the
//! per-term envelopes the encoding relies on.

use serde::{Deserialize, Serialize};

use super::network::{Activation, NeuralNetwork};
use super::NeuralFeedbackLoop;
use crate::error::{PwlError, SystemError};
use crate::geometry::{BoxDomain, Interval};
use crate::milp::{LinExpr, MilpModel, ObjectiveSense};
use crate::solver::{SolveOptions, SolveStatus};
use crate::pwl::{build_envelope, PwlEnvelope, ScalarFunction};

/// Intervals beyond this magnitude are treated as a blow-up.
pub const BOUNDS_CLIP: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepBounds {
    /// Pre-activation intervals, one list per layer.
    pub pre_activations: Vec<Vec<Interval>>,
    pub control: Vec<Interval>,
    pub term_inputs: Vec<Interval>,
    pub term_outputs: Vec<Interval>,
}

/// Bounds for `k` unrolled steps: `states[0]` is the initial box and
/// `states[t + 1]` follows `steps[t]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsCache {
    pub states: Vec<Vec<Interval>>,
    pub steps: Vec<StepBounds>,
}

impl BoundsCache {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Box of step `t` states.
    pub fn state_box(&self, t: usize) -> BoxDomain {
        BoxDomain::from_intervals(&self.states[t])
    }

    /// Number of neurons whose interval straddles zero.
    pub fn unstable_neurons(&self, nfl: &NeuralFeedbackLoop) -> usize {
        self.steps
            .iter()
            .map(|s| {
                s.pre_activations
                    .iter()
                    .zip(&nfl.controller.layers)
                    .filter(|(_, l)| l.activation == Activation::Relu)
                    .map(|(p, _)| p.iter().filter(|iv| iv.lo < 0.0 && iv.hi > 0.0).count())
                    .sum::<usize>()
            })
            .sum()
    }
}

fn affine_interval(row: &[f64], ivs: &[Interval], c: f64) -> Interval {
    let mut out = Interval::point(c);
    for (w, iv) in row.iter().zip(ivs) {
        out = out.add(&iv.scale(*w));
    }
    out
}

fn check(iv: Interval, step: usize, what: impl Fn() -> String) -> Result<Interval, SystemError> {
    for v in [iv.lo, iv.hi] {
        if !v.is_finite() || v.abs() > BOUNDS_CLIP {
            return Err(SystemError::BoundsBlowup { step, what: what(), value: v });
        }
    }
    Ok(iv)
}

/// Pre-activation bounds of every layer over an input box.
///
/// Layers after the first are bounded by the linear relaxation of everything
/// before them (each unstable ReLU replaced by its triangle hull), intersected
/// with plain interval arithmetic.
pub fn network_bounds(net: &NeuralNetwork, input: &[Interval], step: usize) -> Result<Vec<Vec<Interval>>, SystemError> {
    let mut m = MilpModel::new();
    let mut z: Vec<LinExpr> = input
        .iter()
        .map(|iv| if iv.width() == 0.0 { LinExpr::constant(iv.lo) } else { LinExpr::from(m.add_var(iv.lo, iv.hi)) })
        .collect();
    let mut z_iv = input.to_vec();
    let opts = SolveOptions::default();
    let mut out = Vec::with_capacity(net.layers.len());
    for (li, layer) in net.layers.iter().enumerate() {
        let mut pre = Vec::with_capacity(layer.out_dim());
        let mut exprs = Vec::with_capacity(layer.out_dim());
        for (j, (row, b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
            let mut iv = check(affine_interval(row, &z_iv, *b), step, || format!("layer {li} neuron {j}"))?;
            let mut e = LinExpr::constant(*b);
            for (w, zi) in row.iter().zip(&z) {
                e.add_scaled(zi, *w);
            }
            // the first layer is affine in the box, so intervals are already exact
            if li > 0 && iv.width() > 0.0 {
                iv = tighten(&mut m, &e, iv, &opts);
            }
            pre.push(iv);
            exprs.push(e);
        }
        let (next, next_iv): (Vec<LinExpr>, Vec<Interval>) = match layer.activation {
            Activation::Linear => (exprs, pre.clone()),
            Activation::Relu => exprs
                .into_iter()
                .zip(&pre)
                .map(|(e, iv)| {
                    if iv.lo >= 0.0 {
                        (e, *iv)
                    } else if iv.hi <= 0.0 {
                        (LinExpr::new(), Interval::point(0.0))
                    } else {
                        let a = m.add_var(0.0, iv.hi);
                        // a >= z and a <= hi (z - lo) / (hi - lo)
                        let _ = m.add_ge(LinExpr::from(a), e.clone());
                        let s = iv.hi / (iv.hi - iv.lo);
                        let mut cap = e.scaled(s);
                        cap.add_constant(-s * iv.lo);
                        let _ = m.add_le(LinExpr::from(a), cap);
                        (LinExpr::from(a), iv.relu())
                    }
                })
                .unzip(),
        };
        z = next;
        z_iv = next_iv;
        out.push(pre);
    }
    Ok(out)
}

fn lp_extreme(m: &mut MilpModel, e: &LinExpr, sense: ObjectiveSense, opts: &SolveOptions) -> Option<f64> {
    m.set_objective(e.clone(), sense).ok()?;
    let sol = crate::solver::solve(m, opts).ok()?;
    match sol.status {
        SolveStatus::Optimal => Some(sol.bound),
        _ => None,
    }
}

fn tighten(m: &mut MilpModel, e: &LinExpr, iv: Interval, opts: &SolveOptions) -> Interval {
    let pad = |v: f64| 1e-6 * (1.0 + v.abs());
    let lo = lp_extreme(m, e, ObjectiveSense::Minimize, opts).map_or(iv.lo, |v| iv.lo.max(v - pad(v)));
    let hi = lp_extreme(m, e, ObjectiveSense::Maximize, opts).map_or(iv.hi, |v| iv.hi.min(v + pad(v)));
    if lo <= hi {
        Interval::new(lo, hi)
    } else {
        iv
    }
}

fn propagate_with(
    nfl: &NeuralFeedbackLoop,
    init: &BoxDomain,
    k: usize,
    term_image: &mut dyn FnMut(usize, Interval) -> Result<Interval, SystemError>,
) -> Result<BoundsCache, SystemError> {
    let dynamics = &nfl.dynamics;
    if init.dim() != nfl.state_dim() {
        return Err(SystemError::Dynamics("initial box dimension does not match the state".into()));
    }
    let mut states = vec![init.intervals()];
    let mut steps = Vec::with_capacity(k);
    for t in 0..k {
        let x = states[t].clone();
        let pre_activations = network_bounds(&nfl.controller, &x, t)?;
        let control = pre_activations.last().cloned().unwrap_or_default();
        let xu: Vec<Interval> = x.iter().chain(&control).copied().collect();
        let mut term_inputs = Vec::with_capacity(dynamics.terms.len());
        let mut term_outputs = Vec::with_capacity(dynamics.terms.len());
        for (j, term) in dynamics.terms.iter().enumerate() {
            let input = check(affine_interval(&term.input, &xu, term.offset), t, || format!("term {j} input"))?;
            term_inputs.push(input);
            term_outputs.push(term_image(j, input)?);
        }
        let mut next = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let mut iv = affine_interval(&dynamics.a[i], &x, dynamics.c[i]).add(&affine_interval(&dynamics.b[i], &control, 0.0));
            for (term, out) in dynamics.terms.iter().zip(&term_outputs) {
                iv = iv.add(&out.scale(term.coeff[i]));
            }
            next.push(check(iv, t, || format!("state {i}"))?);
        }
        states.push(next);
        steps.push(StepBounds { pre_activations, control, term_inputs, term_outputs });
    }
    Ok(BoundsCache { states, steps })
}

/// Propagation with the exact images of the nonlinear terms.
pub fn propagate_exact(nfl: &NeuralFeedbackLoop, init: &BoxDomain, k: usize) -> Result<BoundsCache, SystemError> {
    let terms = &nfl.dynamics.terms;
    propagate_with(nfl, init, k, &mut |j, x| {
        terms[j].func.range(x.lo, x.hi).ok_or_else(|| SystemError::Dynamics("term has no closed-form range".into()))
    })
}

/// Propagation through the envelopes: every value the encoding admits lies
/// inside the returned intervals.
pub fn propagate_bounds(
    nfl: &NeuralFeedbackLoop,
    envelopes: &EnvelopeSet,
    init: &BoxDomain,
    k: usize,
) -> Result<BoundsCache, SystemError> {
    if k == 0 {
        return Err(SystemError::Dynamics("horizon must be at least one step".into()));
    }
    envelopes.check_matches(nfl)?;
    propagate_with(nfl, init, k, &mut |j, x| Ok(envelopes.envelopes[j].image(x)?))
}

/// One envelope per nonlinear term of the dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSet {
    pub rel_tol: f64,
    pub envelopes: Vec<PwlEnvelope>,
}

const FIT_ROUNDS: usize = 12;

fn widen(iv: Interval) -> Interval {
    let m = 0.05 * iv.width() + 1e-3;
    Interval::new(iv.lo - m, iv.hi + m)
}

impl EnvelopeSet {
    /// Builds envelopes whose domains cover every term input reachable within
    /// `k` steps from `init`, including inputs fed by earlier envelope slack.
    pub fn fit(nfl: &NeuralFeedbackLoop, init: &BoxDomain, k: usize, rel_tol: f64) -> Result<Self, SystemError> {
        let terms = &nfl.dynamics.terms;
        let mut domains: Vec<Interval> = if terms.is_empty() {
            vec![]
        } else {
            let exact = propagate_exact(nfl, init, k)?;
            (0..terms.len())
                .map(|j| widen(exact.steps.iter().map(|s| s.term_inputs[j]).reduce(|a, b| a.hull(&b)).unwrap()))
                .collect()
        };
        for _ in 0..FIT_ROUNDS {
            let envelopes = domains
                .iter()
                .zip(terms)
                .map(|(d, t)| build_envelope(&t.func, *d, rel_tol))
                .collect::<Result<Vec<_>, PwlError>>()?;
            let mut escaped: Vec<Option<Interval>> = vec![None; terms.len()];
            propagate_with(nfl, init, k, &mut |j, x| {
                let env = &envelopes[j];
                let inside = Interval::new(x.lo.max(env.domain.lo), x.hi.min(env.domain.hi));
                if inside.lo > inside.hi || inside != x {
                    escaped[j] = Some(escaped[j].map_or(x, |e| e.hull(&x)));
                }
                // keep going with a sound stand-in so every escape is seen in one pass
                let r = terms[j].func.range(x.lo, x.hi).unwrap_or(Interval::new(-BOUNDS_CLIP, BOUNDS_CLIP));
                let g = env.max_gap();
                Ok(Interval::new(r.lo - g, r.hi + g))
            })?;
            if escaped.iter().all(Option::is_none) {
                return Ok(EnvelopeSet { rel_tol, envelopes });
            }
            for (d, e) in domains.iter_mut().zip(escaped) {
                if let Some(e) = e {
                    *d = widen(d.hull(&e));
                }
            }
        }
        Err(SystemError::Dynamics("envelope domains did not settle; shrink the domain or the horizon".into()))
    }

    pub fn check_matches(&self, nfl: &NeuralFeedbackLoop) -> Result<(), SystemError> {
        if self.envelopes.len() != nfl.dynamics.terms.len() {
            return Err(SystemError::Dynamics(format!(
                "{} envelopes for {} nonlinear terms",
                self.envelopes.len(),
                nfl.dynamics.terms.len()
            )));
        }
        Ok(())
    }

    pub fn total_segments(&self) -> usize {
        self.envelopes.iter().map(|e| e.segments()).sum()
    }
}
