//! MILP encoding of `k` chained copies of the closed loop.

use super::bounds::{BoundsCache, EnvelopeSet};
use super::network::Activation;
use super::NeuralFeedbackLoop;
use crate::error::SystemError;
use crate::milp::{relu_expr, LinExpr, MilpModel, VarId};
use crate::pwl::encode_envelope_expr;

/// Handles into an encoded rollout. `states[0]` is the earliest state and
/// `states[k]` the final one.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub states: Vec<Vec<VarId>>,
}

impl Rollout {
    pub fn initial(&self) -> &[VarId] {
        &self.states[0]
    }

    pub fn final_state(&self) -> &[VarId] {
        &self.states[self.states.len() - 1]
    }
}

/// Encodes `x_{t+1} = f̂(x_t, NN(x_t))` for `t = 0..k`, with every big-M and
/// envelope range taken from `cache`.
pub fn encode_rollout(
    model: &mut MilpModel,
    nfl: &NeuralFeedbackLoop,
    envelopes: &EnvelopeSet,
    k: usize,
    cache: &BoundsCache,
) -> Result<Rollout, SystemError> {
    if cache.horizon() < k {
        return Err(SystemError::Dynamics(format!("bounds cover {} steps but {k} were requested", cache.horizon())));
    }
    envelopes.check_matches(nfl)?;
    let dynamics = &nfl.dynamics;
    let n = nfl.state_dim();
    let first: Vec<VarId> = (0..n)
        .map(|i| {
            let b = cache.states[0][i];
            model.add_named_var(&format!("x_0_{i}"), b.lo, b.hi)
        })
        .collect();
    let mut states = vec![first];
    for t in 0..k {
        let sb = &cache.steps[t];
        let x: Vec<LinExpr> = states[t].iter().map(|&v| LinExpr::from(v)).collect();
        let mut z = x.clone();
        for (li, layer) in nfl.controller.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.out_dim());
            for (j, (row, b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
                let mut e = LinExpr::constant(*b);
                for (w, zi) in row.iter().zip(&z) {
                    if *w != 0.0 {
                        e.add_scaled(zi, *w);
                    }
                }
                next.push(match layer.activation {
                    Activation::Relu => relu_expr(model, &e, sb.pre_activations[li][j])?,
                    Activation::Linear => e,
                });
            }
            z = next;
        }
        let xu: Vec<&LinExpr> = x.iter().chain(&z).collect();
        let mut outputs = Vec::with_capacity(dynamics.terms.len());
        for (j, term) in dynamics.terms.iter().enumerate() {
            let mut input = LinExpr::constant(term.offset);
            for (w, e) in term.input.iter().zip(&xu) {
                if *w != 0.0 {
                    input.add_scaled(e, *w);
                }
            }
            outputs.push(encode_envelope_expr(model, &envelopes.envelopes[j], &input, sb.term_inputs[j])?);
        }
        let mut next_vars = Vec::with_capacity(n);
        for i in 0..n {
            let mut e = LinExpr::constant(dynamics.c[i]);
            for (a, xe) in dynamics.a[i].iter().zip(&x) {
                if *a != 0.0 {
                    e.add_scaled(xe, *a);
                }
            }
            for (b, ue) in dynamics.b[i].iter().zip(&z) {
                if *b != 0.0 {
                    e.add_scaled(ue, *b);
                }
            }
            for (term, y) in dynamics.terms.iter().zip(&outputs) {
                if term.coeff[i] != 0.0 {
                    e.add_scaled(y, term.coeff[i]);
                }
            }
            let b = cache.states[t + 1][i];
            let v = model.add_named_var(&format!("x_{}_{i}", t + 1), b.lo, b.hi);
            model.add_eq(LinExpr::from(v), e)?;
            next_vars.push(v);
        }
        states.push(next_vars);
    }
    Ok(Rollout { states })
}
