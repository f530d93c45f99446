//! Closed-loop systems: a ReLU controller driving a discrete-time plant.

pub mod bounds;
pub mod dynamics;
pub mod encode;
pub mod network;

pub use bounds::{network_bounds, propagate_bounds, propagate_exact, BoundsCache, EnvelopeSet, StepBounds, BOUNDS_CLIP};
pub use dynamics::{Dynamics, DynamicsSpec, NonlinearTerm};
pub use encode::{encode_rollout, Rollout};
pub use network::{load_network, save_network, Activation, Layer, NeuralNetwork};

use crate::error::SystemError;
use crate::geometry::BoxDomain;

/// `x_{t+1} = f(x_t, NN(x_t))` restricted to the analysis domain `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralFeedbackLoop {
    pub dynamics: Dynamics,
    pub controller: NeuralNetwork,
    pub domain: BoxDomain,
}

impl NeuralFeedbackLoop {
    pub fn new(dynamics: Dynamics, controller: NeuralNetwork, domain: BoxDomain) -> Result<Self, SystemError> {
        dynamics.validate()?;
        controller.validate()?;
        domain.validate()?;
        let n = dynamics.state_dim();
        if controller.input_dim() != n {
            return Err(SystemError::Dynamics(format!(
                "controller takes {} inputs but the state has dimension {n}",
                controller.input_dim()
            )));
        }
        if controller.output_dim() != dynamics.control_dim() {
            return Err(SystemError::Dynamics(format!(
                "controller has {} outputs but the dynamics expect {} controls",
                controller.output_dim(),
                dynamics.control_dim()
            )));
        }
        if domain.dim() != n {
            return Err(SystemError::Dynamics(format!("domain has dimension {} but the state has {n}", domain.dim())));
        }
        Ok(NeuralFeedbackLoop { dynamics, controller, domain })
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn step(&self, x: &[f64]) -> Vec<f64> {
        let u = self.controller.forward(x);
        self.dynamics.step(x, &u)
    }

    /// `t` applications of the true closed loop.
    pub fn simulate(&self, x: &[f64], t: usize) -> Vec<f64> {
        let mut s = x.to_vec();
        for _ in 0..t {
            s = self.step(&s);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_controller() -> NeuralNetwork {
        NeuralNetwork::new(vec![
            Layer { weights: vec![vec![0.0, 0.0]; 3], bias: vec![0.0; 3], activation: Activation::Relu },
            Layer { weights: vec![vec![0.0; 3]], bias: vec![0.0], activation: Activation::Linear },
        ])
        .unwrap()
    }

    #[test]
    fn zero_steps_is_identity() {
        let d = BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let nfl = NeuralFeedbackLoop::new(Dynamics::unicycle_heading(1.0, 1.0, true), zero_controller(), d).unwrap();
        assert_eq!(nfl.simulate(&[0.3, -0.2], 0), vec![0.3, -0.2]);
    }

    #[test]
    fn zero_heading_moves_along_x() {
        let d = BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let nfl = NeuralFeedbackLoop::new(Dynamics::unicycle_heading(1.0, 1.0, true), zero_controller(), d.clone()).unwrap();
        assert_eq!(nfl.simulate(&[0.0, 0.0], 1), vec![1.0, 0.0]);
        let literal = NeuralFeedbackLoop::new(Dynamics::unicycle_heading(1.0, 1.0, false), zero_controller(), d).unwrap();
        assert_eq!(literal.simulate(&[0.7, -0.4], 1), vec![1.0, 0.0]);
    }

    #[test]
    fn geometric_decay() {
        let d = BoxDomain::new(vec![0.0], vec![10.0]).unwrap();
        let dyn_ = Dynamics::affine(vec![vec![0.0]], vec![vec![0.5]], vec![0.0]).unwrap();
        let nfl = NeuralFeedbackLoop::new(dyn_, NeuralNetwork::identity(1), d).unwrap();
        assert_eq!(nfl.simulate(&[8.0], 3), vec![1.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let d = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
        assert!(NeuralFeedbackLoop::new(Dynamics::unicycle_heading(1.0, 1.0, true), zero_controller(), d).is_err());
    }
}
