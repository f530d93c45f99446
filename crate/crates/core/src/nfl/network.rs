//! Feed-forward ReLU networks and their JSON file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::NetworkError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

/// One affine map `W z + b` followed by an activation. `weights` is row-major,
/// one row per output neuron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, |r| r.len())
    }

    pub fn affine(&self, z: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralNetwork {
    pub layers: Vec<Layer>,
}

impl NeuralNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NetworkError> {
        let nn = NeuralNetwork { layers };
        nn.validate()?;
        Ok(nn)
    }

    /// Single linear layer computing `x` itself.
    pub fn identity(n: usize) -> Self {
        let weights = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        NeuralNetwork { layers: vec![Layer { weights, bias: vec![0.0; n], activation: Activation::Linear }] }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut prev: Option<usize> = None;
        for (i, l) in self.layers.iter().enumerate() {
            let err = |msg: String| NetworkError::Layer { layer: i, msg };
            if l.bias.is_empty() {
                return Err(err("no neurons".into()));
            }
            if l.weights.len() != l.bias.len() {
                return Err(err(format!("{} weight rows for {} biases", l.weights.len(), l.bias.len())));
            }
            let cols = l.in_dim();
            if cols == 0 || l.weights.iter().any(|r| r.len() != cols) {
                return Err(err("weight rows have unequal or zero length".into()));
            }
            if let Some(p) = prev {
                if p != cols {
                    return Err(err(format!("expects {cols} inputs but previous layer has {p} outputs")));
                }
            }
            if l.weights.iter().flatten().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(err("non-finite weight".into()));
            }
            prev = Some(l.out_dim());
        }
        let last = self.layers.len() - 1;
        if self.layers[last].activation != Activation::Linear {
            return Err(NetworkError::Layer { layer: last, msg: "final layer must be linear".into() });
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut z = x.to_vec();
        for l in &self.layers {
            z = l.affine(&z);
            if l.activation == Activation::Relu {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        z
    }

    pub fn num_neurons(&self) -> usize {
        self.layers.iter().map(|l| l.out_dim()).sum()
    }

    pub fn from_json(s: &str) -> Result<Self, NetworkError> {
        let nn: NeuralNetwork = serde_json::from_str(s).map_err(|e| NetworkError::Parse(e.to_string()))?;
        nn.validate()?;
        Ok(nn)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }
}

pub fn load_network(path: &Path) -> Result<NeuralNetwork, NetworkError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| NetworkError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    NeuralNetwork::from_json(&text)
}

pub fn save_network(nn: &NeuralNetwork, path: &Path) -> Result<(), NetworkError> {
    std::fs::write(path, nn.to_json() + "\n")
        .map_err(|e| NetworkError::Io { path: path.display().to_string(), msg: e.to_string() })
}
