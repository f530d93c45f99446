//! Discrete-time plant models written as affine maps plus declared scalar
//! nonlinear terms.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::SystemError;
use crate::pwl::{ScalarFn, ScalarFunction};

/// `coeff_i * g(w · [x; u] + offset)` added to each next-state coordinate `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearTerm {
    pub func: ScalarFn,
    /// Weights on the stacked vector `[x; u]`.
    pub input: Vec<f64>,
    pub offset: f64,
    /// Contribution to each next-state coordinate.
    pub coeff: Vec<f64>,
}

impl NonlinearTerm {
    pub fn input_value(&self, x: &[f64], u: &[f64]) -> f64 {
        self.offset + x.iter().chain(u).zip(&self.input).map(|(v, w)| w * v).sum::<f64>()
    }
}

/// `x' = A x + B u + c + Σ_j coeff_j g_j(w_j · [x; u] + offset_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dynamics {
    pub name: String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub terms: Vec<NonlinearTerm>,
}

/// Dynamics named in a run configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub name: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

fn scalar(params: &Map<String, Value>, key: &str, default: f64) -> Result<f64, SystemError> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| SystemError::Dynamics(format!("parameter `{key}` must be a finite number"))),
    }
}

fn matrix(params: &Map<String, Value>, key: &str) -> Result<Option<Vec<Vec<f64>>>, SystemError> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => serde_json::from_value::<Vec<Vec<f64>>>(v.clone())
            .map(Some)
            .map_err(|_| SystemError::Dynamics(format!("parameter `{key}` must be a matrix of numbers"))),
    }
}

fn check_keys(params: &Map<String, Value>, allowed: &[&str], name: &str) -> Result<(), SystemError> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(SystemError::Dynamics(format!("unknown parameter `{k}` for {name}; expected one of {allowed:?}")));
        }
    }
    Ok(())
}

impl Dynamics {
    pub const NAMES: [&'static str; 3] = ["unicycle_heading", "affine", "pendulum"];

    pub fn from_spec(spec: &DynamicsSpec) -> Result<Self, SystemError> {
        let p = &spec.params;
        match spec.name.as_str() {
            "unicycle_heading" => {
                check_keys(p, &["v", "dt", "integrate"], "unicycle_heading")?;
                let integrate = scalar(p, "integrate", 1.0)?;
                if integrate != 0.0 && integrate != 1.0 {
                    return Err(SystemError::Dynamics("`integrate` must be 0 or 1".into()));
                }
                Ok(Self::unicycle_heading(scalar(p, "v", 1.0)?, scalar(p, "dt", 1.0)?, integrate == 1.0))
            }
            "affine" => {
                check_keys(p, &["a", "b", "c"], "affine")?;
                let a = matrix(p, "a")?.ok_or_else(|| SystemError::Dynamics("affine needs `a`".into()))?;
                let b = matrix(p, "b")?.ok_or_else(|| SystemError::Dynamics("affine needs `b`".into()))?;
                let c = match p.get("c") {
                    None => vec![0.0; a.len()],
                    Some(v) => serde_json::from_value(v.clone())
                        .map_err(|_| SystemError::Dynamics("`c` must be a vector".into()))?,
                };
                Self::affine(a, b, c)
            }
            "pendulum" => {
                check_keys(p, &["g", "l", "m", "dt", "damping"], "pendulum")?;
                Ok(Self::pendulum(
                    scalar(p, "g", 9.81)?,
                    scalar(p, "l", 1.0)?,
                    scalar(p, "m", 1.0)?,
                    scalar(p, "dt", 0.05)?,
                    scalar(p, "damping", 0.0)?,
                ))
            }
            other => Err(SystemError::Dynamics(format!("unknown dynamics `{other}`; expected one of {:?}", Self::NAMES))),
        }
    }

    /// Planar unicycle with the network choosing the heading. With `integrate`
    /// the position advances by `v dt (cos θ, sin θ)`; without it the next state
    /// is `v (cos θ, sin θ)` alone.
    pub fn unicycle_heading(v: f64, dt: f64, integrate: bool) -> Self {
        let keep = if integrate { 1.0 } else { 0.0 };
        let step = if integrate { v * dt } else { v };
        Dynamics {
            name: "unicycle_heading".into(),
            a: vec![vec![keep, 0.0], vec![0.0, keep]],
            b: vec![vec![0.0], vec![0.0]],
            c: vec![0.0, 0.0],
            terms: vec![
                NonlinearTerm { func: ScalarFn::Cos, input: vec![0.0, 0.0, 1.0], offset: 0.0, coeff: vec![step, 0.0] },
                NonlinearTerm { func: ScalarFn::Sin, input: vec![0.0, 0.0, 1.0], offset: 0.0, coeff: vec![0.0, step] },
            ],
        }
    }

    pub fn affine(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<f64>) -> Result<Self, SystemError> {
        let d = Dynamics { name: "affine".into(), a, b, c, terms: vec![] };
        d.validate()?;
        Ok(d)
    }

    /// State `(angle, rate)`, control is torque; explicit Euler step.
    pub fn pendulum(g: f64, l: f64, m: f64, dt: f64, damping: f64) -> Self {
        Dynamics {
            name: "pendulum".into(),
            a: vec![vec![1.0, dt], vec![0.0, 1.0 - dt * damping]],
            b: vec![vec![0.0], vec![dt / (m * l * l)]],
            c: vec![0.0, 0.0],
            terms: vec![NonlinearTerm {
                func: ScalarFn::Sin,
                input: vec![1.0, 0.0, 0.0],
                offset: 0.0,
                coeff: vec![0.0, -dt * g / l],
            }],
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.len()
    }

    pub fn control_dim(&self) -> usize {
        self.b.first().map_or(0, |r| r.len())
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        let n = self.a.len();
        let bad = |m: &str| Err(SystemError::Dynamics(m.to_string()));
        if n == 0 || self.a.iter().any(|r| r.len() != n) {
            return bad("A must be square and nonempty");
        }
        if self.b.len() != n {
            return bad("B must have one row per state");
        }
        let m = self.control_dim();
        if m == 0 || self.b.iter().any(|r| r.len() != m) {
            return bad("B rows must share a nonzero length");
        }
        if self.c.len() != n {
            return bad("c must have one entry per state");
        }
        for t in &self.terms {
            if t.input.len() != n + m || t.coeff.len() != n {
                return bad("nonlinear term dimensions do not match the state and control");
            }
        }
        let all = self.a.iter().flatten().chain(self.b.iter().flatten()).chain(&self.c);
        let terms = self.terms.iter().flat_map(|t| t.input.iter().chain(&t.coeff).chain(std::iter::once(&t.offset)));
        if all.chain(terms).any(|v| !v.is_finite()) {
            return bad("non-finite coefficient");
        }
        Ok(())
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut next: Vec<f64> = (0..self.state_dim())
            .map(|i| {
                self.c[i]
                    + self.a[i].iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
                    + self.b[i].iter().zip(u).map(|(b, v)| b * v).sum::<f64>()
            })
            .collect();
        for t in &self.terms {
            let g = t.func.eval(t.input_value(x, u));
            for (i, c) in t.coeff.iter().enumerate() {
                next[i] += c * g;
            }
        }
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        let spec: DynamicsSpec = serde_json::from_str(r#"{"name":"unicycle_heading","params":{"v":2}}"#).unwrap();
        let d = Dynamics::from_spec(&spec).unwrap();
        assert_eq!(d.step(&[1.0, 1.0], &[0.0]), vec![3.0, 1.0]);
        let bad: DynamicsSpec = serde_json::from_str(r#"{"name":"unicycle_heading","params":{"w":2}}"#).unwrap();
        assert!(Dynamics::from_spec(&bad).is_err());
        let unknown = DynamicsSpec { name: "quadrotor".into(), params: Map::new() };
        assert!(Dynamics::from_spec(&unknown).is_err());
        let aff: DynamicsSpec = serde_json::from_str(r#"{"name":"affine","params":{"a":[[0]],"b":[[0.5]]}}"#).unwrap();
        assert_eq!(Dynamics::from_spec(&aff).unwrap().step(&[3.0], &[3.0]), vec![1.5]);
    }

    #[test]
    fn literal_unicycle_ignores_position() {
        let d = Dynamics::unicycle_heading(1.0, 1.0, false);
        for x in [[0.0, 0.0], [3.0, -2.0]] {
            assert_eq!(d.step(&x, &[0.0]), vec![1.0, 0.0]);
        }
    }

    #[test]
    fn pendulum_rest_is_fixed_point() {
        let d = Dynamics::pendulum(9.81, 1.0, 1.0, 0.05, 0.1);
        d.validate().unwrap();
        assert_eq!(d.step(&[0.0, 0.0], &[0.0]), vec![0.0, 0.0]);
    }
}
