//! Fits the 2-10-10-10-1 ReLU heading controller shipped in
//! `fixtures/unicycle_policy.json`.
//!
//! The target law points the unicycle at a waypoint 3 units above the goal
//! center, `θ = atan2(9.5 - y, 5 - x)`. The waypoint sits outside the domain,
//! so the law is smooth there and trajectories climb through the goal box.
//! Training is full-batch Adam on a 41x33 grid over the fixture domain,
//! followed by an exact least-squares refit of the output layer. Everything is
//! seeded, so rerunning reproduces the file bit for bit.
//!
//! cargo run --release -p nfl-reach --example fit_unicycle_policy -- fixtures/unicycle_policy.json

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use nfl_reach::nfl::{save_network, Activation, Layer, NeuralNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const AIM: [f64; 2] = [5.0, 9.5];
const DOMAIN: [[f64; 2]; 2] = [[-3.0, 7.0], [-1.0, 7.0]];
const WIDTHS: [usize; 4] = [10, 10, 10, 1];
const SEED: u64 = 20240605;
const EPOCHS: usize = 6000;

fn heading(p: [f64; 2]) -> f64 {
    (AIM[1] - p[1]).atan2(AIM[0] - p[0])
}

struct Net {
    w: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
}

impl Net {
    fn init(rng: &mut ChaCha8Rng) -> Self {
        let mut w = Vec::new();
        let mut b = Vec::new();
        let mut fan_in = 2;
        for &out in &WIDTHS {
            let s = (2.0 / fan_in as f64).sqrt();
            w.push(DMatrix::from_fn(out, fan_in, |_, _| s * (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt()));
            b.push(DVector::from_fn(out, |_, _| 0.1 * (rng.random::<f64>() * 2.0 - 1.0)));
            fan_in = out;
        }
        Net { w, b }
    }

    /// Activations per layer for a batch stored column-wise.
    fn forward(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        let last = self.w.len() - 1;
        for (i, (w, b)) in self.w.iter().zip(&self.b).enumerate() {
            let mut z = w * acts.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if i < last {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn params_mut(net: &mut Net) -> Vec<&mut f64> {
    let mut out: Vec<&mut f64> = Vec::new();
    for (w, b) in net.w.iter_mut().zip(net.b.iter_mut()) {
        out.extend(w.iter_mut());
        out.extend(b.iter_mut());
    }
    out
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/unicycle_policy.json".into()));
    let (nx, ny) = (41, 33);
    let mut pts = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let x = DOMAIN[0][0] + (DOMAIN[0][1] - DOMAIN[0][0]) * i as f64 / (nx - 1) as f64;
            let y = DOMAIN[1][0] + (DOMAIN[1][1] - DOMAIN[1][0]) * j as f64 / (ny - 1) as f64;
            pts.push([x, y]);
        }
    }
    let n = pts.len();
    let x = DMatrix::from_fn(2, n, |r, c| pts[c][r]);
    let y = DVector::from_iterator(n, pts.iter().map(|p| heading(*p)));

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut net = Net::init(&mut rng);
    let count = params_mut(&mut net).len();
    let mut adam = Adam { m: vec![0.0; count], v: vec![0.0; count], t: 0 };
    let (lr, b1, b2) = (3e-3, 0.9, 0.999);
    for epoch in 0..EPOCHS {
        let acts = net.forward(&x);
        let pred = acts.last().unwrap().row(0).transpose();
        let err = &pred - &y;
        if epoch % 1000 == 0 {
            eprintln!("epoch {epoch}: rmse {:.4}", (err.norm_squared() / n as f64).sqrt());
        }
        // backprop of mean squared error
        let mut delta = DMatrix::from_row_slice(1, n, (err * (2.0 / n as f64)).as_slice());
        let mut grads_w = vec![DMatrix::zeros(0, 0); net.w.len()];
        let mut grads_b = vec![DVector::zeros(0); net.w.len()];
        for l in (0..net.w.len()).rev() {
            grads_w[l] = &delta * acts[l].transpose();
            grads_b[l] = delta.column_sum();
            if l > 0 {
                let mut d = net.w[l].transpose() * &delta;
                d.zip_apply(&acts[l], |g, a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
                delta = d;
            }
        }
        let grads: Vec<f64> = grads_w.iter().zip(&grads_b).flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>()).collect();
        adam.t += 1;
        for (k, p) in params_mut(&mut net).into_iter().enumerate() {
            let g = grads[k];
            adam.m[k] = b1 * adam.m[k] + (1.0 - b1) * g;
            adam.v[k] = b2 * adam.v[k] + (1.0 - b2) * g * g;
            let mh = adam.m[k] / (1.0 - b1.powi(adam.t));
            let vh = adam.v[k] / (1.0 - b2.powi(adam.t));
            *p -= lr * mh / (vh.sqrt() + 1e-8);
        }
    }

    // exact least squares for the output layer on the trained features
    let acts = net.forward(&x);
    let feats = &acts[acts.len() - 2];
    let h = feats.nrows();
    let design = DMatrix::from_fn(n, h + 1, |r, c| if c < h { feats[(c, r)] } else { 1.0 });
    let ridge = DMatrix::<f64>::identity(h + 1, h + 1) * 1e-9;
    let coef = (design.transpose() * &design + ridge).lu().solve(&(design.transpose() * &y)).expect("normal equations solve");
    let last = net.w.len() - 1;
    net.w[last] = DMatrix::from_row_slice(1, h, &coef.as_slice()[..h]);
    net.b[last] = DVector::from_element(1, coef[h]);

    let layers = net
        .w
        .iter()
        .zip(&net.b)
        .enumerate()
        .map(|(i, (w, b))| Layer {
            weights: (0..w.nrows()).map(|r| w.row(r).iter().copied().collect()).collect(),
            bias: b.iter().copied().collect(),
            activation: if i == last { Activation::Linear } else { Activation::Relu },
        })
        .collect();
    let nn = NeuralNetwork::new(layers).expect("valid network");
    let rmse = (pts.iter().map(|p| (nn.forward(p)[0] - heading(*p)).powi(2)).sum::<f64>() / n as f64).sqrt();
    eprintln!("final rmse {rmse:.4} rad");
    save_network(&nn, &out).expect("write network");
}
