use super::{DenseNet, Gradients};
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};

/// Bias-corrected Adam with per-buffer moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        let shapes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Non-finite gradients abort before any parameter
    /// changes, naming the first offending layer.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        let gs = grads.slices();
        let owners = grads.slice_layers();
        if gs.len() != self.m.len() || gs.iter().zip(&self.m).any(|(g, m)| g.len() != m.len()) {
            return Err(Error::contract("gradient shapes do not match the optimizer state"));
        }
        for (g, &layer) in gs.iter().zip(&owners) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: "gradient".into(), layer });
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let params = net.param_slices_mut();
        for (((p, g), m), v) in params.into_iter().zip(gs).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.f64(self.lr);
        enc.f64(self.beta1);
        enc.f64(self.beta2);
        enc.f64(self.eps);
        enc.u64(self.step);
        enc.usize(self.m.len());
        for (m, v) in self.m.iter().zip(&self.v) {
            enc.f64_slice(m);
            enc.f64_slice(v);
        }
    }

    pub fn decode(dec: &mut Decoder) -> Result<Self> {
        let lr = dec.f64()?;
        let beta1 = dec.f64()?;
        let beta2 = dec.f64()?;
        let eps = dec.f64()?;
        let step = dec.u64()?;
        let n = dec.usize()?;
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            m.push(dec.f64_vec()?);
            v.push(dec.f64_vec()?);
        }
        Ok(Self { lr, beta1, beta2, eps, step, m, v })
    }
}
