//! Small dense networks with hand-written reverse-mode gradients.
//!
//! Networks are a stack of affine layers (weights stored `out × in`, row-major)
//! each followed by an activation. A forward pass can record a [`Tape`] that
//! `backward` consumes; tapes carry the parameter version they were recorded
//! against so a tape from before an optimizer step is rejected.
//!
//! Layers may carry factorised Gaussian noise. Noise is only applied after
//! [`DenseNet::resample_noise`] and is switched off by
//! [`DenseNet::disable_noise`], in which case the layer is exactly its mean
//! affine map.

mod adam;
mod matrix;
mod params;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};

pub use adam::Adam;
pub use matrix::{axpy, dot, Matrix};
pub use params::{count_params, HeadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Tanh),
            t => Err(Error::Integrity(format!("unknown activation tag {t}"))),
        }
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Learned noise scales plus the currently sampled factorised noise.
#[derive(Debug, Clone, PartialEq)]
struct Noise {
    sigma_w: Vec<f64>,
    sigma_b: Vec<f64>,
    eps_in: Vec<f64>,
    eps_out: Vec<f64>,
    active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
    noise: Option<Noise>,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn is_noisy(&self) -> bool {
        self.noise.is_some()
    }

    fn noise_active(&self) -> Option<&Noise> {
        self.noise.as_ref().filter(|n| n.active)
    }

    fn forward_row(&self, x: &[f64], z: &mut [f64], scratch: &mut Vec<f64>, use_noise: bool) {
        let noise = if use_noise { self.noise_active() } else { None };
        match noise {
            None => {
                for (j, zj) in z.iter_mut().enumerate() {
                    let w = &self.weights[j * self.inputs..(j + 1) * self.inputs];
                    *zj = self.activation.apply(self.biases[j] + dot(w, x));
                }
            }
            Some(n) => {
                scratch.clear();
                scratch.extend(x.iter().zip(&n.eps_in).map(|(a, e)| a * e));
                for (j, zj) in z.iter_mut().enumerate() {
                    let row = j * self.inputs..(j + 1) * self.inputs;
                    let pre = self.biases[j]
                        + n.sigma_b[j] * n.eps_out[j]
                        + dot(&self.weights[row.clone()], x)
                        + n.eps_out[j] * dot(&n.sigma_w[row], scratch);
                    *zj = self.activation.apply(pre);
                }
            }
        }
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Matrix>,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("tape has at least the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.acts[0]
    }
}

/// Gradient (or tangent) buffers shaped like a network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerGrad {
    w: Vec<f64>,
    b: Vec<f64>,
    sigma_w: Vec<f64>,
    sigma_b: Vec<f64>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &self.layers {
            out.push(l.w.as_slice());
            out.push(l.b.as_slice());
            if !l.sigma_w.is_empty() {
                out.push(l.sigma_w.as_slice());
                out.push(l.sigma_b.as_slice());
            }
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &mut self.layers {
            out.push(l.w.as_mut_slice());
            out.push(l.b.as_mut_slice());
            if !l.sigma_w.is_empty() {
                out.push(l.sigma_w.as_mut_slice());
                out.push(l.sigma_b.as_mut_slice());
            }
        }
        out
    }

    /// Layer index owning each slice returned by [`Gradients::slices`].
    pub fn slice_layers(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let n = if l.sigma_w.is_empty() { 2 } else { 4 };
            out.extend(std::iter::repeat_n(i, n));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::contract(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                self.len()
            )));
        }
        let mut off = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::contract("gradient shapes differ"));
        }
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            if a.len() != b.len() {
                return Err(Error::contract("gradient shapes differ"));
            }
            axpy(a, 1.0, b);
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.slices().iter().map(|s| dot(s, s)).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// A stack of affine layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
    init_seed: u64,
    version: u64,
}

impl DenseNet {
    /// `sizes` lists layer widths including input and output, e.g. `[4, 64, 64, 8]`.
    /// Hidden layers use `hidden`, the last layer uses `output`. Weights and
    /// biases are drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::config("a network needs at least input and output sizes"));
        }
        let acts = (1..sizes.len())
            .map(|i| if i + 1 == sizes.len() { output } else { hidden })
            .collect::<Vec<_>>();
        Self::with_activations(sizes, &acts, seed)
    }

    pub fn with_activations(sizes: &[usize], acts: &[Activation], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || acts.len() + 1 != sizes.len() {
            return Err(Error::config("layer sizes and activations disagree"));
        }
        if sizes.contains(&0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        let mut rng = crate::seed::stream_rng(seed, crate::seed::STREAM_INIT);
        let layers = sizes
            .windows(2)
            .zip(acts)
            .map(|(w, &activation)| {
                let (inputs, outputs) = (w[0], w[1]);
                let bound = 1.0 / (inputs as f64).sqrt();
                let weights = (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect();
                let biases = (0..outputs).map(|_| rng.random_range(-bound..bound)).collect();
                Layer { inputs, outputs, weights, biases, activation, noise: None }
            })
            .collect();
        Ok(Self { layers, init_seed: seed, version: fresh_version() })
    }

    /// Turns every layer into a noisy layer with `sigma = sigma0 / √fan_in`.
    pub fn make_noisy(&mut self, sigma0: f64) {
        for l in &mut self.layers {
            let s = sigma0 / (l.inputs as f64).sqrt();
            l.noise = Some(Noise {
                sigma_w: vec![s; l.inputs * l.outputs],
                sigma_b: vec![s; l.outputs],
                eps_in: vec![0.0; l.inputs],
                eps_out: vec![0.0; l.outputs],
                active: false,
            });
        }
        self.version = fresh_version();
    }

    /// Draws fresh factorised noise for every noisy layer and activates it.
    pub fn resample_noise<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let f = |x: f64| x.signum() * x.abs().sqrt();
        for l in &mut self.layers {
            if let Some(n) = &mut l.noise {
                for e in n.eps_in.iter_mut().chain(n.eps_out.iter_mut()) {
                    let z: f64 = StandardNormal.sample(rng);
                    *e = f(z);
                }
                n.active = true;
            }
        }
        self.version = fresh_version();
    }

    /// Evaluation mode: noisy layers reduce to their mean parameters.
    pub fn disable_noise(&mut self) {
        let mut changed = false;
        for l in &mut self.layers {
            if let Some(n) = &mut l.noise {
                changed |= n.active;
                n.active = false;
            }
        }
        if changed {
            self.version = fresh_version();
        }
    }

    pub fn is_noisy(&self) -> bool {
        self.layers.iter().any(Layer::is_noisy)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.layers[0].inputs];
        v.extend(self.layers.iter().map(|l| l.outputs));
        v
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Number of mean (non-noise) parameters.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// All trainable parameter buffers in a fixed order: per layer weights,
    /// biases and, for noisy layers, the two noise-scale buffers.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &self.layers {
            out.push(l.weights.as_slice());
            out.push(l.biases.as_slice());
            if let Some(n) = &l.noise {
                out.push(n.sigma_w.as_slice());
                out.push(n.sigma_b.as_slice());
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.version = fresh_version();
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &mut self.layers {
            out.push(l.weights.as_mut_slice());
            out.push(l.biases.as_mut_slice());
            if let Some(n) = &mut l.noise {
                out.push(n.sigma_w.as_mut_slice());
                out.push(n.sigma_b.as_mut_slice());
            }
        }
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.param_slices().iter().map(|s| s.len()).sum();
        if flat.len() != total {
            return Err(Error::contract(format!(
                "flat parameter vector has {} entries, expected {total}",
                flat.len()
            )));
        }
        let mut off = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    let noisy = l.noise.is_some();
                    LayerGrad {
                        w: vec![0.0; l.weights.len()],
                        b: vec![0.0; l.biases.len()],
                        sigma_w: if noisy { vec![0.0; l.weights.len()] } else { Vec::new() },
                        sigma_b: if noisy { vec![0.0; l.biases.len()] } else { Vec::new() },
                    }
                })
                .collect(),
        }
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_size() {
            return Err(Error::contract(format!(
                "input has {} features, network expects {}",
                input.cols(),
                self.input_size()
            )));
        }
        Ok(())
    }

    fn layer_forward(&self, l: &Layer, x: &Matrix, use_noise: bool) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), l.outputs);
        let mut scratch = Vec::new();
        for r in 0..x.rows() {
            l.forward_row(x.row(r), out.row_mut(r), &mut scratch, use_noise);
        }
        out
    }

    /// Forward pass recording a tape for [`DenseNet::backward`].
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, Tape)> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        for l in &self.layers {
            let next = self.layer_forward(l, acts.last().expect("non-empty"), true);
            acts.push(next);
        }
        let out = acts.last().expect("non-empty").clone();
        Ok((out, Tape { version: self.version, acts }))
    }

    /// Forward pass without a tape.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.predict_with(input, true)
    }

    /// Forward pass through the mean parameters, ignoring any sampled noise.
    pub fn predict_mean(&self, input: &Matrix) -> Result<Matrix> {
        self.predict_with(input, false)
    }

    fn predict_with(&self, input: &Matrix, use_noise: bool) -> Result<Matrix> {
        self.check_input(input)?;
        let mut x = self.layer_forward(&self.layers[0], input, use_noise);
        for l in &self.layers[1..] {
            x = self.layer_forward(l, &x, use_noise);
        }
        Ok(x)
    }

    /// Single-sample forward pass.
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.predict_one_with(input, true)
    }

    /// Single-sample forward pass through the mean parameters.
    pub fn predict_one_mean(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.predict_one_with(input, false)
    }

    fn predict_one_with(&self, input: &[f64], use_noise: bool) -> Result<Vec<f64>> {
        if input.len() != self.input_size() {
            return Err(Error::contract(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.input_size()
            )));
        }
        let mut scratch = Vec::new();
        let mut x = input.to_vec();
        for l in &self.layers {
            let mut z = vec![0.0; l.outputs];
            l.forward_row(&x, &mut z, &mut scratch, use_noise);
            x = z;
        }
        Ok(x)
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        if tape.version != self.version || tape.acts.len() != self.layers.len() + 1 {
            return Err(Error::contract("tape does not match the current network parameters"));
        }
        Ok(())
    }

    /// Reverse-mode pass: gradients of `Σ output_grad ⊙ output` with respect
    /// to every parameter (summed over the batch) and to the input.
    pub fn backward(&self, tape: &Tape, output_grad: &Matrix) -> Result<(Gradients, Matrix)> {
        self.check_tape(tape)?;
        let out = tape.output();
        if output_grad.rows() != out.rows() || output_grad.cols() != out.cols() {
            return Err(Error::contract("output gradient shape does not match the forward output"));
        }
        let mut grads = self.zero_grads();
        let mut delta = output_grad.clone();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let x = &tape.acts[li];
            let y = &tape.acts[li + 1];
            for (d, &yv) in delta.data_mut().iter_mut().zip(y.data()) {
                *d *= l.activation.derivative_from_output(yv);
            }
            let g = &mut grads.layers[li];
            let mut dx = Matrix::zeros(x.rows(), l.inputs);
            let noise = l.noise_active();
            let mut xe = vec![0.0; l.inputs];
            for r in 0..x.rows() {
                let xr = x.row(r);
                let dr = delta.row(r);
                if let Some(n) = noise {
                    for ((o, a), e) in xe.iter_mut().zip(xr).zip(&n.eps_in) {
                        *o = a * e;
                    }
                }
                let dxr = dx.row_mut(r);
                for (j, &dz) in dr.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    let row = j * l.inputs..(j + 1) * l.inputs;
                    g.b[j] += dz;
                    axpy(&mut g.w[row.clone()], dz, xr);
                    axpy(dxr, dz, &l.weights[row.clone()]);
                    if let Some(n) = noise {
                        let de = dz * n.eps_out[j];
                        g.sigma_b[j] += de;
                        axpy(&mut g.sigma_w[row.clone()], de, &xe);
                        // dx_i += de · σ_ji · ε_in_i
                        for ((d, s), e) in dxr.iter_mut().zip(&n.sigma_w[row]).zip(&n.eps_in) {
                            *d += de * s * e;
                        }
                    }
                }
            }
            delta = dx;
        }
        Ok((grads, delta))
    }

    /// Forward-mode directional derivative of the output with respect to the
    /// parameters along `tangent`, evaluated at the taped point.
    pub fn jvp(&self, tape: &Tape, tangent: &Gradients) -> Result<Matrix> {
        self.check_tape(tape)?;
        if self.layers.iter().any(|l| l.noise_active().is_some()) {
            return Err(Error::contract("jvp is not defined with active parameter noise"));
        }
        if tangent.layers.len() != self.layers.len() {
            return Err(Error::contract("tangent shape does not match the network"));
        }
        let rows = tape.input().rows();
        let mut dx = Matrix::zeros(rows, self.input_size());
        for (li, l) in self.layers.iter().enumerate() {
            let x = &tape.acts[li];
            let y = &tape.acts[li + 1];
            let t = &tangent.layers[li];
            let mut dz = Matrix::zeros(rows, l.outputs);
            for r in 0..rows {
                let (xr, dxr) = (x.row(r), dx.row(r));
                let yr = y.row(r);
                for (j, out) in dz.row_mut(r).iter_mut().enumerate() {
                    let row = j * l.inputs..(j + 1) * l.inputs;
                    let pre = t.b[j] + dot(&t.w[row.clone()], xr) + dot(&l.weights[row], dxr);
                    *out = pre * l.activation.derivative_from_output(yr[j]);
                }
            }
            dx = dz;
        }
        Ok(dx)
    }

    pub fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// `self ← (1 − τ)·self + τ·online`, elementwise over every parameter buffer.
    pub fn soft_update_from(&mut self, online: &DenseNet, tau: f64) -> Result<()> {
        if self.layer_sizes() != online.layer_sizes() || self.is_noisy() != online.is_noisy() {
            return Err(Error::contract("soft update between networks of different shapes"));
        }
        let src = online.param_slices();
        for (dst, src) in self.param_slices_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (1.0 - tau) * *d + tau * s;
            }
        }
        Ok(())
    }

    /// Copies parameters (and noise scales) from a network of the same shape.
    pub fn copy_from(&mut self, online: &DenseNet) -> Result<()> {
        if self.layer_sizes() != online.layer_sizes() || self.is_noisy() != online.is_noisy() {
            return Err(Error::contract("copy between networks of different shapes"));
        }
        let version = fresh_version();
        *self = online.clone();
        self.version = version;
        Ok(())
    }

    /// Binary encoding: header (format version, sizes, activation tags, noise
    /// flags, init seed) followed by row-major parameter buffers.
    pub fn encode(&self, enc: &mut Encoder) {
        enc.u32(NET_FORMAT_VERSION);
        enc.u64(self.init_seed);
        enc.usize(self.layers.len());
        for l in &self.layers {
            enc.usize(l.inputs);
            enc.usize(l.outputs);
            enc.u8(l.activation.tag());
            enc.bool(l.noise.is_some());
        }
        for l in &self.layers {
            enc.f64_slice(&l.weights);
            enc.f64_slice(&l.biases);
            if let Some(n) = &l.noise {
                enc.f64_slice(&n.sigma_w);
                enc.f64_slice(&n.sigma_b);
                enc.f64_slice(&n.eps_in);
                enc.f64_slice(&n.eps_out);
                enc.bool(n.active);
            }
        }
    }

    pub fn decode(dec: &mut Decoder) -> Result<Self> {
        let version = dec.u32()?;
        if version != NET_FORMAT_VERSION {
            return Err(Error::IncompatibleVersion { found: version, expected: NET_FORMAT_VERSION });
        }
        let init_seed = dec.u64()?;
        let n = dec.usize()?;
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            let inputs = dec.usize()?;
            let outputs = dec.usize()?;
            let act = Activation::from_tag(dec.u8()?)?;
            let noisy = dec.bool()?;
            shapes.push((inputs, outputs, act, noisy));
        }
        let mut layers = Vec::with_capacity(n);
        for (inputs, outputs, activation, noisy) in shapes {
            let weights = dec.f64_vec_exact(inputs * outputs)?;
            let biases = dec.f64_vec_exact(outputs)?;
            let noise = if noisy {
                Some(Noise {
                    sigma_w: dec.f64_vec_exact(inputs * outputs)?,
                    sigma_b: dec.f64_vec_exact(outputs)?,
                    eps_in: dec.f64_vec_exact(inputs)?,
                    eps_out: dec.f64_vec_exact(outputs)?,
                    active: dec.bool()?,
                })
            } else {
                None
            };
            layers.push(Layer { inputs, outputs, weights, biases, activation, noise });
        }
        for w in layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::Integrity("adjacent layer sizes disagree".into()));
            }
        }
        Ok(Self { layers, init_seed, version: fresh_version() })
    }
}

pub const NET_FORMAT_VERSION: u32 = 1;
