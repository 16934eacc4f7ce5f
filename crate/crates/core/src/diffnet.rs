//! Small feed-forward networks with exact reverse-mode gradients.
//!
//! Parameters live in one flat vector ([`ParamSet`]) so that the optimizer,
//! gradient clipping, checkpointing and finite-difference checks can all
//! treat a network as a plain slice of reals. [`Mlp`] knows the layout.
//!
//! Hidden layers compute `relu(layer_norm(W x + b))` when layer norm is
//! enabled and `relu(W x + b)` otherwise; the output layer is affine.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::{Deref, DerefMut};
use thiserror::Error;

/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite {0} (training diverged)")]
    NonFinite(&'static str),
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), NetError> {
    if expected == got {
        Ok(())
    } else {
        Err(NetError::ShapeMismatch {
            what,
            expected,
            got,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub use_layer_norm: bool,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            use_layer_norm: true,
            activation: Activation::Relu,
        }
    }

    pub fn without_layer_norm(mut self) -> Self {
        self.use_layer_norm = false;
        self
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(NetError::InvalidSpec(
                "input and output dims must be at least 1".into(),
            ));
        }
        if self.hidden_dims.contains(&0) {
            return Err(NetError::InvalidSpec(
                "hidden dims must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Flat parameter (or gradient) vector for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParamSet(pub Vec<f64>);

impl ParamSet {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn fill_zero(&mut self) {
        self.0.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamSet {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamSet {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamSet {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone)]
struct Layer {
    in_dim: usize,
    out_dim: usize,
    weight: usize,
    bias: usize,
    // offsets of gain and shift
    norm: Option<(usize, usize)>,
    hidden: bool,
}

/// Layout and evaluation logic for a network described by an [`MlpSpec`].
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
    num_params: usize,
}

/// Activations recorded by [`Mlp::forward_tape`] for a later backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    // acts[0] is the input, acts[l + 1] the output of layer l
    acts: Vec<Vec<f64>>,
    normed: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
    dz: Vec<f64>,
    dh: Vec<f64>,
    dx: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self, NetError> {
        spec.validate()?;
        let mut dims = vec![spec.input_dim];
        dims.extend(&spec.hidden_dims);
        dims.push(spec.output_dim);
        let n_layers = dims.len() - 1;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(n_layers);
        for (i, pair) in dims.windows(2).enumerate() {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            let hidden = i + 1 < n_layers;
            let weight = offset;
            offset += in_dim * out_dim;
            let bias = offset;
            offset += out_dim;
            let norm = if hidden && spec.use_layer_norm {
                let gain = offset;
                offset += out_dim;
                let shift = offset;
                offset += out_dim;
                Some((gain, shift))
            } else {
                None
            };
            layers.push(Layer {
                in_dim,
                out_dim,
                weight,
                bias,
                norm,
                hidden,
            });
        }
        Ok(Self {
            spec,
            layers,
            num_params: offset,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// zero biases, unit gain and zero shift. The output layer weights are
    /// multiplied by `output_scale`.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R, output_scale: f64) -> ParamSet {
        let mut p = vec![0.0; self.num_params];
        for layer in &self.layers {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            let scale = if layer.hidden { 1.0 } else { output_scale };
            for w in &mut p[layer.weight..layer.weight + layer.in_dim * layer.out_dim] {
                *w = rng.random_range(-bound..bound) * scale;
            }
            if let Some((gain, _)) = layer.norm {
                p[gain..gain + layer.out_dim]
                    .iter_mut()
                    .for_each(|g| *g = 1.0);
            }
        }
        ParamSet(p)
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>, NetError> {
        let mut tape = Tape::default();
        self.forward_tape(params, input, &mut tape)?;
        Ok(tape.output().to_vec())
    }

    /// Forward pass that records what [`Mlp::backward_tape`] needs.
    pub fn forward_tape<'t>(
        &self,
        params: &[f64],
        input: &[f64],
        tape: &'t mut Tape,
    ) -> Result<&'t [f64], NetError> {
        check_len("params", self.num_params, params.len())?;
        check_len("input", self.spec.input_dim, input.len())?;
        let n = self.layers.len();
        tape.acts.resize(n + 1, Vec::new());
        tape.normed.resize(n, Vec::new());
        tape.inv_std.resize(n, 0.0);
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(input);

        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            let x = &head[l];
            let out = &mut tail[0];
            out.clear();
            out.resize(layer.out_dim, 0.0);
            let w = &params[layer.weight..layer.weight + layer.in_dim * layer.out_dim];
            let b = &params[layer.bias..layer.bias + layer.out_dim];
            for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(layer.in_dim).zip(b)) {
                *o = bias + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
            }
            if !layer.hidden {
                continue;
            }
            if let Some((gain, shift)) = layer.norm {
                let width = layer.out_dim as f64;
                let mean = out.iter().sum::<f64>() / width;
                let var = out.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / width;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                tape.inv_std[l] = inv;
                let normed = &mut tape.normed[l];
                normed.clear();
                let g = &params[gain..gain + layer.out_dim];
                let s = &params[shift..shift + layer.out_dim];
                for (i, o) in out.iter_mut().enumerate() {
                    let xh = (*o - mean) * inv;
                    normed.push(xh);
                    *o = g[i] * xh + s[i];
                }
            }
            out.iter_mut().for_each(|o| *o = o.max(0.0));
        }
        Ok(tape.output())
    }

    /// Accumulates `d(output . out_grad)/d(params)` into `grads` and returns
    /// the gradient with respect to the recorded input.
    pub fn backward_tape(
        &self,
        params: &[f64],
        tape: &mut Tape,
        out_grad: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>, NetError> {
        check_len("params", self.num_params, params.len())?;
        check_len("grads", self.num_params, grads.len())?;
        check_len("output gradient", self.spec.output_dim, out_grad.len())?;
        if tape.acts.len() != self.layers.len() + 1 {
            return Err(NetError::InvalidSpec(
                "tape was not recorded by this network".into(),
            ));
        }
        let Tape {
            acts,
            normed,
            inv_std,
            dz,
            dh,
            dx,
        } = tape;
        dh.clear();
        dh.extend_from_slice(out_grad);

        for (l, layer) in self.layers.iter().enumerate().rev() {
            dz.clear();
            if layer.hidden {
                let h = &acts[l + 1];
                dz.extend(
                    dh.iter()
                        .zip(h)
                        .map(|(d, &h)| if h > 0.0 { *d } else { 0.0 }),
                );
                if let Some((gain, shift)) = layer.norm {
                    let xh = &normed[l];
                    let g = &params[gain..gain + layer.out_dim];
                    let width = layer.out_dim as f64;
                    let mut mean_d = 0.0;
                    let mut mean_dx = 0.0;
                    for i in 0..layer.out_dim {
                        let dy = dz[i];
                        grads[gain + i] += dy * xh[i];
                        grads[shift + i] += dy;
                        let dxh = dy * g[i];
                        dz[i] = dxh;
                        mean_d += dxh;
                        mean_dx += dxh * xh[i];
                    }
                    mean_d /= width;
                    mean_dx /= width;
                    let inv = inv_std[l];
                    for i in 0..layer.out_dim {
                        dz[i] = inv * (dz[i] - mean_d - xh[i] * mean_dx);
                    }
                }
            } else {
                dz.extend_from_slice(dh);
            }

            let x = &acts[l];
            let w = &params[layer.weight..layer.weight + layer.in_dim * layer.out_dim];
            dx.clear();
            dx.resize(layer.in_dim, 0.0);
            for (o, &d) in dz.iter().enumerate() {
                grads[layer.bias + o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = o * layer.in_dim;
                let gw = &mut grads[layer.weight + row..layer.weight + row + layer.in_dim];
                for ((gw, xi), (wi, dxi)) in gw
                    .iter_mut()
                    .zip(x)
                    .zip(w[row..row + layer.in_dim].iter().zip(dx.iter_mut()))
                {
                    *gw += d * xi;
                    *dxi += d * wi;
                }
            }
            std::mem::swap(dh, dx);
        }
        Ok(dh.clone())
    }

    /// Vector-Jacobian product of [`Mlp::forward`]: returns the parameter
    /// gradient and the input gradient for cotangent `out_grad`.
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        out_grad: &[f64],
    ) -> Result<(ParamSet, Vec<f64>), NetError> {
        let mut tape = Tape::default();
        self.forward_tape(params, input, &mut tape)?;
        let mut grads = ParamSet::zeros(self.num_params);
        let input_grad = self.backward_tape(params, &mut tape, out_grad, &mut grads)?;
        Ok((grads, input_grad))
    }
}

pub fn forward(spec: &MlpSpec, params: &ParamSet, input: &[f64]) -> Result<Vec<f64>, NetError> {
    Mlp::new(spec.clone())?.forward(params, input)
}

pub fn backward(
    spec: &MlpSpec,
    params: &ParamSet,
    input: &[f64],
    output_grad: &[f64],
) -> Result<(ParamSet, Vec<f64>), NetError> {
    Mlp::new(spec.clone())?.backward(params, input, output_grad)
}

/// Rescales `grads` in place so that its L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> Result<f64, NetError> {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(NetError::NonFinite("gradient"));
    }
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    Ok(norm)
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    pub fn num_params(&self) -> usize {
        self.first_moment.len()
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.first_moment, &self.second_moment)
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NetError> {
        check_len("params", self.first_moment.len(), params.len())?;
        check_len("grads", self.first_moment.len(), grads.len())?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
