//! Minimal neural-network engine for the phase regressors.
//!
//! Supports exactly the layer set the predictor architectures need: dense,
//! 1-D convolution (valid padding), ReLU, flatten, dropout, and softplus,
//! with exact reverse-mode gradients and the Adam optimizer. Everything is
//! `f64` and deterministic given seeds.
//!
//! Activations are row-major 2-D matrices: one row per batch sample.
//! Convolutional activations flatten (channels, length) channel-major into
//! the row: channel `c` at position `p` lives at column `c * len + p`.

mod adam;
mod loss;
mod scaler;

pub use adam::{adam_step, AdamState};
pub use loss::{maple_loss, msle_loss};
pub use scaler::StandardScaler;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Batch-major activation matrix: (rows = samples, cols = features).
pub type Tensor2D = Array2<f64>;

/// One layer of a regressor network, with its parameters when it has any.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Affine map; weights are (input, output).
    Dense { w: Array2<f64>, b: Array1<f64> },
    /// 1-D convolution, valid padding. Weights are
    /// (in_channels * kernel, out_channels); the patch for output position
    /// `p` is `input[c, p * stride + dk]` at row `c * kernel + dk`.
    Conv1d {
        w: Array2<f64>,
        b: Array1<f64>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    /// Marks the transition from convolutional to dense processing. The
    /// 2-D representation is already flat, so this is an identity.
    Flatten,
    /// Inverted dropout: active only in training mode, scales kept units
    /// by 1 / (1 - rate).
    Dropout { rate: f64 },
    Softplus,
}

impl Layer {
    pub fn dense_seeded(input: usize, output: usize, seed: u64) -> Layer {
        let mut rng = seed::rng(seed);
        let limit = (6.0 / input as f64).sqrt();
        let w = Array2::from_shape_fn((input, output), |_| rng.gen_range(-limit..=limit));
        Layer::Dense {
            w,
            b: Array1::zeros(output),
        }
    }

    pub fn conv1d_seeded(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        seed: u64,
    ) -> Layer {
        let mut rng = seed::rng(seed);
        let fan_in = in_channels * kernel;
        let limit = (6.0 / fan_in as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, out_channels), |_| rng.gen_range(-limit..=limit));
        Layer::Conv1d {
            w,
            b: Array1::zeros(out_channels),
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    /// Weight/bias views for parameterized layers.
    pub fn params(&self) -> Option<(&Array2<f64>, &Array1<f64>)> {
        match self {
            Layer::Dense { w, b } | Layer::Conv1d { w, b, .. } => Some((w, b)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Array2<f64>, &mut Array1<f64>)> {
        match self {
            Layer::Dense { w, b } | Layer::Conv1d { w, b, .. } => Some((w, b)),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().map_or(0, |(w, b)| w.len() + b.len())
    }
}

/// A sequence of layers applied left to right.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Net {
    pub layers: Vec<Layer>,
}

/// Per-layer data retained by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub enum CacheAux {
    None,
    /// Mask already divided by the keep probability.
    DropoutMask(Array2<f64>),
    /// Unfolded input patches of a conv layer: (batch * out_len, in_channels * kernel).
    ConvPatches(Array2<f64>),
}

/// Activations and auxiliary data from one forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Input of each layer; `inputs[i]` feeds `layers[i]`.
    pub inputs: Vec<Tensor2D>,
    pub aux: Vec<CacheAux>,
    pub training: bool,
}

/// Per-parameter gradients, mirroring the net's layer list.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Option<(Array2<f64>, Array1<f64>)>>,
}

impl Net {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Runs the network, retaining what backward needs. Dropout masks are
    /// derived from `dropout_seed` and the dropout layer's index, so a
    /// fixed seed fixes the masks.
    pub fn forward(
        &self,
        x: &Tensor2D,
        training: bool,
        dropout_seed: u64,
    ) -> Result<(Tensor2D, Cache)> {
        let mut cache = Cache {
            inputs: Vec::with_capacity(self.layers.len()),
            aux: Vec::with_capacity(self.layers.len()),
            training,
        };
        let mut current = x.clone();
        for (index, layer) in self.layers.iter().enumerate() {
            cache.inputs.push(current.clone());
            let (next, aux) = self.apply(layer, index, &current, training, dropout_seed)?;
            cache.aux.push(aux);
            current = next;
        }
        Ok((current, cache))
    }

    /// Inference-only forward pass without caching. Dropout is inactive.
    pub fn predict(&self, x: &Tensor2D) -> Result<Tensor2D> {
        let mut current = x.clone();
        for (index, layer) in self.layers.iter().enumerate() {
            let (next, _) = self.apply(layer, index, &current, false, 0)?;
            current = next;
        }
        Ok(current)
    }

    fn apply(
        &self,
        layer: &Layer,
        index: usize,
        input: &Tensor2D,
        training: bool,
        dropout_seed: u64,
    ) -> Result<(Tensor2D, CacheAux)> {
        match layer {
            Layer::Dense { w, b } => {
                if input.ncols() != w.nrows() {
                    return Err(Error::Internal(format!(
                        "layer {index} (dense): input width {} != expected {}",
                        input.ncols(),
                        w.nrows()
                    )));
                }
                let mut out = input.dot(w);
                out += &b.view().insert_axis(ndarray::Axis(0));
                Ok((out, CacheAux::None))
            }
            Layer::Conv1d {
                w,
                b,
                in_channels,
                kernel,
                stride,
                out_channels,
            } => {
                let patches = im2col(input, index, *in_channels, *kernel, *stride)?;
                let out_len = patches.nrows() / input.nrows();
                let mut prod = patches.dot(w);
                prod += &b.view().insert_axis(ndarray::Axis(0));
                let out = fold_channels(&prod, input.nrows(), out_len, *out_channels);
                Ok((out, CacheAux::ConvPatches(patches)))
            }
            Layer::Relu => Ok((input.mapv(|v| v.max(0.0)), CacheAux::None)),
            Layer::Flatten => Ok((input.clone(), CacheAux::None)),
            Layer::Dropout { rate } => {
                if !training || *rate == 0.0 {
                    return Ok((input.clone(), CacheAux::None));
                }
                let keep = 1.0 - rate;
                let mut rng = seed::rng(seed::child_seed_n(dropout_seed, "dropout", index as u64));
                let mask = Array2::from_shape_fn(input.raw_dim(), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                Ok((input * &mask, CacheAux::DropoutMask(mask)))
            }
            Layer::Softplus => Ok((input.mapv(softplus), CacheAux::None)),
        }
    }

    /// Exact gradients of the scalar loss whose per-output gradient is
    /// `d_out`, for every parameter. The loss gradient is expected to
    /// already carry any 1/n batch factor.
    pub fn backward(&self, cache: &Cache, d_out: &Tensor2D) -> Result<Gradients> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Internal(format!(
                "cache holds {} layers, net has {}",
                cache.inputs.len(),
                self.layers.len()
            )));
        }
        let mut grads: Vec<Option<(Array2<f64>, Array1<f64>)>> = vec![None; self.layers.len()];
        let mut upstream = d_out.clone();
        for index in (0..self.layers.len()).rev() {
            let input = &cache.inputs[index];
            match &self.layers[index] {
                Layer::Dense { w, .. } => {
                    let d_w = input.t().dot(&upstream);
                    let d_b = upstream.sum_axis(ndarray::Axis(0));
                    let d_in = upstream.dot(&w.t());
                    grads[index] = Some((d_w, d_b));
                    upstream = d_in;
                }
                Layer::Conv1d {
                    w,
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    ..
                } => {
                    let patches = match &cache.aux[index] {
                        CacheAux::ConvPatches(p) => p,
                        _ => {
                            return Err(Error::Internal(format!(
                                "layer {index}: cache does not carry conv patches"
                            )))
                        }
                    };
                    let batch = input.nrows();
                    let out_len = patches.nrows() / batch;
                    // (batch, out_ch * out_len) -> (batch * out_len, out_ch)
                    let d_prod = unfold_channels(&upstream, batch, out_len, *out_channels);
                    let d_w = patches.t().dot(&d_prod);
                    let d_b = d_prod.sum_axis(ndarray::Axis(0));
                    let d_patches = d_prod.dot(&w.t());
                    let d_in = col2im(
                        &d_patches,
                        batch,
                        input.ncols(),
                        *in_channels,
                        *kernel,
                        *stride,
                        out_len,
                    );
                    grads[index] = Some((d_w, d_b));
                    upstream = d_in;
                }
                Layer::Relu => {
                    upstream.zip_mut_with(input, |g, &x| {
                        if x <= 0.0 {
                            *g = 0.0;
                        }
                    });
                }
                Layer::Flatten => {}
                Layer::Dropout { .. } => {
                    if let CacheAux::DropoutMask(mask) = &cache.aux[index] {
                        upstream *= mask;
                    }
                }
                Layer::Softplus => {
                    upstream.zip_mut_with(input, |g, &x| *g *= sigmoid(x));
                }
            }
        }
        Ok(Gradients { layers: grads })
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] on positive values.
pub fn inverse_softplus(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    if y < 1.0 {
        y.exp_m1().ln()
    } else {
        y + (-(-y).exp()).ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Unfolds (batch, in_ch * in_len) into conv patches
/// (batch * out_len, in_ch * kernel).
fn im2col(
    input: &Tensor2D,
    layer_index: usize,
    in_channels: usize,
    kernel: usize,
    stride: usize,
) -> Result<Array2<f64>> {
    let width = input.ncols();
    if in_channels == 0 || width % in_channels != 0 {
        return Err(Error::Internal(format!(
            "layer {layer_index} (conv1d): input width {width} not divisible by {in_channels} channels"
        )));
    }
    let in_len = width / in_channels;
    if in_len < kernel {
        return Err(Error::Internal(format!(
            "layer {layer_index} (conv1d): input length {in_len} shorter than kernel {kernel}"
        )));
    }
    let out_len = (in_len - kernel) / stride + 1;
    let batch = input.nrows();
    let mut patches = Array2::zeros((batch * out_len, in_channels * kernel));
    for b in 0..batch {
        let row = input.row(b);
        for p in 0..out_len {
            let mut patch = patches.row_mut(b * out_len + p);
            for c in 0..in_channels {
                let base = c * in_len + p * stride;
                for dk in 0..kernel {
                    patch[c * kernel + dk] = row[base + dk];
                }
            }
        }
    }
    Ok(patches)
}

/// Scatters patch gradients back onto the input layout.
fn col2im(
    d_patches: &Array2<f64>,
    batch: usize,
    width: usize,
    in_channels: usize,
    kernel: usize,
    stride: usize,
    out_len: usize,
) -> Array2<f64> {
    let in_len = width / in_channels;
    let mut d_in = Array2::zeros((batch, width));
    for b in 0..batch {
        let mut row = d_in.row_mut(b);
        for p in 0..out_len {
            let patch = d_patches.row(b * out_len + p);
            for c in 0..in_channels {
                let base = c * in_len + p * stride;
                for dk in 0..kernel {
                    row[base + dk] += patch[c * kernel + dk];
                }
            }
        }
    }
    d_in
}

/// (batch * out_len, out_ch) -> (batch, out_ch * out_len), channel-major.
fn fold_channels(prod: &Array2<f64>, batch: usize, out_len: usize, out_channels: usize) -> Tensor2D {
    let mut out = Array2::zeros((batch, out_channels * out_len));
    for b in 0..batch {
        let mut row = out.row_mut(b);
        for p in 0..out_len {
            let src = prod.row(b * out_len + p);
            for co in 0..out_channels {
                row[co * out_len + p] = src[co];
            }
        }
    }
    out
}

/// Inverse of [`fold_channels`].
fn unfold_channels(
    d_out: &Tensor2D,
    batch: usize,
    out_len: usize,
    out_channels: usize,
) -> Array2<f64> {
    let mut d_prod = Array2::zeros((batch * out_len, out_channels));
    for b in 0..batch {
        let row = d_out.row(b);
        for p in 0..out_len {
            let mut dst = d_prod.row_mut(b * out_len + p);
            for co in 0..out_channels {
                dst[co] = row[co * out_len + p];
            }
        }
    }
    d_prod
}
