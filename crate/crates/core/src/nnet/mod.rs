//! Dense feed-forward networks with batch normalization and exact backprop.
//!
//! Hidden layers compute `ReLU(BN(W x + b))`; the output layer computes
//! `sigmoid(W x + b)` without normalization. Batches are row-major
//! `(batch, features)` arrays. Everything runs in `f64`.

mod adam;

pub use adam::{AdamConfig, AdamState};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    HiddenBnRelu,
    OutputSigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub kind: LayerKind,
}

impl LayerSpec {
    /// Layer chain for node counts `{l_0, l_1, ..., l_L}`: every layer but the
    /// last is a hidden layer.
    pub fn chain(shape: &[usize]) -> Result<Vec<LayerSpec>> {
        if shape.len() < 2 {
            return Err(Error::invalid("network shape needs at least input and output sizes"));
        }
        let n = shape.len() - 1;
        let specs: Vec<LayerSpec> = shape
            .windows(2)
            .enumerate()
            .map(|(idx, w)| LayerSpec {
                in_dim: w[0],
                out_dim: w[1],
                kind: if idx + 1 == n { LayerKind::OutputSigmoid } else { LayerKind::HiddenBnRelu },
            })
            .collect();
        validate_chain(&specs)?;
        Ok(specs)
    }
}

pub fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    let Some(last) = specs.last() else {
        return Err(Error::invalid("network needs at least one layer"));
    };
    if last.kind != LayerKind::OutputSigmoid {
        return Err(Error::invalid("last layer must be the sigmoid output layer"));
    }
    for (idx, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::invalid(format!("layer {idx} has a zero dimension")));
        }
        if idx + 1 < specs.len() && s.kind != LayerKind::HiddenBnRelu {
            return Err(Error::invalid(format!("layer {idx}: only the last layer may be an output layer")));
        }
        if idx > 0 && specs[idx - 1].out_dim != s.in_dim {
            return Err(Error::invalid(format!(
                "layer {idx} expects {} inputs but previous layer emits {}",
                s.in_dim,
                specs[idx - 1].out_dim
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(dim: usize) -> Self {
        Self {
            scale: Array1::ones(dim),
            shift: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub spec: LayerSpec,
    /// `(out_dim, in_dim)`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<DenseLayer>,
}

/// Gradients (or ADAM moments) congruent with the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub bn_scale: Option<Array1<f64>>,
    pub bn_shift: Option<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<LayerGrads>,
}

impl NetworkGrads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerGrads {
                weight: Array2::zeros(l.weight.raw_dim()),
                bias: Array1::zeros(l.bias.len()),
                bn_scale: l.bn.as_ref().map(|bn| Array1::zeros(bn.scale.len())),
                bn_shift: l.bn.as_ref().map(|bn| Array1::zeros(bn.shift.len())),
            })
            .collect();
        Self { layers }
    }

    /// Flat views in the same order as [`NetworkParams::trainable_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let (Some(s), Some(b)) = (&l.bn_scale, &l.bn_shift) {
                out.push(s.as_slice().expect("standard layout"));
                out.push(b.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
            if let (Some(s), Some(b)) = (&mut l.bn_scale, &mut l.bn_shift) {
                out.push(s.as_slice_mut().expect("standard layout"));
                out.push(b.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Debug, Clone)]
struct HiddenCache {
    input: Array2<f64>,
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
    /// Post-BN, pre-ReLU values.
    activation_in: Array2<f64>,
}

/// Intermediate values of one train-mode forward pass, consumed by
/// [`NetworkParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    hidden: Vec<HiddenCache>,
    output_input: Array2<f64>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }

    /// Per hidden layer `(mean, population variance)` of the pre-BN batch.
    pub fn batch_stats(&self) -> impl Iterator<Item = (&Array1<f64>, &Array1<f64>)> {
        self.hidden.iter().map(|h| (&h.batch_mean, &h.batch_var))
    }

    /// Sign pattern of every ReLU input. Finite-difference checks use this to
    /// detect perturbations that cross a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.hidden
            .iter()
            .flat_map(|h| h.activation_in.iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// Largest double below one; keeps sigmoid outputs strictly inside (0, 1).
const SIGMOID_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

#[inline]
fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, SIGMOID_CEIL)
}

fn affine(input: &ArrayView2<f64>, layer: &DenseLayer) -> Array2<f64> {
    let mut z = input.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

fn layer_inference(layer: &DenseLayer, input: ArrayView2<f64>) -> Array2<f64> {
    let mut z = affine(&input, layer);
    match &layer.bn {
        Some(bn) => {
            let inv_std = bn.running_var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
            let gain = &bn.scale * &inv_std;
            let offset = &bn.shift - &(&bn.running_mean * &gain);
            Zip::from(z.rows_mut()).for_each(|mut row| {
                Zip::from(&mut row).and(&gain).and(&offset).for_each(|v, &g, &o| {
                    *v = (*v * g + o).max(0.0);
                });
            });
        }
        None => z.mapv_inplace(sigmoid),
    }
    z
}

impl NetworkParams {
    /// Glorot-uniform weights, zero biases, identity batch norm.
    pub fn init(specs: &[LayerSpec], rng: &mut SimRng) -> Result<Self> {
        validate_chain(specs)?;
        let layers = specs
            .iter()
            .map(|&spec| {
                let bound = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
                let weight =
                    Array2::from_shape_simple_fn((spec.out_dim, spec.in_dim), || rng.random_range(-bound..=bound));
                DenseLayer {
                    spec,
                    weight,
                    bias: Array1::zeros(spec.out_dim),
                    bn: (spec.kind == LayerKind::HiddenBnRelu).then(|| BatchNorm::new(spec.out_dim)),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.spec.out_dim).unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        NetworkGrads::zeros_like(self).slices().iter().map(|s| s.len()).sum()
    }

    /// Flat mutable views of trainable parameters (weights, biases, BN scale
    /// and shift); running statistics are excluded.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut l.bn {
                out.push(bn.scale.as_slice_mut().expect("standard layout"));
                out.push(bn.shift.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    fn check_input(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                inputs.ncols()
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass (batch norm uses running statistics).
    pub fn infer(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&inputs)?;
        let mut act = inputs.to_owned();
        for layer in &self.layers {
            act = layer_inference(layer, act.view());
        }
        Ok(act)
    }

    pub fn forward(&self, inputs: ArrayView2<f64>, mode: Mode) -> Result<(Array2<f64>, Option<ForwardCache>)> {
        match mode {
            Mode::Inference => Ok((self.infer(inputs)?, None)),
            Mode::Train => {
                let cache = self.forward_train(inputs)?;
                Ok((cache.output.clone(), Some(cache)))
            }
        }
    }

    /// Train-mode forward pass normalizing with batch statistics. Running
    /// statistics are not touched; see [`NetworkParams::update_running_stats`].
    pub fn forward_train(&self, inputs: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&inputs)?;
        let n = inputs.nrows();
        if n < 2 {
            return Err(Error::invalid("train-mode forward needs a batch of at least 2"));
        }
        let mut act = inputs.to_owned();
        let mut hidden = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let last = self.layers.len() - 1;
        for layer in &self.layers[..last] {
            let bn = layer.bn.as_ref().expect("hidden layer has batch norm");
            let z = affine(&act.view(), layer);
            let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
            let centered = &z - &mean;
            let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
            let normalized = centered * &inv_std;
            let pre = &normalized * &bn.scale + &bn.shift;
            let out = pre.mapv(|v| v.max(0.0));
            hidden.push(HiddenCache {
                input: std::mem::replace(&mut act, out),
                normalized,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                activation_in: pre,
            });
        }
        let mut z = affine(&act.view(), &self.layers[last]);
        z.mapv_inplace(sigmoid);
        Ok(ForwardCache { hidden, output_input: act, output: z })
    }

    /// `running <- momentum * running + (1 - momentum) * batch`.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (layer, h) in self.layers.iter_mut().zip(&cache.hidden) {
            let bn = layer.bn.as_mut().expect("hidden layer has batch norm");
            Zip::from(&mut bn.running_mean).and(&h.batch_mean).for_each(|r, &b| {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
            });
            Zip::from(&mut bn.running_var).and(&h.batch_var).for_each(|r, &b| {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
            });
        }
    }

    /// Reverse-mode gradients given `d loss / d output` for every batch row.
    /// Gradients flow through the batch statistics.
    pub fn backward(&self, cache: &ForwardCache, output_grads: ArrayView2<f64>) -> Result<NetworkGrads> {
        if output_grads.dim() != cache.output.dim() {
            return Err(Error::invalid(format!(
                "output gradient shape {:?} does not match forward output {:?}",
                output_grads.dim(),
                cache.output.dim()
            )));
        }
        if cache.hidden.len() + 1 != self.layers.len() {
            return Err(Error::invalid("forward cache does not belong to this network"));
        }
        let n = cache.batch_size() as f64;
        let mut grads = Vec::with_capacity(self.layers.len());

        let out_layer = self.layers.last().expect("non-empty network");
        let mut dz = output_grads.to_owned();
        Zip::from(&mut dz).and(&cache.output).for_each(|d, &c| *d *= c * (1.0 - c));
        grads.push(LayerGrads {
            weight: dz.t().dot(&cache.output_input),
            bias: dz.sum_axis(Axis(0)),
            bn_scale: None,
            bn_shift: None,
        });
        let mut upstream = dz.dot(&out_layer.weight);

        for (layer, h) in self.layers.iter().zip(&cache.hidden).rev() {
            let bn = layer.bn.as_ref().expect("hidden layer has batch norm");
            // ReLU, subgradient 0 at the kink.
            Zip::from(&mut upstream).and(&h.activation_in).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            let d_shift = upstream.sum_axis(Axis(0));
            let d_scale = (&upstream * &h.normalized).sum_axis(Axis(0));
            // d/dz of the normalized value, through mean and variance:
            // dz = inv_std / n * (n dxhat - sum dxhat - xhat * sum(dxhat xhat))
            let dxhat = upstream * &bn.scale;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &h.normalized).sum_axis(Axis(0));
            let mut dz = dxhat;
            Zip::from(dz.rows_mut()).and(h.normalized.rows()).for_each(|mut row, xrow| {
                Zip::from(&mut row)
                    .and(&xrow)
                    .and(&sum_dxhat)
                    .and(&sum_dxhat_xhat)
                    .and(&h.inv_std)
                    .for_each(|d, &x, &s1, &s2, &is| {
                        *d = is * (*d - (s1 + x * s2) / n);
                    });
            });
            grads.push(LayerGrads {
                weight: dz.t().dot(&h.input),
                bias: dz.sum_axis(Axis(0)),
                bn_scale: Some(d_scale),
                bn_shift: Some(d_shift),
            });
            upstream = dz.dot(&layer.weight);
        }
        grads.reverse();
        Ok(NetworkGrads { layers: grads })
    }
}
