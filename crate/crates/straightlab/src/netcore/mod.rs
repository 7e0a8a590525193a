//! Minimal dense-tensor feedforward network with exact analytic forward and
//! backward passes for the fixed layer vocabulary: convolution, rectification,
//! average pooling, nearest upsampling, reshaping, and affine maps.

mod checkpoint;
pub mod layers;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};

use std::cell::Cell;

use rand::prelude::Distribution;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// One layer of the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    AvgPool {
        kernel: usize,
        stride: usize,
    },
    Upsample {
        factor: usize,
    },
    Flatten,
    Reshape {
        shape: [usize; 3],
    },
    Dense {
        input: usize,
        output: usize,
    },
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    /// Short name used in curves and reports.
    pub fn tag(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::AvgPool { .. } => "avgpool",
            LayerSpec::Upsample { .. } => "upsample",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::Dense { .. } => "dense",
        }
    }
}

/// Ordered layer descriptors plus named taps: layers whose outputs are
/// exported as embeddings for loss attachment or analysis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub taps: Vec<(String, usize)>,
}

impl NetworkSpec {
    pub fn new(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        taps: Vec<(String, usize)>,
    ) -> Result<Self> {
        let spec = NetworkSpec {
            input_shape,
            layers,
            taps,
        };
        spec.boundary_shapes()?;
        for (name, idx) in &spec.taps {
            if *idx >= spec.layers.len() {
                return Err(Error::ConfigInvalid(format!(
                    "tap `{name}` points at layer {idx}, but the network has {} layers",
                    spec.layers.len()
                )));
            }
        }
        Ok(spec)
    }

    /// Shapes at every boundary: index 0 is the input, index i+1 the output
    /// of layer i.
    pub fn boundary_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layers::output_shape(layer, shapes.last().unwrap()).map_err(|e| {
                Error::ShapeMismatch(format!("layer {i} ({}): {e}", layer.tag()))
            })?;
            shapes.push(out);
        }
        Ok(shapes)
    }

    /// Dimensionality of the final output.
    pub fn output_dim(&self) -> usize {
        self.boundary_shapes()
            .expect("validated at construction")
            .last()
            .unwrap()
            .iter()
            .product()
    }

    pub fn tap_index(&self, name: &str) -> Result<usize> {
        self.taps
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, i)| *i)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown tap `{name}`")))
    }

    /// Flattened dimensionality of a tap's output (vectorized over space and
    /// channels for intermediate layers).
    pub fn tap_dim(&self, name: &str) -> Result<usize> {
        let idx = self.tap_index(name)?;
        let shapes = self.boundary_shapes()?;
        Ok(shapes[idx + 1].iter().product())
    }

    /// The default encoder: six 3x3 conv+ReLU stages with channel widths
    /// 16,32,32,64,64,128 and stride 2 at stages 1,3,5, flattened into one
    /// dense projection to `d`. Seven weight-bearing layers, no skips.
    /// Taps: `mid` after the fourth rectifier, `final` at the output.
    pub fn encoder(input_shape: [usize; 3], d: usize) -> Result<Self> {
        let conv = |in_ch, out_ch, stride| LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel: 3,
            stride,
            pad: 1,
        };
        let layers = vec![
            conv(input_shape[0], 16, 2),
            LayerSpec::Relu,
            conv(16, 32, 1),
            LayerSpec::Relu,
            conv(32, 32, 2),
            LayerSpec::Relu,
            conv(32, 64, 1),
            LayerSpec::Relu,
            conv(64, 64, 2),
            LayerSpec::Relu,
            conv(64, 128, 1),
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                input: 128 * (input_shape[1] / 8) * (input_shape[2] / 8),
                output: d,
            },
        ];
        let n = layers.len();
        NetworkSpec::new(
            input_shape.to_vec(),
            layers,
            vec![("mid".into(), 7), ("final".into(), n - 1)],
        )
    }

    /// Mirror decoder: dense expansion, then three nearest-neighbor
    /// upsampling stages with conv+ReLU pairs, ending at the frame shape.
    /// Seven weight-bearing layers.
    pub fn decoder(d: usize, out_shape: [usize; 3]) -> Result<Self> {
        let (c, h, w) = (out_shape[0], out_shape[1], out_shape[2]);
        if h % 8 != 0 || w % 8 != 0 {
            return Err(Error::ConfigInvalid(format!(
                "decoder output {h}x{w} must be divisible by 8"
            )));
        }
        let (sh, sw) = (h / 8, w / 8);
        let conv = |in_ch, out_ch| LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        let layers = vec![
            LayerSpec::Dense {
                input: d,
                output: 128 * sh * sw,
            },
            LayerSpec::Reshape {
                shape: [128, sh, sw],
            },
            LayerSpec::Relu,
            LayerSpec::Upsample { factor: 2 },
            conv(128, 64),
            LayerSpec::Relu,
            conv(64, 64),
            LayerSpec::Relu,
            LayerSpec::Upsample { factor: 2 },
            conv(64, 32),
            LayerSpec::Relu,
            conv(32, 32),
            LayerSpec::Relu,
            LayerSpec::Upsample { factor: 2 },
            conv(32, 16),
            LayerSpec::Relu,
            conv(16, c),
        ];
        let n = layers.len();
        NetworkSpec::new(vec![d], layers, vec![("final".into(), n - 1)])
    }
}

/// Weight and bias tensors for one weight-bearing layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// The learnable state of a network; also reused as the container for
/// gradients and optimizer velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub layers: Vec<Option<LayerParams>>,
}

impl ParamSet {
    pub fn zeros_like(spec: &NetworkSpec) -> Result<Self> {
        let mut layers = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            layers.push(match layer {
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    ..
                } => Some(LayerParams {
                    weight: Tensor::zeros(&[*out_ch, in_ch * kernel * kernel]),
                    bias: Tensor::zeros(&[*out_ch]),
                }),
                LayerSpec::Dense { input, output } => Some(LayerParams {
                    weight: Tensor::zeros(&[*output, *input]),
                    bias: Tensor::zeros(&[*output]),
                }),
                _ => None,
            });
        }
        Ok(ParamSet { layers })
    }

    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        if self.layers.len() != spec.layers.len() {
            return false;
        }
        spec.layers.iter().zip(&self.layers).all(|(l, p)| match l {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => p.as_ref().is_some_and(|p| {
                p.weight.shape() == [*out_ch, in_ch * kernel * kernel]
                    && p.bias.shape() == [*out_ch]
            }),
            LayerSpec::Dense { input, output } => p.as_ref().is_some_and(|p| {
                p.weight.shape() == [*output, *input] && p.bias.shape() == [*output]
            }),
            _ => p.is_none(),
        })
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .map(|p| p.weight.len() + p.bias.len())
            .sum()
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                a.weight.add_assign(&b.weight);
                a.bias.add_assign(&b.bias);
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for p in self.layers.iter_mut().flatten() {
            p.weight.scale(c);
            p.bias.scale(c);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|p| p.weight.all_finite() && p.bias.all_finite())
    }

    /// Visit every parameter coordinate mutably, in a fixed order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for p in self.layers.iter_mut().flatten() {
            for v in p.weight.data_mut() {
                f(v);
            }
            for v in p.bias.data_mut() {
                f(v);
            }
        }
    }
}

/// Kaiming-style initialization: fan-in-scaled normal weights, zero biases.
pub fn init_params(spec: &NetworkSpec, rng: &mut Rng) -> Result<ParamSet> {
    let mut params = ParamSet::zeros_like(spec)?;
    for (layer, slot) in spec.layers.iter().zip(params.layers.iter_mut()) {
        if let Some(p) = slot.as_mut() {
            let fan_in = match layer {
                LayerSpec::Conv2d { in_ch, kernel, .. } => in_ch * kernel * kernel,
                LayerSpec::Dense { input, .. } => *input,
                _ => unreachable!(),
            };
            let std = (2.0 / fan_in as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("std is positive and finite");
            for v in p.weight.data_mut() {
                *v = dist.sample(rng);
            }
        }
    }
    Ok(params)
}

/// Input plus every layer's output, recorded by [`forward`]. Consumed exactly
/// once by a backward pass.
#[derive(Debug)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[i + 1]` the output of layer `i`.
    pub activations: Vec<Tensor>,
    consumed: Cell<bool>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace is never empty")
    }
}

fn check_input(spec: &NetworkSpec, input: &Tensor) -> Result<()> {
    if input.shape() != spec.input_shape.as_slice() {
        return Err(Error::ShapeMismatch(format!(
            "input shape {:?} does not match spec {:?}",
            input.shape(),
            spec.input_shape
        )));
    }
    Ok(())
}

/// Run the network, recording every intermediate activation.
pub fn forward(spec: &NetworkSpec, params: &ParamSet, input: &Tensor) -> Result<(Tensor, ForwardTrace)> {
    check_input(spec, input)?;
    let mut activations = Vec::with_capacity(spec.layers.len() + 1);
    activations.push(input.clone());
    for (layer, p) in spec.layers.iter().zip(&params.layers) {
        let out = layers::forward(layer, p.as_ref(), activations.last().unwrap())?;
        activations.push(out);
    }
    let output = activations.last().unwrap().clone();
    Ok((
        output,
        ForwardTrace {
            activations,
            consumed: Cell::new(false),
        },
    ))
}

/// Run the network without recording a trace.
pub fn forward_only(spec: &NetworkSpec, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
    check_input(spec, input)?;
    let mut x = input.clone();
    for (layer, p) in spec.layers.iter().zip(&params.layers) {
        x = layers::forward(layer, p.as_ref(), &x)?;
    }
    Ok(x)
}

/// Run the network keeping only the outputs of the requested layers,
/// flattened. Returned in the order requested.
pub fn forward_taps(
    spec: &NetworkSpec,
    params: &ParamSet,
    input: &Tensor,
    wanted: &[usize],
) -> Result<Vec<Vec<f64>>> {
    check_input(spec, input)?;
    let mut kept: Vec<Option<Vec<f64>>> = vec![None; wanted.len()];
    let mut x = input.clone();
    for (i, (layer, p)) in spec.layers.iter().zip(&params.layers).enumerate() {
        x = layers::forward(layer, p.as_ref(), &x)?;
        for (slot, w) in kept.iter_mut().zip(wanted) {
            if *w == i {
                *slot = Some(x.data().to_vec());
            }
        }
    }
    Ok(kept
        .into_iter()
        .map(|k| k.expect("tap indices validated against the spec"))
        .collect())
}

/// Reverse-mode gradients with gradient injections at arbitrary layer
/// outputs, accumulated into `acc` (callers batching frames reuse one
/// accumulator and skip per-frame gradient buffers). `injections` maps a
/// layer index to the gradient of the loss with respect to that layer's
/// (flattened) output; entries for the same layer add. Returns the input
/// gradient.
pub fn backward_from_taps_into(
    spec: &NetworkSpec,
    params: &ParamSet,
    trace: &ForwardTrace,
    injections: &[(usize, &[f64])],
    acc: &mut ParamSet,
) -> Result<Tensor> {
    if trace.consumed.get() {
        return Err(Error::TraceReused);
    }
    if trace.activations.len() != spec.layers.len() + 1 {
        return Err(Error::ShapeMismatch(
            "trace does not match the network depth".into(),
        ));
    }
    trace.consumed.set(true);

    let mut grad = Tensor::zeros(trace.activations.last().unwrap().shape());
    for i in (0..spec.layers.len()).rev() {
        for (at, g) in injections {
            if *at == i {
                if g.len() != grad.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "injection at layer {i} has {} elements, activation has {}",
                        g.len(),
                        grad.len()
                    )));
                }
                for (dst, src) in grad.data_mut().iter_mut().zip(*g) {
                    *dst += src;
                }
            }
        }
        grad = layers::backward(
            &spec.layers[i],
            params.layers[i].as_ref(),
            &trace.activations[i],
            &grad,
            acc.layers[i].as_mut(),
        )?;
    }
    Ok(grad)
}

/// As [`backward_from_taps_into`], returning a fresh gradient set.
pub fn backward_from_taps(
    spec: &NetworkSpec,
    params: &ParamSet,
    trace: &ForwardTrace,
    injections: &[(usize, &[f64])],
) -> Result<(ParamSet, Tensor)> {
    let mut grads = ParamSet::zeros_like(spec)?;
    let input_grad = backward_from_taps_into(spec, params, trace, injections, &mut grads)?;
    Ok((grads, input_grad))
}

/// Gradient of the output with respect to the input only; parameter
/// gradients are not computed. Used by attack loops.
pub fn backward_input_only(
    spec: &NetworkSpec,
    params: &ParamSet,
    trace: &ForwardTrace,
    grad_output: &Tensor,
) -> Result<Tensor> {
    if trace.consumed.get() {
        return Err(Error::TraceReused);
    }
    trace.consumed.set(true);
    let mut grad = grad_output.clone();
    for i in (0..spec.layers.len()).rev() {
        grad = layers::backward(
            &spec.layers[i],
            params.layers[i].as_ref(),
            &trace.activations[i],
            &grad,
            None,
        )?;
    }
    Ok(grad)
}

/// Reverse-mode gradients of the output with respect to every parameter and
/// the input, seeded by `grad_output`.
pub fn backward(
    spec: &NetworkSpec,
    params: &ParamSet,
    trace: &ForwardTrace,
    grad_output: &Tensor,
) -> Result<(ParamSet, Tensor)> {
    let last = spec.layers.len() - 1;
    if grad_output.shape() != trace.output().shape() {
        return Err(Error::ShapeMismatch(format!(
            "grad_output shape {:?} does not match output {:?}",
            grad_output.shape(),
            trace.output().shape()
        )));
    }
    backward_from_taps(spec, params, trace, &[(last, grad_output.data())])
}

fn coord_mut(params: &mut ParamSet, li: usize, field: usize, j: usize) -> &mut f64 {
    let p = params.layers[li].as_mut().expect("layer has params");
    let t = if field == 0 { &mut p.weight } else { &mut p.bias };
    &mut t.data_mut()[j]
}

/// Central-difference gradient of a deterministic loss with respect to every
/// parameter coordinate. Testing oracle; O(2 * n_params) loss evaluations.
pub fn numerical_gradient<F>(loss_fn: F, params: &ParamSet, step: f64) -> ParamSet
where
    F: Fn(&ParamSet) -> f64,
{
    let mut grads = params.clone();
    grads.scale(0.0);
    let mut probe = params.clone();
    for li in 0..params.layers.len() {
        let Some(p) = params.layers[li].as_ref() else {
            continue;
        };
        for (field, len) in [(0, p.weight.len()), (1, p.bias.len())] {
            for j in 0..len {
                let orig = *coord_mut(&mut probe, li, field, j);
                *coord_mut(&mut probe, li, field, j) = orig + step;
                let up = loss_fn(&probe);
                *coord_mut(&mut probe, li, field, j) = orig - step;
                let down = loss_fn(&probe);
                *coord_mut(&mut probe, li, field, j) = orig;
                *coord_mut(&mut grads, li, field, j) = (up - down) / (2.0 * step);
            }
        }
    }
    grads
}

#[cfg(test)]
mod tests;
