use serde::{Deserialize, Serialize};
use xprojct_core::Scalar;

use crate::error::{NnError, Result};
use crate::kernels::{self, ConvGeometry};

/// One layer of a sequential model. Convolutions use stride 1 and
/// zero "same" padding; pooling halves every spatial axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize },
    Conv3d { in_channels: usize, out_channels: usize, kernel: usize },
    /// Three learned weighted reductions of a `1×D×D×D` volume, one per
    /// axis, giving a `3×D×D` image.
    Shrink2p5d { size: usize },
    Relu,
    MaxPool,
    GlobalAvgPool,
    Dense { inputs: usize, outputs: usize },
    SigmoidHead,
}

fn shape_err(layer: &LayerSpec, input: &[usize]) -> NnError {
    NnError::Shape(format!("{layer:?} cannot take input {input:?}"))
}

impl LayerSpec {
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || shape_err(self, input);
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel } => {
                if input.len() != 3 || input[0] != in_channels || kernel % 2 == 0 || out_channels == 0 {
                    return Err(bad());
                }
                Ok(vec![out_channels, input[1], input[2]])
            }
            LayerSpec::Conv3d { in_channels, out_channels, kernel } => {
                if input.len() != 4 || input[0] != in_channels || kernel % 2 == 0 || out_channels == 0 {
                    return Err(bad());
                }
                Ok(vec![out_channels, input[1], input[2], input[3]])
            }
            LayerSpec::Shrink2p5d { size } => {
                if input != [1, size, size, size] {
                    return Err(bad());
                }
                Ok(vec![3, size, size])
            }
            LayerSpec::Relu | LayerSpec::SigmoidHead => Ok(input.to_vec()),
            LayerSpec::MaxPool => {
                if !(3..=4).contains(&input.len()) || input[1..].iter().any(|&d| d < 2) {
                    return Err(bad());
                }
                let mut out = vec![input[0]];
                out.extend(input[1..].iter().map(|d| d / 2));
                Ok(out)
            }
            LayerSpec::GlobalAvgPool => {
                if input.len() < 2 {
                    return Err(bad());
                }
                Ok(vec![input[0]])
            }
            LayerSpec::Dense { inputs, outputs } => {
                if input != [inputs] || outputs == 0 {
                    return Err(bad());
                }
                Ok(vec![outputs])
            }
        }
    }

    /// `(weight count, bias count)`.
    pub fn parameter_shape(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel } => {
                (out_channels * in_channels * kernel * kernel, out_channels)
            }
            LayerSpec::Conv3d { in_channels, out_channels, kernel } => {
                (out_channels * in_channels * kernel.pow(3), out_channels)
            }
            LayerSpec::Shrink2p5d { size } => (3 * size, 3),
            LayerSpec::Dense { inputs, outputs } => (inputs * outputs, outputs),
            _ => (0, 0),
        }
    }

    pub fn parameter_count(&self) -> usize {
        let (w, b) = self.parameter_shape();
        w + b
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { in_channels, kernel, .. } => in_channels * kernel * kernel,
            LayerSpec::Conv3d { in_channels, kernel, .. } => in_channels * kernel.pow(3),
            LayerSpec::Shrink2p5d { size } => size,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }

    fn conv_geometry(&self, input: &[usize]) -> Option<ConvGeometry> {
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel } => Some(ConvGeometry {
                in_ch: in_channels,
                out_ch: out_channels,
                dims: [1, input[1], input[2]],
                kernel: [1, kernel, kernel],
            }),
            LayerSpec::Conv3d { in_channels, out_channels, kernel } => Some(ConvGeometry {
                in_ch: in_channels,
                out_ch: out_channels,
                dims: [input[1], input[2], input[3]],
                kernel: [kernel; 3],
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams<S> {
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> LayerParams<S> {
    pub fn zeros_like(spec: &LayerSpec) -> Self {
        let (w, b) = spec.parameter_shape();
        LayerParams {
            weight: vec![S::zero(); w],
            bias: vec![S::zero(); b],
        }
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_assign(&mut self, other: &LayerParams<S>) {
        for (a, &b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, &b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

/// What a layer keeps from its forward pass for the backward pass.
pub(crate) enum Cache<S> {
    Conv { cols: Vec<S> },
    Mask { output: Vec<S> },
    Pool { argmax: Vec<u32>, input_len: usize },
    Mean { input_len: usize },
    Input { input: Vec<S> },
    None,
}

pub(crate) fn forward<S: Scalar>(
    spec: &LayerSpec,
    params: &LayerParams<S>,
    input_shape: &[usize],
    x: Vec<S>,
    keep: bool,
) -> (Vec<S>, Cache<S>) {
    match spec {
        LayerSpec::Conv2d { .. } | LayerSpec::Conv3d { .. } => {
            let g = spec.conv_geometry(input_shape).expect("convolution geometry");
            let mut cols = vec![S::zero(); g.taps() * g.positions()];
            kernels::im2col(&g, &x, &mut cols);
            let mut out = vec![S::zero(); g.out_ch * g.positions()];
            kernels::conv_forward(&g, &cols, &params.weight, &params.bias, &mut out);
            (out, if keep { Cache::Conv { cols } } else { Cache::None })
        }
        LayerSpec::Shrink2p5d { size } => {
            let d = *size;
            let w = &params.weight;
            let mut out = vec![S::zero(); 3 * d * d];
            let (c0, rest) = out.split_at_mut(d * d);
            let (c1, c2) = rest.split_at_mut(d * d);
            c0.fill(params.bias[0]);
            c1.fill(params.bias[1]);
            c2.fill(params.bias[2]);
            for i in 0..d {
                for j in 0..d {
                    let row = &x[(i * d + j) * d..(i * d + j + 1) * d];
                    kernels::axpy(w[i], row, &mut c0[j * d..(j + 1) * d]);
                    kernels::axpy(w[d + j], row, &mut c1[i * d..(i + 1) * d]);
                    c2[i * d + j] += kernels::dot(&w[2 * d..3 * d], row);
                }
            }
            (out, if keep { Cache::Input { input: x } } else { Cache::None })
        }
        LayerSpec::Relu => {
            let out: Vec<S> = x.into_iter().map(|v| v.max(S::zero())).collect();
            let cache = if keep { Cache::Mask { output: out.clone() } } else { Cache::None };
            (out, cache)
        }
        LayerSpec::MaxPool => {
            let (channels, dims, pooled) = spatial(input_shape);
            let od = kernels::pooled_dims(dims, pooled);
            let n = channels * od.iter().product::<usize>();
            let mut out = vec![S::zero(); n];
            let mut argmax = vec![0u32; n];
            kernels::maxpool_forward(channels, dims, pooled, &x, &mut out, &mut argmax);
            let cache = if keep {
                Cache::Pool {
                    argmax,
                    input_len: x.len(),
                }
            } else {
                Cache::None
            };
            (out, cache)
        }
        LayerSpec::GlobalAvgPool => {
            let c = input_shape[0];
            let per = x.len() / c;
            let inv = S::of(1.0 / per as f64);
            let out = x.chunks(per).map(|ch| ch.iter().copied().sum::<S>() * inv).collect();
            (out, Cache::Mean { input_len: x.len() })
        }
        LayerSpec::Dense { inputs, outputs } => {
            let out = (0..*outputs)
                .map(|o| params.bias[o] + kernels::dot(&params.weight[o * inputs..(o + 1) * inputs], &x))
                .collect();
            (out, if keep { Cache::Input { input: x } } else { Cache::None })
        }
        LayerSpec::SigmoidHead => (x.into_iter().map(sigmoid).collect(), Cache::None),
    }
}

/// Backpropagates `grad` (w.r.t. this layer's output) into parameter
/// gradients; returns the gradient w.r.t. the layer input when requested.
pub(crate) fn backward<S: Scalar>(
    spec: &LayerSpec,
    params: &LayerParams<S>,
    input_shape: &[usize],
    cache: Cache<S>,
    grad: Vec<S>,
    dparams: &mut LayerParams<S>,
    need_input: bool,
) -> Option<Vec<S>> {
    match (spec, cache) {
        (LayerSpec::Conv2d { .. } | LayerSpec::Conv3d { .. }, Cache::Conv { mut cols }) => {
            let g = spec.conv_geometry(input_shape).expect("convolution geometry");
            kernels::conv_param_grads(&g, &cols, &grad, &mut dparams.weight, &mut dparams.bias);
            need_input.then(|| {
                kernels::conv_input_grad_cols(&g, &params.weight, &grad, &mut cols);
                let mut dx = vec![S::zero(); g.in_ch * g.positions()];
                kernels::col2im(&g, &cols, &mut dx);
                dx
            })
        }
        (LayerSpec::Shrink2p5d { size }, Cache::Input { input: x }) => {
            let d = *size;
            let w = &params.weight;
            let (g0, rest) = grad.split_at(d * d);
            let (g1, g2) = rest.split_at(d * d);
            for (c, g) in [g0, g1, g2].iter().enumerate() {
                dparams.bias[c] += g.iter().copied().sum::<S>();
            }
            let mut dx = if need_input { vec![S::zero(); x.len()] } else { Vec::new() };
            for i in 0..d {
                for j in 0..d {
                    let row = &x[(i * d + j) * d..(i * d + j + 1) * d];
                    dparams.weight[i] += kernels::dot(&g0[j * d..(j + 1) * d], row);
                    dparams.weight[d + j] += kernels::dot(&g1[i * d..(i + 1) * d], row);
                    kernels::axpy(g2[i * d + j], row, &mut dparams.weight[2 * d..3 * d]);
                    if need_input {
                        let out = &mut dx[(i * d + j) * d..(i * d + j + 1) * d];
                        kernels::axpy(w[i], &g0[j * d..(j + 1) * d], out);
                        kernels::axpy(w[d + j], &g1[i * d..(i + 1) * d], out);
                        kernels::axpy(g2[i * d + j], &w[2 * d..3 * d], out);
                    }
                }
            }
            need_input.then_some(dx)
        }
        (LayerSpec::Relu, Cache::Mask { output }) => Some(
            grad.into_iter()
                .zip(output)
                .map(|(g, o)| if o > S::zero() { g } else { S::zero() })
                .collect(),
        ),
        (LayerSpec::MaxPool, Cache::Pool { argmax, input_len }) => {
            let mut dx = vec![S::zero(); input_len];
            for (g, &i) in grad.iter().zip(&argmax) {
                dx[i as usize] += *g;
            }
            Some(dx)
        }
        (LayerSpec::GlobalAvgPool, Cache::Mean { input_len }) => {
            let per = input_len / grad.len();
            let inv = S::of(1.0 / per as f64);
            Some(grad.iter().flat_map(|&g| std::iter::repeat_n(g * inv, per)).collect())
        }
        (LayerSpec::Dense { inputs, outputs }, Cache::Input { input: x }) => {
            for o in 0..*outputs {
                dparams.bias[o] += grad[o];
                kernels::axpy(grad[o], &x, &mut dparams.weight[o * inputs..(o + 1) * inputs]);
            }
            need_input.then(|| {
                let mut dx = vec![S::zero(); *inputs];
                for o in 0..*outputs {
                    kernels::axpy(grad[o], &params.weight[o * inputs..(o + 1) * inputs], &mut dx);
                }
                dx
            })
        }
        (spec, _) => unreachable!("no backward cache for {spec:?}"),
    }
}

fn spatial(shape: &[usize]) -> (usize, [usize; 3], [bool; 3]) {
    match shape.len() {
        3 => (shape[0], [1, shape[1], shape[2]], [false, true, true]),
        _ => (shape[0], [shape[1], shape[2], shape[3]], [true, true, true]),
    }
}

#[inline]
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}
