//! Layer kinds with shape inference and per-example forward/backward.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::numerics::dot;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Relu => x.max(0.0),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One entry of a layer stack. Input widths are inferred from the shape
/// flowing in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Affine map over the last axis, applied to every leading index.
    Dense {
        outputs: usize,
    },
    /// `[C, L] -> [C_out, L - k + 1]`
    Conv1d {
        out_channels: usize,
        kernel: usize,
    },
    /// `[C, H, W] -> [C_out, H - k + 1, W - k + 1]`
    Conv2d {
        out_channels: usize,
        kernel: usize,
    },
    /// 2×2 mean, stride 2, odd extents floored.
    AvgPool2d,
    Activation(Activation),
    /// `[T, C] -> [C, T]`
    TransposeTimeChannel,
    Flatten,
    /// Appends the θ vector to a flat feature vector.
    ConcatTheta,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::AvgPool2d => "avgpool2d",
            LayerSpec::Activation(Activation::Silu) => "silu",
            LayerSpec::Activation(Activation::Relu) => "relu",
            LayerSpec::TransposeTimeChannel => "transpose_time_channel",
            LayerSpec::Flatten => "flatten",
            LayerSpec::ConcatTheta => "concat_theta",
        }
    }
}

/// A layer placed in a model: spec, resolved shapes and parameter range.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    pub offset: usize,
    pub params: usize,
}

fn mismatch(spec: &LayerSpec, shape: &[usize]) -> Error {
    Error::ShapeMismatch(format!("{} cannot take input of shape {shape:?}", spec.kind()))
}

impl Layer {
    pub(crate) fn place(spec: LayerSpec, input: &[usize], theta_dim: usize, offset: usize) -> Result<Self> {
        let bad = || mismatch(&spec, input);
        let (output, params) = match spec {
            LayerSpec::Dense { outputs } => {
                let (&n, lead) = input.split_last().ok_or_else(bad)?;
                if outputs == 0 || n == 0 {
                    return Err(bad());
                }
                let mut out = lead.to_vec();
                out.push(outputs);
                (out, outputs * n + outputs)
            }
            LayerSpec::Conv1d { out_channels, kernel } => match *input {
                [c, l] if l >= kernel && kernel > 0 && out_channels > 0 => {
                    (vec![out_channels, l - kernel + 1], out_channels * c * kernel + out_channels)
                }
                _ => return Err(bad()),
            },
            LayerSpec::Conv2d { out_channels, kernel } => match *input {
                [c, h, w] if h >= kernel && w >= kernel && kernel > 0 && out_channels > 0 => (
                    vec![out_channels, h - kernel + 1, w - kernel + 1],
                    out_channels * c * kernel * kernel + out_channels,
                ),
                _ => return Err(bad()),
            },
            LayerSpec::AvgPool2d => match *input {
                [c, h, w] if h >= 2 && w >= 2 => (vec![c, h / 2, w / 2], 0),
                _ => return Err(bad()),
            },
            LayerSpec::Activation(_) => (input.to_vec(), 0),
            LayerSpec::TransposeTimeChannel => match *input {
                [t, c] => (vec![c, t], 0),
                _ => return Err(bad()),
            },
            LayerSpec::Flatten => (vec![input.iter().product()], 0),
            LayerSpec::ConcatTheta => match *input {
                [n] => (vec![n + theta_dim], 0),
                _ => return Err(bad()),
            },
        };
        Ok(Self { spec, input: input.to_vec(), output, offset, params })
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output.iter().product()
    }

    /// `(fan_in, fan_out)` of a parametrized layer.
    pub(crate) fn fans(&self) -> Option<(usize, usize)> {
        match self.spec {
            LayerSpec::Dense { outputs } => Some((*self.input.last().unwrap(), outputs)),
            LayerSpec::Conv1d { out_channels, kernel } => Some((self.input[0] * kernel, out_channels * kernel)),
            LayerSpec::Conv2d { out_channels, kernel } => {
                Some((self.input[0] * kernel * kernel, out_channels * kernel * kernel))
            }
            _ => None,
        }
    }

    /// Number of weights before the biases in this layer's parameter slice.
    pub(crate) fn weight_count(&self) -> usize {
        match self.spec {
            LayerSpec::Dense { outputs } | LayerSpec::Conv1d { out_channels: outputs, .. } => self.params - outputs,
            LayerSpec::Conv2d { out_channels, .. } => self.params - out_channels,
            _ => 0,
        }
    }

    /// `y = f(x)` for one example. `ConcatTheta` is handled by the model.
    pub(crate) fn forward(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        match self.spec {
            LayerSpec::Dense { outputs } => {
                let n = *self.input.last().unwrap();
                let (weights, bias) = w.split_at(outputs * n);
                let mut y = Vec::with_capacity(x.len() / n * outputs);
                for row in x.chunks_exact(n) {
                    for (o, b) in bias.iter().enumerate() {
                        y.push(b + dot(&weights[o * n..(o + 1) * n], row));
                    }
                }
                y
            }
            LayerSpec::Conv1d { out_channels, kernel } => {
                let lo = self.output[1];
                let span = self.input[0] * kernel;
                let (weights, bias) = w.split_at(out_channels * span);
                let patches = self.patches(x, kernel);
                let mut y = vec![0.0; out_channels * lo];
                for o in 0..out_channels {
                    let wo = &weights[o * span..(o + 1) * span];
                    for (t, p) in patches.chunks_exact(span).enumerate() {
                        y[o * lo + t] = bias[o] + dot(wo, p);
                    }
                }
                y
            }
            LayerSpec::Conv2d { out_channels, kernel } => {
                let (c_in, h, wd) = (self.input[0], self.input[1], self.input[2]);
                let (ho, wo) = (self.output[1], self.output[2]);
                let (weights, bias) = w.split_at(out_channels * c_in * kernel * kernel);
                let mut y = vec![0.0; out_channels * ho * wo];
                for o in 0..out_channels {
                    let yo = &mut y[o * ho * wo..(o + 1) * ho * wo];
                    yo.iter_mut().for_each(|v| *v = bias[o]);
                    for c in 0..c_in {
                        let xc = &x[c * h * wd..(c + 1) * h * wd];
                        for ki in 0..kernel {
                            for kj in 0..kernel {
                                let wv = weights[((o * c_in + c) * kernel + ki) * kernel + kj];
                                for r in 0..ho {
                                    let src = &xc[(r + ki) * wd + kj..(r + ki) * wd + kj + wo];
                                    for (yv, xv) in yo[r * wo..(r + 1) * wo].iter_mut().zip(src) {
                                        *yv += wv * xv;
                                    }
                                }
                            }
                        }
                    }
                }
                y
            }
            LayerSpec::AvgPool2d => {
                let (c_n, h, wd) = (self.input[0], self.input[1], self.input[2]);
                let (ho, wo) = (self.output[1], self.output[2]);
                let mut y = Vec::with_capacity(c_n * ho * wo);
                for c in 0..c_n {
                    let xc = &x[c * h * wd..];
                    for r in 0..ho {
                        for s in 0..wo {
                            let (a, b) = (2 * r * wd + 2 * s, (2 * r + 1) * wd + 2 * s);
                            y.push(0.25 * (xc[a] + xc[a + 1] + xc[b] + xc[b + 1]));
                        }
                    }
                }
                y
            }
            LayerSpec::Activation(act) => x.iter().map(|&v| act.apply(v)).collect(),
            LayerSpec::TransposeTimeChannel => transpose(x, self.input[0], self.input[1]),
            LayerSpec::Flatten => x.to_vec(),
            LayerSpec::ConcatTheta => unreachable!("concat_theta is applied by the model"),
        }
    }

    /// Accumulates parameter gradients into `dw` and returns `dL/dx`.
    pub(crate) fn backward(&self, w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64]) -> Vec<f64> {
        match self.spec {
            LayerSpec::Dense { outputs } => {
                let n = *self.input.last().unwrap();
                let (weights, _) = w.split_at(outputs * n);
                let (dweights, dbias) = dw.split_at_mut(outputs * n);
                let mut dx = vec![0.0; x.len()];
                for (r, row) in x.chunks_exact(n).enumerate() {
                    let dyr = &dy[r * outputs..(r + 1) * outputs];
                    let dxr = &mut dx[r * n..(r + 1) * n];
                    for (o, &g) in dyr.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        dbias[o] += g;
                        let wr = &weights[o * n..(o + 1) * n];
                        let dwr = &mut dweights[o * n..(o + 1) * n];
                        for i in 0..n {
                            dwr[i] += g * row[i];
                            dxr[i] += g * wr[i];
                        }
                    }
                }
                dx
            }
            LayerSpec::Conv1d { out_channels, kernel } => {
                let (c_in, l) = (self.input[0], self.input[1]);
                let lo = self.output[1];
                let span = c_in * kernel;
                let (weights, _) = w.split_at(out_channels * span);
                let (dweights, dbias) = dw.split_at_mut(out_channels * span);
                let patches = self.patches(x, kernel);
                let mut dpatches = vec![0.0; patches.len()];
                for o in 0..out_channels {
                    let dyo = &dy[o * lo..(o + 1) * lo];
                    dbias[o] += dyo.iter().sum::<f64>();
                    let wo = &weights[o * span..(o + 1) * span];
                    let dwo = &mut dweights[o * span..(o + 1) * span];
                    for (t, &g) in dyo.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let p = &patches[t * span..(t + 1) * span];
                        dwo.iter_mut().zip(p).for_each(|(d, v)| *d += g * v);
                        dpatches[t * span..(t + 1) * span].iter_mut().zip(wo).for_each(|(d, v)| *d += g * v);
                    }
                }
                let mut dx = vec![0.0; x.len()];
                for (t, dp) in dpatches.chunks_exact(span).enumerate() {
                    for c in 0..c_in {
                        dx[c * l + t..c * l + t + kernel]
                            .iter_mut()
                            .zip(&dp[c * kernel..(c + 1) * kernel])
                            .for_each(|(d, v)| *d += v);
                    }
                }
                dx
            }
            LayerSpec::Conv2d { out_channels, kernel } => {
                let (c_in, h, wd) = (self.input[0], self.input[1], self.input[2]);
                let (ho, wo) = (self.output[1], self.output[2]);
                let (weights, _) = w.split_at(out_channels * c_in * kernel * kernel);
                let (dweights, dbias) = dw.split_at_mut(out_channels * c_in * kernel * kernel);
                let mut dx = vec![0.0; x.len()];
                for o in 0..out_channels {
                    let dyo = &dy[o * ho * wo..(o + 1) * ho * wo];
                    dbias[o] += dyo.iter().sum::<f64>();
                    for c in 0..c_in {
                        let xc = &x[c * h * wd..(c + 1) * h * wd];
                        let dxc = &mut dx[c * h * wd..(c + 1) * h * wd];
                        for ki in 0..kernel {
                            for kj in 0..kernel {
                                let idx = ((o * c_in + c) * kernel + ki) * kernel + kj;
                                let wv = weights[idx];
                                let mut acc = 0.0;
                                for r in 0..ho {
                                    let base = (r + ki) * wd + kj;
                                    let g = &dyo[r * wo..(r + 1) * wo];
                                    let src = &xc[base..base + wo];
                                    acc += g.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                                    for (d, gv) in dxc[base..base + wo].iter_mut().zip(g) {
                                        *d += wv * gv;
                                    }
                                }
                                dweights[idx] += acc;
                            }
                        }
                    }
                }
                dx
            }
            LayerSpec::AvgPool2d => {
                let (c_n, h, wd) = (self.input[0], self.input[1], self.input[2]);
                let (ho, wo) = (self.output[1], self.output[2]);
                let mut dx = vec![0.0; x.len()];
                for c in 0..c_n {
                    let dxc = &mut dx[c * h * wd..(c + 1) * h * wd];
                    for r in 0..ho {
                        for s in 0..wo {
                            let g = 0.25 * dy[(c * ho + r) * wo + s];
                            let (a, b) = (2 * r * wd + 2 * s, (2 * r + 1) * wd + 2 * s);
                            dxc[a] += g;
                            dxc[a + 1] += g;
                            dxc[b] += g;
                            dxc[b + 1] += g;
                        }
                    }
                }
                dx
            }
            LayerSpec::Activation(act) => x.iter().zip(dy).map(|(&v, &g)| g * act.derivative(v)).collect(),
            // the transpose of [T, C] -> [C, T] is [C, T] -> [T, C]
            LayerSpec::TransposeTimeChannel => transpose(dy, self.input[1], self.input[0]),
            LayerSpec::Flatten => dy.to_vec(),
            LayerSpec::ConcatTheta => unreachable!("concat_theta is applied by the model"),
        }
    }
}

impl Layer {
    /// Conv1d input windows, `[L_out, C · k]` with the kernel offset fastest,
    /// matching the weight layout.
    fn patches(&self, x: &[f64], kernel: usize) -> Vec<f64> {
        let (c_in, l) = (self.input[0], self.input[1]);
        let lo = self.output[1];
        let mut p = Vec::with_capacity(lo * c_in * kernel);
        for t in 0..lo {
            for c in 0..c_in {
                p.extend_from_slice(&x[c * l + t..c * l + t + kernel]);
            }
        }
        p
    }
}

fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for r in 0..rows {
        for c in 0..cols {
            y[c * rows + r] = x[r * cols + c];
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations_at_known_points() {
        assert_eq!(Activation::Silu.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.5), 2.5);
        assert!((Activation::Silu.apply(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((sigmoid(-800.0)).abs() < 1e-300 && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn pooling_floors_odd_extents() {
        let l = Layer::place(LayerSpec::AvgPool2d, &[2, 5, 3], 0, 0).unwrap();
        assert_eq!(l.output, vec![2, 2, 1]);
        assert!(Layer::place(LayerSpec::AvgPool2d, &[1, 1, 4], 0, 0).is_err());
    }

    #[test]
    fn conv_shapes_and_counts() {
        let l = Layer::place(LayerSpec::Conv2d { out_channels: 40, kernel: 3 }, &[1, 25, 25], 0, 0).unwrap();
        assert_eq!(l.output, vec![40, 23, 23]);
        assert_eq!(l.params, 40 * 9 + 40);
        let l = Layer::place(LayerSpec::Conv1d { out_channels: 8, kernel: 5 }, &[16, 13], 0, 0).unwrap();
        assert_eq!(l.output, vec![8, 9]);
        assert!(Layer::place(LayerSpec::Conv1d { out_channels: 8, kernel: 5 }, &[16, 4], 0, 0).is_err());
    }

    #[test]
    fn transpose_round_trip() {
        let l = Layer::place(LayerSpec::TransposeTimeChannel, &[2, 3], 0, 0).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(l.forward(&[], &x), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(l.backward(&[], &x, &l.forward(&[], &x), &mut []), x.to_vec());
    }
}
