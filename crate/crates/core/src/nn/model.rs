//! Ratio network `h_γ(x, θ)`: a θ-free trunk, then `concat_theta`, then a
//! head producing one logit.
//!
//! Keeping the trunk separate lets one trunk pass over `x` serve every θ
//! paired with it (shuffled pairs, finite-difference shifts).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use rand_distr::{Distribution, Uniform};

use super::layers::{Activation, Layer, LayerSpec};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RatioModel {
    input_shape: Vec<usize>,
    theta_dim: usize,
    layers: Vec<Layer>,
    split: usize,
    params: Vec<f64>,
}

/// Cached activations of one trunk pass; the last entry is the feature.
#[derive(Debug, Clone)]
pub struct TrunkPass {
    acts: Vec<Vec<f64>>,
}

impl TrunkPass {
    pub fn feature(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

/// Cached activations of one head pass; the first entry is `feature ++ θ`.
#[derive(Debug, Clone)]
pub struct HeadPass {
    acts: Vec<Vec<f64>>,
}

impl HeadPass {
    pub fn logit(&self) -> f64 {
        self.acts.last().unwrap()[0]
    }
}

impl RatioModel {
    /// Places `specs` on `input_shape` and initializes weights from `seed`.
    ///
    /// The stack needs exactly one `ConcatTheta` and must end in a single
    /// output.
    pub fn new(input_shape: &[usize], theta_dim: usize, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let split = match specs.iter().filter(|s| **s == LayerSpec::ConcatTheta).count() {
            1 => specs.iter().position(|s| *s == LayerSpec::ConcatTheta).unwrap(),
            n => return Err(Error::ShapeMismatch(format!("expected one concat_theta layer, found {n}"))),
        };
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        let mut offset = 0;
        for &spec in specs {
            let layer = Layer::place(spec, &shape, theta_dim, offset)?;
            offset += layer.params;
            shape = layer.output.clone();
            layers.push(layer);
        }
        if shape != [1] {
            return Err(Error::ShapeMismatch(format!("network output has shape {shape:?}, expected [1]")));
        }
        let mut model = Self { input_shape: input_shape.to_vec(), theta_dim, layers, split, params: vec![0.0; offset] };
        model.initialize(seed);
        Ok(model)
    }

    /// Uniform fan-scaled init: He bounds before ReLU, Xavier otherwise,
    /// zero biases. Layer `i` draws from its own stream.
    pub fn initialize(&mut self, seed: u64) {
        for i in 0..self.layers.len() {
            let layer = &self.layers[i];
            let Some((fan_in, fan_out)) = layer.fans() else {
                continue;
            };
            let bound = match self.following_activation(i) {
                Some(Activation::Relu) => (6.0 / fan_in as f64).sqrt(),
                _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let (start, n) = (layer.offset, layer.weight_count());
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let mut r = rng::stream(seed, rng::streams::INIT_BASE + i as u64);
            for w in &mut self.params[start..start + n] {
                *w = dist.sample(&mut r);
            }
            self.params[start + n..start + layer.params].iter_mut().for_each(|b| *b = 0.0);
        }
    }

    fn following_activation(&self, i: usize) -> Option<Activation> {
        for layer in &self.layers[i + 1..] {
            match layer.spec {
                LayerSpec::Activation(a) => return Some(a),
                LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. } | LayerSpec::Conv2d { .. } => return None,
                _ => {}
            }
        }
        None
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn feature_len(&self) -> usize {
        self.layers[self.split].input_len()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters supplied, model has {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn weights(&self, layer: &Layer) -> &[f64] {
        &self.params[layer.offset..layer.offset + layer.params]
    }

    pub fn trunk_forward(&self, x: &[f64]) -> Result<TrunkPass> {
        if x.len() != self.input_len() {
            return Err(Error::ShapeMismatch(format!("input has {} values, expected {}", x.len(), self.input_len())));
        }
        let mut acts = Vec::with_capacity(self.split + 1);
        acts.push(x.to_vec());
        for layer in &self.layers[..self.split] {
            let y = layer.forward(self.weights(layer), acts.last().unwrap());
            acts.push(y);
        }
        Ok(TrunkPass { acts })
    }

    pub fn head_forward(&self, feature: &[f64], theta: &[f64]) -> Result<HeadPass> {
        if theta.len() != self.theta_dim || feature.len() != self.feature_len() {
            return Err(Error::ShapeMismatch(format!(
                "head takes {} features and {} parameters, got {} and {}",
                self.feature_len(),
                self.theta_dim,
                feature.len(),
                theta.len()
            )));
        }
        let mut input = Vec::with_capacity(feature.len() + theta.len());
        input.extend_from_slice(feature);
        input.extend_from_slice(theta);
        let mut acts = Vec::with_capacity(self.layers.len() - self.split);
        acts.push(input);
        for layer in &self.layers[self.split + 1..] {
            let y = layer.forward(self.weights(layer), acts.last().unwrap());
            acts.push(y);
        }
        Ok(HeadPass { acts })
    }

    /// Adds `upstream · ∂h/∂γ` (head part) into `grads` and returns
    /// `upstream · ∂h/∂(feature ++ θ)`.
    pub fn head_backward(&self, pass: &HeadPass, upstream: f64, grads: &mut [f64]) -> Vec<f64> {
        let mut dy = vec![upstream];
        for (k, layer) in self.layers[self.split + 1..].iter().enumerate().rev() {
            let dw = &mut grads[layer.offset..layer.offset + layer.params];
            dy = layer.backward(self.weights(layer), &pass.acts[k], &dy, dw);
        }
        dy
    }

    /// Adds the trunk parameter gradients for a feature-space upstream.
    pub fn trunk_backward(&self, pass: &TrunkPass, d_feature: &[f64], grads: &mut [f64]) {
        let mut dy = d_feature.to_vec();
        for (k, layer) in self.layers[..self.split].iter().enumerate().rev() {
            let dw = &mut grads[layer.offset..layer.offset + layer.params];
            dy = layer.backward(self.weights(layer), &pass.acts[k], &dy, dw);
        }
    }

    /// Logit for a single example.
    pub fn forward(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        let trunk = self.trunk_forward(x)?;
        Ok(self.head_forward(trunk.feature(), theta)?.logit())
    }

    /// Logits for `B` examples stored back to back.
    pub fn forward_batch(&self, xs: &[f64], thetas: &[f64]) -> Result<Vec<f64>> {
        let b = self.batch_len(xs, thetas)?;
        (0..b)
            .map(|i| self.forward(self.example(xs, i), &thetas[i * self.theta_dim..(i + 1) * self.theta_dim]))
            .collect()
    }

    fn batch_len(&self, xs: &[f64], thetas: &[f64]) -> Result<usize> {
        let n = self.input_len();
        let b = xs.len() / n.max(1);
        if xs.len() != b * n || thetas.len() != b * self.theta_dim {
            return Err(Error::ShapeMismatch(format!(
                "batch of {} inputs and {} parameters does not split into examples",
                xs.len(),
                thetas.len()
            )));
        }
        Ok(b)
    }

    fn example<'a>(&self, xs: &'a [f64], i: usize) -> &'a [f64] {
        let n = self.input_len();
        &xs[i * n..(i + 1) * n]
    }

    /// Exact `∇_θ h_γ(x, θ)`.
    pub fn theta_input_gradient(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let trunk = self.trunk_forward(x)?;
        let head = self.head_forward(trunk.feature(), theta)?;
        Ok(self.theta_gradient_of(&head))
    }

    /// `∂h/∂θ` from a cached head pass.
    pub fn theta_gradient_of(&self, head: &HeadPass) -> Vec<f64> {
        let mut scratch = vec![0.0; self.params.len()];
        let d = self.head_backward(head, 1.0, &mut scratch);
        d[self.feature_len()..].to_vec()
    }
}

/// Batched forward cache with the corresponding weight backward.
#[derive(Debug, Default)]
pub struct Tape {
    passes: Vec<(TrunkPass, HeadPass)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.passes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passes.is_empty()
    }

    pub fn clear(&mut self) {
        self.passes.clear();
    }

    /// Runs and caches the batch; replaces any previous cache.
    pub fn forward(&mut self, model: &RatioModel, xs: &[f64], thetas: &[f64]) -> Result<Vec<f64>> {
        let b = model.batch_len(xs, thetas)?;
        self.passes.clear();
        let d = model.theta_dim;
        for i in 0..b {
            let trunk = model.trunk_forward(model.example(xs, i))?;
            let head = model.head_forward(trunk.feature(), &thetas[i * d..(i + 1) * d])?;
            self.passes.push((trunk, head));
        }
        Ok(self.passes.iter().map(|(_, h)| h.logit()).collect())
    }

    /// `Σ_i upstream_i ∂h_i/∂γ` over the cached batch.
    pub fn backward(&self, model: &RatioModel, upstream: &[f64]) -> Result<Vec<f64>> {
        if self.passes.is_empty() {
            return Err(Error::NoCachedForward);
        }
        if upstream.len() != self.passes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} upstream gradients for a batch of {}",
                upstream.len(),
                self.passes.len()
            )));
        }
        let mut grads = vec![0.0; model.param_count()];
        let f = model.feature_len();
        for ((trunk, head), &g) in self.passes.iter().zip(upstream) {
            let d = model.head_backward(head, g, &mut grads);
            model.trunk_backward(trunk, &d[..f], &mut grads);
        }
        Ok(grads)
    }

    /// `∇_θ h` for every cached example.
    pub fn theta_gradients(&self, model: &RatioModel) -> Result<Vec<Vec<f64>>> {
        if self.passes.is_empty() {
            return Err(Error::NoCachedForward);
        }
        Ok(self.passes.iter().map(|(_, h)| model.theta_gradient_of(h)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Activation::{Relu, Silu};
    use rand::Rng as _;

    fn random_params(m: &mut RatioModel, seed: u64) {
        let mut r = rng::stream(seed, 99);
        for w in m.params_mut() {
            *w = r.random_range(-0.8..0.8);
        }
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, 98);
        (0..n).map(|_| r.random_range(-1.5..1.5)).collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    /// Worst relative error of the backward pass against central differences
    /// of `Σ_i c_i h(x_i, θ_i)`.
    fn weight_grad_error(m: &RatioModel, xs: &[f64], thetas: &[f64]) -> f64 {
        let b = thetas.len() / m.theta_dim();
        let coef: Vec<f64> = (0..b).map(|i| 1.0 + 0.5 * i as f64).collect();
        let mut tape = Tape::new();
        tape.forward(m, xs, thetas).unwrap();
        let grads = tape.backward(m, &coef).unwrap();
        let loss = |p: &RatioModel| -> f64 {
            p.forward_batch(xs, thetas).unwrap().iter().zip(&coef).map(|(h, c)| h * c).sum()
        };
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..m.param_count() {
            let mut up = m.clone();
            up.params_mut()[k] += h;
            let mut dn = m.clone();
            dn.params_mut()[k] -= h;
            let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
            worst = worst.max(rel(grads[k], fd));
        }
        worst
    }

    fn stacks() -> Vec<(&'static str, Vec<usize>, Vec<LayerSpec>)> {
        use LayerSpec::*;
        vec![
            ("dense", vec![3], vec![ConcatTheta, Dense { outputs: 4 }, Dense { outputs: 1 }]),
            (
                "dense_silu_per_timestep",
                vec![5, 3],
                vec![Dense { outputs: 4 }, Activation(Silu), Flatten, ConcatTheta, Dense { outputs: 1 }],
            ),
            (
                "transpose_conv1d",
                vec![7, 2],
                vec![
                    TransposeTimeChannel,
                    Conv1d { out_channels: 3, kernel: 5 },
                    Activation(Silu),
                    Flatten,
                    ConcatTheta,
                    Dense { outputs: 2 },
                    Activation(Silu),
                    Dense { outputs: 1 },
                ],
            ),
            (
                "conv2d_relu_pool",
                vec![2, 7, 6],
                vec![
                    Conv2d { out_channels: 3, kernel: 3 },
                    Activation(Relu),
                    AvgPool2d,
                    Flatten,
                    ConcatTheta,
                    Dense { outputs: 1 },
                ],
            ),
        ]
    }

    #[test]
    fn backward_matches_finite_differences_for_every_kind() {
        for (name, shape, specs) in stacks() {
            let mut m = RatioModel::new(&shape, 2, &specs, 1).unwrap();
            random_params(&mut m, 3);
            let n: usize = shape.iter().product();
            let xs = random_vec(3 * n, 4);
            let thetas = random_vec(6, 5);
            let err = weight_grad_error(&m, &xs, &thetas);
            assert!(err < 1e-6, "{name}: {err}");
        }
    }

    #[test]
    fn theta_gradient_matches_finite_differences() {
        for (name, shape, specs) in stacks() {
            let mut m = RatioModel::new(&shape, 2, &specs, 1).unwrap();
            random_params(&mut m, 6);
            let x = random_vec(shape.iter().product(), 7);
            let theta = random_vec(2, 8);
            let exact = m.theta_input_gradient(&x, &theta).unwrap();
            let h = 1e-7;
            for k in 0..2 {
                let mut up = theta.clone();
                up[k] += h;
                let mut dn = theta.clone();
                dn[k] -= h;
                let fd = (m.forward(&x, &up).unwrap() - m.forward(&x, &dn).unwrap()) / (2.0 * h);
                assert!(rel(exact[k], fd) < 1e-5, "{name}[{k}]");
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_logit() {
        let (_, shape, specs) = stacks().pop().unwrap();
        let mut m = RatioModel::new(&shape, 2, &specs, 0).unwrap();
        m.params_mut().iter_mut().for_each(|w| *w = 0.0);
        let x = random_vec(shape.iter().product(), 1);
        assert_eq!(m.forward(&x, &[0.3, -0.2]).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_two_layer_dense() {
        use LayerSpec::*;
        let mut m =
            RatioModel::new(&[1], 1, &[ConcatTheta, Dense { outputs: 2 }, Activation(Relu), Dense { outputs: 1 }], 0)
                .unwrap();
        // W1 = [[1, 2], [-1, 1]], b1 = [0.5, 0], W2 = [3, -2], b2 = 1
        m.set_params(&[1.0, 2.0, -1.0, 1.0, 0.5, 0.0, 3.0, -2.0, 1.0]).unwrap();
        // input (x, θ) = (1, 2): hidden = relu([5.5, 1]) -> 3*5.5 - 2*1 + 1
        assert_eq!(m.forward(&[1.0], &[2.0]).unwrap(), 15.5);
        // (x, θ) = (-1, 0.25): hidden = relu([0, 1.25]) -> -2.5 + 1
        assert_eq!(m.forward(&[-1.0], &[0.25]).unwrap(), -1.5);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let (_, shape, specs) = stacks().remove(2);
        let m = RatioModel::new(&shape, 2, &specs, 2).unwrap();
        let mut tape = Tape::new();
        tape.forward(&m, &random_vec(14 * 2, 1), &random_vec(4, 2)).unwrap();
        assert!(tape.backward(&m, &[0.0, 0.0]).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_least_squares_gradient() {
        use LayerSpec::*;
        let mut m = RatioModel::new(&[2], 1, &[ConcatTheta, Dense { outputs: 1 }], 0).unwrap();
        let w = [0.3, -0.7, 0.2, 0.1];
        m.set_params(&w).unwrap();
        let xs = [1.0, 2.0, -1.0, 0.5, 0.0, 3.0];
        let thetas = [0.5, -2.0, 1.0];
        let ys = [1.0, 0.0, -1.0];
        let mut tape = Tape::new();
        let logits = tape.forward(&m, &xs, &thetas).unwrap();
        // L = ½ Σ (h - y)²  =>  ∂L/∂w = Σ (h - y) [x, θ, 1]
        let resid: Vec<f64> = logits.iter().zip(&ys).map(|(h, y)| h - y).collect();
        let grads = tape.backward(&m, &resid).unwrap();
        let mut expect = [0.0; 4];
        for i in 0..3 {
            let z = [xs[2 * i], xs[2 * i + 1], thetas[i], 1.0];
            for k in 0..4 {
                expect[k] += resid[i] * z[k];
            }
        }
        for k in 0..4 {
            assert!((grads[k] - expect[k]).abs() < 1e-14);
        }
        // linear in θ: the gradient is the θ weight for any input
        assert_eq!(m.theta_input_gradient(&[5.0, -3.0], &[9.0]).unwrap(), vec![0.2]);
    }

    #[test]
    fn ignoring_theta_gives_zero_gradient() {
        use LayerSpec::*;
        let mut m =
            RatioModel::new(&[2], 2, &[ConcatTheta, Dense { outputs: 3 }, Activation(Silu), Dense { outputs: 1 }], 4)
                .unwrap();
        // zero the θ columns of the first dense layer (inputs 2 and 3 of 4)
        for o in 0..3 {
            m.params_mut()[o * 4 + 2] = 0.0;
            m.params_mut()[o * 4 + 3] = 0.0;
        }
        assert_eq!(m.theta_input_gradient(&[0.4, 1.0], &[0.1, -0.3]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn batch_matches_single_examples() {
        let (_, shape, specs) = stacks().remove(3);
        let m = RatioModel::new(&shape, 2, &specs, 9).unwrap();
        let n: usize = shape.iter().product();
        let xs = random_vec(4 * n, 1);
        let thetas = random_vec(8, 2);
        let batch = m.forward_batch(&xs, &thetas).unwrap();
        for i in 0..4 {
            assert_eq!(batch[i], m.forward(&xs[i * n..(i + 1) * n], &thetas[2 * i..2 * i + 2]).unwrap());
        }
    }

    #[test]
    fn tape_errors() {
        let (_, shape, specs) = stacks().remove(0);
        let m = RatioModel::new(&shape, 2, &specs, 9).unwrap();
        let mut tape = Tape::new();
        assert_eq!(tape.backward(&m, &[1.0]), Err(Error::NoCachedForward));
        assert_eq!(tape.theta_gradients(&m).err(), Some(Error::NoCachedForward));
        tape.forward(&m, &[0.0; 6], &[0.0; 4]).unwrap();
        assert!(matches!(tape.backward(&m, &[1.0]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(m.forward(&[0.0; 2], &[0.0; 2]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn initialization_is_seeded() {
        let (_, shape, specs) = stacks().remove(3);
        let a = RatioModel::new(&shape, 2, &specs, 5).unwrap();
        let b = RatioModel::new(&shape, 2, &specs, 5).unwrap();
        let c = RatioModel::new(&shape, 2, &specs, 6).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        // biases start at zero
        let conv = &a.layers()[0];
        assert!(a.params()[conv.offset + conv.weight_count()..conv.offset + conv.params].iter().all(|&v| v == 0.0));
    }
}
