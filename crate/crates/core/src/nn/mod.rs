//! Small multilayer perceptrons with analytic gradients.
//!
//! Networks are stacks of affine layers with leaky-ReLU activations on the
//! hidden layers and a linear output.  Two constructions matter for the
//! rest of the crate:
//!
//! * *zero-bias* networks keep every bias at exactly zero so the network
//!   vanishes at the origin — required of Lyapunov candidates;
//! * [`Mlp::saturate_output`] appends two exact-ReLU layers implementing
//!   `clamp(y, -u_max, u_max) = relu(y + u_max) - u_max - relu(y - u_max)`,
//!   so controller outputs respect actuation limits *by construction* and
//!   the clamp stays representable in the MILP verifier.
//!
//! Gradients are computed by hand-rolled reverse-mode accumulation, with
//! the convention that the subgradient of (leaky) ReLU at the kink is
//! taken on the positive side.

mod adam;
mod checkpoint;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::scalar::{s, Scalar};

/// Per-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `max(z, leak * z)` with the network-wide leak slope.
    LeakyRelu,
    /// Exact `max(z, 0)`; used only by the saturation construction.
    Relu,
    /// Identity; used on output layers.
    Linear,
}

/// One affine layer with its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub act: Activation,
}

/// Errors raised when constructing or loading networks.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    BadArchitecture(String),
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A fully-connected feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    leak: T,
    zero_bias: bool,
    saturation: Option<T>,
}

/// Inputs and pre-activations recorded by [`Mlp::forward_trace`] for one
/// input, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    /// `inputs[l]` is the input fed to layer `l` (so `inputs[0]` is `x`).
    pub inputs: Vec<Array1<T>>,
    /// `pre[l]` is the pre-activation `W_l inputs[l] + b_l`.
    pub pre: Vec<Array1<T>>,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub dw: Vec<Array2<T>>,
    pub db: Vec<Array1<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// All-zero gradients shaped like `net`'s parameters.
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Self {
            dw: net.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
            db: net.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &Self, alpha: T) {
        assert_eq!(self.dw.len(), other.dw.len(), "gradient shapes must match");
        for (a, b) in self.dw.iter_mut().zip(other.dw.iter()) {
            a.zip_mut_with(b, |x, &y| *x += alpha * y);
        }
        for (a, b) in self.db.iter_mut().zip(other.db.iter()) {
            a.zip_mut_with(b, |x, &y| *x += alpha * y);
        }
    }

    /// `self *= alpha`.
    pub fn scale(&mut self, alpha: T) {
        for a in &mut self.dw {
            a.mapv_inplace(|x| x * alpha);
        }
        for a in &mut self.db {
            a.mapv_inplace(|x| x * alpha);
        }
    }

    /// Largest absolute entry, for divergence guards.
    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for a in &self.dw {
            for &x in a.iter() {
                m = m.max(x.abs());
            }
        }
        for a in &self.db {
            for &x in a.iter() {
                m = m.max(x.abs());
            }
        }
        m
    }
}

#[inline]
pub(crate) fn act_apply<T: Scalar>(act: Activation, leak: T, z: T) -> T {
    match act {
        Activation::LeakyRelu => {
            if z >= T::zero() {
                z
            } else {
                leak * z
            }
        }
        Activation::Relu => {
            if z >= T::zero() {
                z
            } else {
                T::zero()
            }
        }
        Activation::Linear => z,
    }
}

#[inline]
pub(crate) fn act_deriv<T: Scalar>(act: Activation, leak: T, z: T) -> T {
    match act {
        // Subgradient at the kink fixed to the positive side.
        Activation::LeakyRelu => {
            if z >= T::zero() {
                T::one()
            } else {
                leak
            }
        }
        Activation::Relu => {
            if z >= T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        Activation::Linear => T::one(),
    }
}

impl<T: Scalar> Mlp<T> {
    /// Builds a network with the given `sizes = [in, hidden..., out]`,
    /// leaky-ReLU hidden layers, linear output, and all parameters zero.
    pub fn zeros(sizes: &[usize], leak: T, zero_bias: bool) -> Result<Self, NnError> {
        Self::validate_sizes(sizes, leak)?;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer {
                w: Array2::zeros((w[1], w[0])),
                b: Array1::zeros(w[1]),
                act: if i + 2 == sizes.len() { Activation::Linear } else { Activation::LeakyRelu },
            })
            .collect();
        Ok(Self { layers, leak, zero_bias, saturation: None })
    }

    /// Builds a network with Glorot-uniform weights `U(-r, r)`,
    /// `r = sqrt(6 / (fan_in + fan_out))`, and zero biases.
    pub fn glorot<R: Rng>(
        sizes: &[usize],
        leak: T,
        zero_bias: bool,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(sizes, leak, zero_bias)?;
        for layer in &mut net.layers {
            let (fan_out, fan_in) = layer.w.dim();
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in layer.w.iter_mut() {
                *w = s::<T>(rng.gen_range(-r..r));
            }
        }
        Ok(net)
    }

    /// Assembles a network from explicit weights/biases; all layers but the
    /// last get leaky-ReLU activations.
    pub fn from_parts(
        weights: Vec<Array2<T>>,
        biases: Vec<Array1<T>>,
        leak: T,
        zero_bias: bool,
    ) -> Result<Self, NnError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(NnError::BadArchitecture(
                "need the same positive number of weight and bias arrays".into(),
            ));
        }
        let n = weights.len();
        let mut layers: Vec<Layer<T>> = Vec::with_capacity(n);
        for (i, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            if w.nrows() != b.len() {
                return Err(NnError::BadArchitecture(format!(
                    "layer {i}: {} rows but {} biases",
                    w.nrows(),
                    b.len()
                )));
            }
            if i > 0 && layers[i - 1].w.nrows() != w.ncols() {
                return Err(NnError::BadArchitecture(format!(
                    "layer {i}: expects {} inputs but previous layer emits {}",
                    w.ncols(),
                    layers[i - 1].w.nrows()
                )));
            }
            let act = if i + 1 == n { Activation::Linear } else { Activation::LeakyRelu };
            layers.push(Layer { w, b, act });
        }
        let net = Self { layers, leak, zero_bias, saturation: None };
        net.check_zero_bias()?;
        Ok(net)
    }

    fn validate_sizes(sizes: &[usize], leak: T) -> Result<(), NnError> {
        if sizes.len() < 2 {
            return Err(NnError::BadArchitecture("need at least input and output sizes".into()));
        }
        if sizes.iter().any(|&n| n == 0) {
            return Err(NnError::BadArchitecture("layer sizes must be positive".into()));
        }
        if !(leak >= T::zero() && leak < T::one()) {
            return Err(NnError::BadArchitecture("leak slope must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn check_zero_bias(&self) -> Result<(), NnError> {
        if self.zero_bias {
            let clean = self.layers.iter().all(|l| l.b.iter().all(|&b| b == T::zero()));
            if !clean {
                return Err(NnError::BadCheckpoint("zero-bias network has nonzero biases".into()));
            }
        }
        Ok(())
    }

    /// `[in, hidden..., out]`, derived from the weight shapes.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].w.ncols()];
        sizes.extend(self.layers.iter().map(|l| l.w.nrows()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn leak(&self) -> T {
        self.leak
    }

    pub fn zero_bias(&self) -> bool {
        self.zero_bias
    }

    /// Saturation bound appended by [`Mlp::saturate_output`], if any.
    pub fn saturation(&self) -> Option<T> {
        self.saturation
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Total number of trainable parameters.
    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Appends two exact-ReLU layers clamping the scalar output to
    /// `[-u_max, u_max]` via
    /// `clamp(y) = relu(y + u_max) - u_max - relu(y - u_max)`.
    ///
    /// Forward passes additionally snap the final output to the bound,
    /// which is what the layer arithmetic computes in exact arithmetic;
    /// without the snap, rounding can overshoot the bound by a few ulps
    /// when the inner output is large.
    ///
    /// Panics if the output is not scalar, `u_max <= 0`, or the network is
    /// zero-bias (the construction needs bias terms).
    pub fn saturate_output(mut self, u_max: T) -> Self {
        assert_eq!(self.output_dim(), 1, "saturation requires a scalar output");
        assert!(u_max > T::zero(), "saturation bound must be positive");
        assert!(!self.zero_bias, "zero-bias networks cannot carry saturation biases");
        assert!(self.saturation.is_none(), "output is already saturated");
        let one = T::one();
        self.layers.push(Layer {
            w: Array2::from_shape_vec((2, 1), vec![one, one]).unwrap(),
            b: Array1::from(vec![u_max, -u_max]),
            act: Activation::Relu,
        });
        self.layers.push(Layer {
            w: Array2::from_shape_vec((1, 2), vec![one, -one]).unwrap(),
            b: Array1::from(vec![-u_max]),
            act: Activation::Linear,
        });
        self.saturation = Some(u_max);
        self
    }

    /// Plain forward pass.
    pub fn forward(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let mut a = Array1::from(x.to_vec());
        for layer in &self.layers {
            let z = layer.w.dot(&a) + &layer.b;
            a = z.mapv(|v| act_apply(layer.act, self.leak, v));
        }
        if let Some(u) = self.saturation {
            a.mapv_inplace(|v| v.min(u).max(-u));
        }
        a.to_vec()
    }

    /// Forward pass for scalar-output networks.
    pub fn eval_scalar(&self, x: &[T]) -> T {
        assert_eq!(self.output_dim(), 1, "eval_scalar requires a scalar output");
        self.forward(x)[0]
    }

    /// Applies a scalar-output network independently to consecutive
    /// `input_dim`-sized blocks of `x` (one block per vehicle).
    pub fn eval_blockwise(&self, x: &[T]) -> Vec<T> {
        let d = self.input_dim();
        assert_eq!(self.output_dim(), 1, "blockwise evaluation requires a scalar output");
        assert_eq!(x.len() % d, 0, "input length must be a multiple of the input dimension");
        x.chunks(d).map(|c| self.forward(c)[0]).collect()
    }

    /// Forward pass that records the trace needed by [`Mlp::backward`].
    pub fn forward_trace(&self, x: &[T]) -> (Vec<T>, ForwardTrace<T>) {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = Array1::from(x.to_vec());
        for layer in &self.layers {
            let z = layer.w.dot(&a) + &layer.b;
            inputs.push(a);
            a = z.mapv(|v| act_apply(layer.act, self.leak, v));
            pre.push(z);
        }
        if let Some(u) = self.saturation {
            a.mapv_inplace(|v| v.min(u).max(-u));
        }
        (a.to_vec(), ForwardTrace { inputs, pre })
    }

    /// Reverse-mode accumulation through a recorded trace.
    ///
    /// `out_grad` is `dL/d(output)`; returns parameter gradients and
    /// `dL/d(input)`.  Panics if the trace does not match this network's
    /// shape (e.g. it was recorded before layers were appended).
    pub fn backward(&self, trace: &ForwardTrace<T>, out_grad: &[T]) -> (Gradients<T>, Vec<T>) {
        assert_eq!(trace.pre.len(), self.layers.len(), "trace does not match network depth");
        assert_eq!(out_grad.len(), self.output_dim(), "output gradient dimension mismatch");
        let mut grads = Gradients::zeros_like(self);
        let mut g = Array1::from(out_grad.to_vec());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            assert_eq!(trace.pre[l].len(), layer.w.nrows(), "stale trace for layer {l}");
            let gz =
                &g * &trace.pre[l].mapv(|z| act_deriv(layer.act, self.leak, z));
            // dW = gz * input^T, db = gz.
            let input = &trace.inputs[l];
            for (r, &gzr) in gz.iter().enumerate() {
                if gzr != T::zero() {
                    for (c, &ic) in input.iter().enumerate() {
                        grads.dw[l][(r, c)] += gzr * ic;
                    }
                }
            }
            grads.db[l].zip_mut_with(&gz, |d, &v| *d += v);
            g = layer.w.t().dot(&gz);
        }
        if self.zero_bias {
            // Biases are frozen at zero: project their gradients away.
            for db in &mut grads.db {
                db.fill(T::zero());
            }
        }
        if self.saturation.is_some() {
            // The two clamp layers are structural, not learnable: freeze them
            // so optimiser steps cannot distort the output bound.
            for l in self.layers.len() - 2..self.layers.len() {
                grads.dw[l].fill(T::zero());
                grads.db[l].fill(T::zero());
            }
        }
        (grads, g.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_linear(w: f64) -> Mlp<f64> {
        Mlp::from_parts(
            vec![Array2::from_shape_vec((1, 1), vec![w]).unwrap()],
            vec![Array1::from(vec![0.0])],
            0.1,
            false,
        )
        .unwrap()
    }

    #[test]
    fn forward_identity_and_leak() {
        let id = tiny_linear(1.0);
        assert_eq!(id.forward(&[3.5]), vec![3.5]);

        // One hidden leaky layer: negative inputs are scaled by the leak.
        let net = Mlp::from_parts(
            vec![
                Array2::from_shape_vec((1, 1), vec![1.0]).unwrap(),
                Array2::from_shape_vec((1, 1), vec![1.0]).unwrap(),
            ],
            vec![Array1::from(vec![0.0]), Array1::from(vec![0.0])],
            0.1,
            false,
        )
        .unwrap();
        assert_eq!(net.forward(&[-1.0]), vec![-0.1]);
        assert_eq!(net.forward(&[2.0]), vec![2.0]);
    }

    #[test]
    fn zero_bias_network_vanishes_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::glorot(&[4, 8, 8, 1], 0.1, true, &mut rng).unwrap();
        assert_eq!(net.eval_scalar(&[0.0; 4]), 0.0);
    }

    #[test]
    fn architecture_validation() {
        assert!(Mlp::<f64>::zeros(&[2], 0.1, false).is_err());
        assert!(Mlp::<f64>::zeros(&[2, 0, 1], 0.1, false).is_err());
        assert!(Mlp::<f64>::zeros(&[2, 4, 1], 1.0, false).is_err());
        assert!(Mlp::<f64>::zeros(&[2, 4, 1], -0.1, false).is_err());
        let sizes = Mlp::<f64>::zeros(&[2, 4, 3, 1], 0.1, false).unwrap().layer_sizes();
        assert_eq!(sizes, vec![2, 4, 3, 1]);
    }

    #[test]
    fn saturation_clamps_exactly() {
        let net = tiny_linear(1.0).saturate_output(3.0);
        assert_eq!(net.eval_scalar(&[5.0]), 3.0);
        assert_eq!(net.eval_scalar(&[-5.0]), -3.0);
        assert_eq!(net.eval_scalar(&[0.0]), 0.0);
        assert_eq!(net.eval_scalar(&[2.5]), 2.5);
        assert_eq!(net.eval_scalar(&[-3.0]), -3.0);
        assert_eq!(net.layer_sizes(), vec![1, 1, 2, 1]);
        assert_eq!(net.saturation(), Some(3.0));
    }

    #[test]
    fn saturated_outputs_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = Mlp::glorot(&[2, 8, 8, 1], 0.1, false, &mut rng)
            .unwrap()
            .saturate_output(3.0);
        for _ in 0..10_000 {
            let x: [f64; 2] = [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)];
            let u = net.eval_scalar(&x);
            assert!(u.abs() <= 3.0, "output {u} escapes the bound");
        }
    }

    #[test]
    fn clamp_layer_gradients_are_frozen() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let net = Mlp::glorot(&[2, 4, 1], 0.1, false, &mut rng)
            .unwrap()
            .saturate_output(3.0);
        let (_, trace) = net.forward_trace(&[0.3, -0.2]);
        let (grads, _) = net.backward(&trace, &[1.0]);
        let depth = grads.dw.len();
        for l in depth - 2..depth {
            assert!(grads.dw[l].iter().all(|&g| g == 0.0), "clamp weights got gradient");
            assert!(grads.db[l].iter().all(|&g| g == 0.0), "clamp biases got gradient");
        }
        assert!(grads.dw[0].iter().any(|&g| g != 0.0), "inner layers must still learn");
    }

    #[test]
    fn blockwise_evaluation_is_per_vehicle() {
        let net = tiny_linear(2.0);
        assert_eq!(net.eval_blockwise(&[1.0, -1.0, 0.5]), vec![2.0, -2.0, 1.0]);
    }

    #[test]
    fn backward_matches_hand_gradient_for_linear_layer() {
        let net = Mlp::from_parts(
            vec![Array2::from_shape_vec((1, 2), vec![0.5, -0.25]).unwrap()],
            vec![Array1::from(vec![0.1])],
            0.1,
            false,
        )
        .unwrap();
        let (_, trace) = net.forward_trace(&[2.0, 4.0]);
        let (grads, gin) = net.backward(&trace, &[1.0]);
        // dL/dW = g * x^T, dL/db = g, dL/dx = W^T g.
        assert_eq!(grads.dw[0][(0, 0)], 2.0);
        assert_eq!(grads.dw[0][(0, 1)], 4.0);
        assert_eq!(grads.db[0][0], 1.0);
        assert_eq!(gin, vec![0.5, -0.25]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut net = Mlp::glorot(&[2, 8, 8, 1], 0.1, false, &mut rng).unwrap();
        let h = 1e-6;
        for _ in 0..100 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let (_, trace) = net.forward_trace(&x);
            let (grads, gin) = net.backward(&trace, &[1.0]);

            let mut num = Vec::new();
            let mut ana = Vec::new();
            for l in 0..net.layers.len() {
                for idx in 0..net.layers[l].w.len() {
                    let orig = net.layers[l].w.as_slice().unwrap()[idx];
                    net.layers_mut()[l].w.as_slice_mut().unwrap()[idx] = orig + h;
                    let up = net.eval_scalar(&x);
                    net.layers_mut()[l].w.as_slice_mut().unwrap()[idx] = orig - h;
                    let dn = net.eval_scalar(&x);
                    net.layers_mut()[l].w.as_slice_mut().unwrap()[idx] = orig;
                    num.push((up - dn) / (2.0 * h));
                    ana.push(grads.dw[l].as_slice().unwrap()[idx]);
                }
            }
            // Input gradient via central differences too.
            for i in 0..2 {
                let mut xp = x;
                xp[i] += h;
                let mut xm = x;
                xm[i] -= h;
                num.push((net.eval_scalar(&xp) - net.eval_scalar(&xm)) / (2.0 * h));
                ana.push(gin[i]);
            }
            let diff: f64 = num
                .iter()
                .zip(&ana)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = num.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff / norm.max(1e-12) < 1e-4, "finite-difference mismatch {diff}");
        }
    }

    #[test]
    fn zero_bias_gradients_are_projected() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let net = Mlp::glorot(&[2, 4, 1], 0.1, true, &mut rng).unwrap();
        let (_, trace) = net.forward_trace(&[0.7, -0.3]);
        let (grads, _) = net.backward(&trace, &[1.0]);
        for db in &grads.db {
            assert!(db.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn glorot_init_is_seeded_and_in_range() {
        let mut r1 = ChaCha8Rng::seed_from_u64(13);
        let mut r2 = ChaCha8Rng::seed_from_u64(13);
        let a = Mlp::<f64>::glorot(&[2, 8, 1], 0.1, false, &mut r1).unwrap();
        let b = Mlp::<f64>::glorot(&[2, 8, 1], 0.1, false, &mut r2).unwrap();
        assert_eq!(a, b);
        let bound = (6.0f64 / (2.0 + 8.0)).sqrt();
        for &w in a.layers()[0].w.iter() {
            assert!(w.abs() <= bound);
        }
    }

    #[test]
    fn single_precision_instantiation_works() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::<f32>::glorot(&[2, 4, 1], 0.1, false, &mut rng).unwrap();
        let y = net.eval_scalar(&[0.5f32, -0.5]);
        assert!(y.is_finite());
    }
}
