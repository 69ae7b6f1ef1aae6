//! Adam optimiser over [`Mlp`] parameters.

use ndarray::{Array1, Array2};

use super::{Gradients, Mlp};
use crate::scalar::{s, Scalar};

/// Adam state (first/second moments per parameter).
///
/// Defaults follow common practice: `beta1 = 0.9`, `beta2 = 0.999`,
/// `eps = 1e-8`.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    t: u64,
    m_w: Vec<Array2<T>>,
    m_b: Vec<Array1<T>>,
    v_w: Vec<Array2<T>>,
    v_b: Vec<Array1<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Fresh state shaped like `net` with the given learning rate.
    pub fn new(net: &Mlp<T>, lr: T) -> Self {
        let zw = || net.layers().iter().map(|l| Array2::zeros(l.w.raw_dim())).collect::<Vec<_>>();
        let zb = || net.layers().iter().map(|l| Array1::zeros(l.b.raw_dim())).collect::<Vec<_>>();
        Self {
            lr,
            beta1: s(0.9),
            beta2: s(0.999),
            eps: s(1e-8),
            t: 0,
            m_w: zw(),
            m_b: zb(),
            v_w: zw(),
            v_b: zb(),
        }
    }

    pub fn learning_rate(&self) -> T {
        self.lr
    }

    /// Applies one Adam update of `net` along `grads`.
    ///
    /// For zero-bias networks the bias gradients are zero already (the
    /// backward pass projects them), so biases stay pinned at zero.
    pub fn step(&mut self, net: &mut Mlp<T>, grads: &Gradients<T>) {
        assert_eq!(grads.dw.len(), net.layers().len(), "gradient shapes must match network");
        self.t += 1;
        let t = self.t as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let one = T::one();
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            for (((w, &g), m), v) in layer
                .w
                .iter_mut()
                .zip(grads.dw[l].iter())
                .zip(self.m_w[l].iter_mut())
                .zip(self.v_w[l].iter_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *w = *w - lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            }
            for (((b, &g), m), v) in layer
                .b
                .iter_mut()
                .zip(grads.db[l].iter())
                .zip(self.m_b[l].iter_mut())
                .zip(self.v_b[l].iter_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *b = *b - lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            }
        }
    }
}
