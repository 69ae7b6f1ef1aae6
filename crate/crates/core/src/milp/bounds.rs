//! Interval propagation through a network over a box of inputs.
//!
//! The pre-activation intervals decide which neurons need a binary in the
//! big-M encoding (only sign-straddling ones do) and supply the big-M
//! constants themselves, so soundness here is load-bearing for the whole
//! verifier: every reachable activation must lie inside its interval.

use crate::nn::{act_apply, Mlp};
use crate::scalar::Scalar;

/// Per-layer pre- and post-activation intervals for one network over one
/// input box.
#[derive(Debug, Clone)]
pub struct ActivationBounds<T> {
    /// The input box the propagation started from.
    pub input: Vec<(T, T)>,
    /// `pre[l][j]`: interval of layer `l` neuron `j` before activation.
    pub pre: Vec<Vec<(T, T)>>,
    /// `post[l][j]`: interval after activation.
    pub post: Vec<Vec<(T, T)>>,
}

impl<T: Scalar> ActivationBounds<T> {
    /// Intervals feeding layer `l`: the input box for `l = 0`, otherwise
    /// the previous layer's post-activation intervals.
    pub fn layer_input(&self, l: usize) -> &[(T, T)] {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }

    /// Interval of the (single) network output.
    pub fn output(&self) -> (T, T) {
        let last = self.post.last().expect("network has at least one layer");
        assert_eq!(last.len(), 1, "output interval is defined for scalar outputs");
        last[0]
    }
}

/// Propagates an input box through the network with interval arithmetic.
///
/// Activations are monotone, so each post interval is the activation
/// image of the pre interval.  For output-saturated networks the final
/// interval is additionally clipped to `±u_max`: the saturation layers
/// guarantee the true output never leaves that range even though interval
/// arithmetic alone cannot see the cancellation.
pub fn propagate_bounds<T: Scalar>(net: &Mlp<T>, input: &[(T, T)]) -> ActivationBounds<T> {
    assert_eq!(input.len(), net.input_dim(), "input box dimension mismatch");
    for &(lo, hi) in input {
        assert!(lo <= hi, "empty input interval");
    }
    let mut pre = Vec::with_capacity(net.layers().len());
    let mut post = Vec::with_capacity(net.layers().len());
    let mut prev: Vec<(T, T)> = input.to_vec();
    for layer in net.layers() {
        let rows = layer.w.nrows();
        let mut pre_l = Vec::with_capacity(rows);
        let mut post_l = Vec::with_capacity(rows);
        for j in 0..rows {
            let mut lo = layer.b[j];
            let mut hi = layer.b[j];
            for (k, &(plo, phi)) in prev.iter().enumerate() {
                let w = layer.w[(j, k)];
                if w >= T::zero() {
                    lo += w * plo;
                    hi += w * phi;
                } else {
                    lo += w * phi;
                    hi += w * plo;
                }
            }
            let a = (act_apply(layer.act, net.leak(), lo), act_apply(layer.act, net.leak(), hi));
            pre_l.push((lo, hi));
            post_l.push(a);
        }
        prev = post_l.clone();
        pre.push(pre_l);
        post.push(post_l);
    }
    if let Some(u) = net.saturation() {
        let out = &mut post.last_mut().expect("at least one layer")[0];
        out.0 = out.0.max(-u);
        out.1 = out.1.min(u);
    }
    ActivationBounds { input: input.to_vec(), pre, post }
}
