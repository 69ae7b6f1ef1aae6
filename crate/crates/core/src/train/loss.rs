//! Lyapunov-condition losses and the shaped control objective, each paired
//! with reverse-mode gradients.  The control objective backpropagates
//! through an H-step closed-loop rollout of the platoon error dynamics.

use ndarray::Array1;

use crate::dynamics::{step_platoon_error, PlatoonModel};
use crate::nn::{ForwardTrace, Gradients, Mlp};
use crate::scalar::Scalar;

use super::{LyapunovHyper, ShapingWeights};

fn l1_norm<T: Scalar>(x: &[T]) -> T {
    x.iter().map(|&v| v.abs()).sum()
}

fn l2_norm<T: Scalar>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// Positivity-condition residual `eps1 * |x|_1 - V(x)`.
///
/// Positive values are violations; the certificate requires the maximum
/// over the region to be non-positive.
pub fn loss_pos<T: Scalar>(v: &Mlp<T>, x: &[T], eps1: T) -> T {
    eps1 * l1_norm(x) - v.eval_scalar(x)
}

/// Decrease-condition residual `V(f(x, pi(x))) - (1 + eps2) * V(x)`.
pub fn loss_dec<T: Scalar>(
    v: &Mlp<T>,
    pi: &Mlp<T>,
    model: &PlatoonModel<T>,
    x: &[T],
    eps2: T,
) -> T {
    let u = pi.eval_blockwise(x);
    let next = step_platoon_error(model, x, &u);
    v.eval_scalar(&next) - (T::one() + eps2) * v.eval_scalar(x)
}

/// Hinged sum of both condition residuals at one state.
pub fn lyapunov_loss<T: Scalar>(
    v: &Mlp<T>,
    pi: &Mlp<T>,
    model: &PlatoonModel<T>,
    x: &[T],
    hyper: &LyapunovHyper<T>,
) -> T {
    hyper.lambda_pos * loss_pos(v, x, hyper.eps1).max(T::zero())
        + hyper.lambda_dec * loss_dec(v, pi, model, x, hyper.eps2).max(T::zero())
}

/// [`lyapunov_loss`] with gradients for both networks.
///
/// The decrease hinge reaches the controller through the input-matrix
/// column of each vehicle; inactive hinges contribute nothing.
pub fn lyapunov_loss_grads<T: Scalar>(
    v: &Mlp<T>,
    pi: &Mlp<T>,
    model: &PlatoonModel<T>,
    x: &[T],
    hyper: &LyapunovHyper<T>,
) -> (T, Gradients<T>, Gradients<T>) {
    let n = model.n();
    let (v_now_out, v_now_trace) = v.forward_trace(x);
    let v_now = v_now_out[0];

    let mut u = Vec::with_capacity(n);
    let mut pi_traces = Vec::with_capacity(n);
    for i in 0..n {
        let (out, trace) = pi.forward_trace(&x[2 * i..2 * i + 2]);
        u.push(out[0]);
        pi_traces.push(trace);
    }
    let next = step_platoon_error(model, x, &u);
    let (v_next_out, v_next_trace) = v.forward_trace(&next);
    let v_next = v_next_out[0];

    let pos = hyper.eps1 * l1_norm(x) - v_now;
    let dec = v_next - (T::one() + hyper.eps2) * v_now;
    let loss = hyper.lambda_pos * pos.max(T::zero()) + hyper.lambda_dec * dec.max(T::zero());

    let mut grads_v = Gradients::zeros_like(v);
    let mut grads_pi = Gradients::zeros_like(pi);
    if pos > T::zero() {
        let (gv, _) = v.backward(&v_now_trace, &[-hyper.lambda_pos]);
        grads_v.add_scaled(&gv, T::one());
    }
    if dec > T::zero() {
        let (gv_next, g_input) = v.backward(&v_next_trace, &[hyper.lambda_dec]);
        grads_v.add_scaled(&gv_next, T::one());
        let (gv_now, _) =
            v.backward(&v_now_trace, &[-hyper.lambda_dec * (T::one() + hyper.eps2)]);
        grads_v.add_scaled(&gv_now, T::one());
        // dL/du = B^T dL/dx+, then through each vehicle's controller copy.
        let du = model.b_bar().t().dot(&Array1::from(g_input));
        for i in 0..n {
            let (gp, _) = pi.backward(&pi_traces[i], &[du[i]]);
            grads_pi.add_scaled(&gp, T::one());
        }
    }
    (loss, grads_v, grads_pi)
}

/// Per-term values of the shaped control objective (already weighted).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlBreakdown<T> {
    /// Squared shortfall below the distance threshold, over visited states.
    pub safety: T,
    /// Squared control effort over applied inputs.
    pub action: T,
    /// Squared change between consecutive inputs.
    pub slew: T,
    /// Hinged per-vehicle error-norm growth across steps.
    pub stability: T,
}

impl<T: Scalar> ControlBreakdown<T> {
    /// Sum of all terms.
    pub fn total(&self) -> T {
        self.safety + self.action + self.slew + self.stability
    }
}

struct Rollout<T> {
    states: Vec<Vec<T>>,
    inputs: Vec<Vec<T>>,
    traces: Vec<Vec<ForwardTrace<T>>>,
}

fn roll_out<T: Scalar>(pi: &Mlp<T>, model: &PlatoonModel<T>, x0: &[T], horizon: usize) -> Rollout<T> {
    let n = model.n();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut traces = Vec::with_capacity(horizon);
    states.push(x0.to_vec());
    for _ in 0..horizon {
        let x = states.last().expect("rollout starts non-empty");
        let mut u = Vec::with_capacity(n);
        let mut step_traces = Vec::with_capacity(n);
        for i in 0..n {
            let (out, trace) = pi.forward_trace(&x[2 * i..2 * i + 2]);
            u.push(out[0]);
            step_traces.push(trace);
        }
        let next = step_platoon_error(model, x, &u);
        states.push(next);
        inputs.push(u);
        traces.push(step_traces);
    }
    Rollout { states, inputs, traces }
}

/// Shaped control objective over an H-step closed-loop rollout from `x0`.
///
/// Safety penalises states after the first input (`k = 1..=H`), action the
/// applied inputs (`k = 0..H`), slew consecutive input differences, and
/// stability any per-vehicle growth of the error norm between steps.
pub fn control_loss<T: Scalar>(
    pi: &Mlp<T>,
    model: &PlatoonModel<T>,
    x0: &[T],
    w: &ShapingWeights<T>,
) -> ControlBreakdown<T> {
    control_loss_grads(pi, model, x0, w).0
}

/// [`control_loss`] with the controller gradient from backpropagation
/// through time over the shared dynamics step.
pub fn control_loss_grads<T: Scalar>(
    pi: &Mlp<T>,
    model: &PlatoonModel<T>,
    x0: &[T],
    w: &ShapingWeights<T>,
) -> (ControlBreakdown<T>, Gradients<T>) {
    let n = model.n();
    let h = w.horizon;
    assert_eq!(x0.len(), 2 * n, "state length must be 2n");
    let roll = roll_out(pi, model, x0, h);
    let two = T::one() + T::one();

    let mut breakdown = ControlBreakdown::default();
    // Direct partials of the loss in each state and input.
    let mut dx = vec![vec![T::zero(); 2 * n]; h + 1];
    let mut du = vec![vec![T::zero(); n]; h];

    for k in 1..=h {
        for i in 0..n {
            let distance = roll.states[k][2 * i] + model.gaps()[i];
            let shortfall = (w.threshold - distance).max(T::zero());
            if shortfall > T::zero() {
                breakdown.safety += w.safety * shortfall * shortfall;
                dx[k][2 * i] -= two * w.safety * shortfall;
            }
        }
    }
    for k in 0..h {
        for i in 0..n {
            let uk = roll.inputs[k][i];
            breakdown.action += w.action * uk * uk;
            du[k][i] += two * w.action * uk;
            if k > 0 {
                let delta = uk - roll.inputs[k - 1][i];
                breakdown.slew += w.slew * delta * delta;
                du[k][i] += two * w.slew * delta;
                du[k - 1][i] -= two * w.slew * delta;
            }
            let norm_now = l2_norm(&roll.states[k][2 * i..2 * i + 2]);
            let norm_next = l2_norm(&roll.states[k + 1][2 * i..2 * i + 2]);
            let growth = norm_next - norm_now;
            if growth > T::zero() {
                breakdown.stability += w.stability * growth;
                if norm_next > T::zero() {
                    dx[k + 1][2 * i] += w.stability * roll.states[k + 1][2 * i] / norm_next;
                    dx[k + 1][2 * i + 1] += w.stability * roll.states[k + 1][2 * i + 1] / norm_next;
                }
                if norm_now > T::zero() {
                    dx[k][2 * i] -= w.stability * roll.states[k][2 * i] / norm_now;
                    dx[k][2 * i + 1] -= w.stability * roll.states[k][2 * i + 1] / norm_now;
                }
            }
        }
    }

    // Adjoint sweep: lambda_k = dL/dx_k with downstream steps folded in.
    let mut grads = Gradients::zeros_like(pi);
    let mut lambda = Array1::from(dx[h].clone());
    for k in (0..h).rev() {
        let through_b = model.b_bar().t().dot(&lambda);
        let mut next_lambda = Array1::from(dx[k].clone()) + model.a_bar().t().dot(&lambda);
        for i in 0..n {
            let du_total = du[k][i] + through_b[i];
            let (gp, g_in) = pi.backward(&roll.traces[k][i], &[du_total]);
            grads.add_scaled(&gp, T::one());
            next_lambda[2 * i] += g_in[0];
            next_lambda[2 * i + 1] += g_in[1];
        }
        lambda = next_lambda;
    }
    (breakdown, grads)
}
