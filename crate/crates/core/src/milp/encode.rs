//! Big-M encodings of networks, absolute values and the closed-loop
//! Lyapunov conditions.
//!
//! Every piecewise-linear kink gets a 0/1 variable only when interval
//! propagation says its sign is genuinely undecided over the input box;
//! fixed-sign neurons collapse to linear rows.  With all binaries integral
//! the constraints pin each activation to its exact value, so MILP optima
//! equal true network-loss optima.

use super::bounds::{propagate_bounds, ActivationBounds};
use super::lp::{LinearProgram, Sense};
use crate::dynamics::PlatoonModel;
use crate::nn::{Activation, Mlp};
use crate::scalar::Scalar;

/// Which network a binary belongs to inside a verification MILP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetTag {
    /// Candidate Lyapunov function evaluated at the current state.
    V,
    /// Candidate Lyapunov function evaluated at the successor state.
    VNext,
    /// Controller copy for vehicle `i`.
    Pi(usize),
}

/// Meaning of one 0/1 variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryRole {
    /// Activation sign of a neuron (`1` means nonnegative input).
    Neuron { net: NetTag, layer: usize, neuron: usize },
    /// Sign of an input coordinate in an absolute-value term.
    InputSign { coord: usize },
}

/// A mixed-integer program: boxed LP plus the indices that must be 0/1.
#[derive(Debug, Clone)]
pub struct MilpInstance<T> {
    pub lp: LinearProgram<T>,
    /// Variable indices constrained to {0, 1}.
    pub binaries: Vec<usize>,
    /// Parallel to `binaries`.
    pub roles: Vec<BinaryRole>,
    /// Variables holding the state the instance quantifies over.
    pub input_vars: Vec<usize>,
}

impl<T: Scalar> MilpInstance<T> {
    pub fn num_binaries(&self) -> usize {
        self.binaries.len()
    }

    /// Extracts the state coordinates from a full LP point.
    pub fn input_of(&self, x: &[T]) -> Vec<T> {
        self.input_vars.iter().map(|&j| x[j]).collect()
    }
}

/// Incrementally builds an instance.
#[derive(Debug, Clone)]
pub struct MilpBuilder<T> {
    pub lp: LinearProgram<T>,
    binaries: Vec<usize>,
    roles: Vec<BinaryRole>,
}

impl<T: Scalar> MilpBuilder<T> {
    pub fn new() -> Self {
        Self { lp: LinearProgram::new(), binaries: Vec::new(), roles: Vec::new() }
    }

    pub fn add_continuous(&mut self, lower: T, upper: T) -> usize {
        self.lp.add_var(lower, upper)
    }

    pub fn add_binary(&mut self, role: BinaryRole) -> usize {
        let z = self.lp.add_var(T::zero(), T::one());
        self.binaries.push(z);
        self.roles.push(role);
        z
    }

    pub fn finish(self, input_vars: Vec<usize>) -> MilpInstance<T> {
        MilpInstance { lp: self.lp, binaries: self.binaries, roles: self.roles, input_vars }
    }
}

impl<T: Scalar> Default for MilpBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Encodes `y = leaky(x)` for `x ∈ [lo, hi]` with slope `alpha` on the
/// negative side; returns the binary if the sign is undecided.
///
/// Fixed-sign cases emit one equality.  The straddling case uses the
/// exact big-M rows: with the binary at 1 they force `y = x, x ≥ 0`, at 0
/// they force `y = alpha·x, x ≤ 0`, and every relaxation point lies
/// between the two linear pieces.
pub fn encode_leaky_relu<T: Scalar>(
    b: &mut MilpBuilder<T>,
    x: usize,
    y: usize,
    lo: T,
    hi: T,
    alpha: T,
    role: BinaryRole,
) -> Option<usize> {
    assert!(lo <= hi, "empty pre-activation interval");
    let one = T::one();
    if lo >= T::zero() {
        b.lp.add_row(vec![(y, one), (x, -one)], Sense::Eq, T::zero());
        return None;
    }
    if hi <= T::zero() {
        b.lp.add_row(vec![(y, one), (x, -alpha)], Sense::Eq, T::zero());
        return None;
    }
    let z = b.add_binary(role);
    let gap = one - alpha;
    // y ≥ x and y ≥ alpha·x.
    b.lp.add_row(vec![(x, one), (y, -one)], Sense::Le, T::zero());
    b.lp.add_row(vec![(x, alpha), (y, -one)], Sense::Le, T::zero());
    // y ≤ x - (1-alpha)·lo·(1-z).
    b.lp.add_row(vec![(y, one), (x, -one), (z, -gap * lo)], Sense::Le, -gap * lo);
    // y ≤ alpha·x + (1-alpha)·hi·z.
    b.lp.add_row(vec![(y, one), (x, -alpha), (z, -gap * hi)], Sense::Le, T::zero());
    // Indicator rows tie the binary to the sign of x.
    b.lp.add_row(vec![(x, one), (z, -hi)], Sense::Le, T::zero());
    b.lp.add_row(vec![(x, -one), (z, -lo)], Sense::Le, -lo);
    Some(z)
}

/// Encodes `t = |x|` for `x ∈ [lo, hi]`; returns the binary if the sign
/// is undecided (binary at 1 means `x ≥ 0`).
pub fn encode_abs<T: Scalar>(
    b: &mut MilpBuilder<T>,
    x: usize,
    t: usize,
    lo: T,
    hi: T,
    role: BinaryRole,
) -> Option<usize> {
    assert!(lo <= hi, "empty interval");
    let one = T::one();
    let two = one + one;
    if lo >= T::zero() {
        b.lp.add_row(vec![(t, one), (x, -one)], Sense::Eq, T::zero());
        return None;
    }
    if hi <= T::zero() {
        b.lp.add_row(vec![(t, one), (x, one)], Sense::Eq, T::zero());
        return None;
    }
    let s = b.add_binary(role);
    // t ≥ x and t ≥ -x.
    b.lp.add_row(vec![(x, one), (t, -one)], Sense::Le, T::zero());
    b.lp.add_row(vec![(x, -one), (t, -one)], Sense::Le, T::zero());
    // t ≤ x - 2·lo·(1-s).
    b.lp.add_row(vec![(t, one), (x, -one), (s, -two * lo)], Sense::Le, -two * lo);
    // t ≤ -x + 2·hi·s.
    b.lp.add_row(vec![(t, one), (x, one), (s, -two * hi)], Sense::Le, T::zero());
    Some(s)
}

/// Bounds of `|x|` over `[lo, hi]`.
fn abs_interval<T: Scalar>(lo: T, hi: T) -> (T, T) {
    if lo >= T::zero() {
        (lo, hi)
    } else if hi <= T::zero() {
        (-hi, -lo)
    } else {
        (T::zero(), (-lo).max(hi))
    }
}

/// Encodes one network evaluation on existing input variables and
/// returns the output variable indices.
///
/// `bounds` must come from [`propagate_bounds`] over the same box the
/// input variables live in.  Fixed-sign leaky neurons with nonnegative
/// input reuse the pre-activation variable directly.
pub fn encode_network<T: Scalar>(
    b: &mut MilpBuilder<T>,
    net: &Mlp<T>,
    inputs: &[usize],
    bounds: &ActivationBounds<T>,
    tag: NetTag,
) -> Vec<usize> {
    assert_eq!(inputs.len(), net.input_dim(), "input variable count mismatch");
    let mut prev: Vec<usize> = inputs.to_vec();
    for (l, layer) in net.layers().iter().enumerate() {
        let mut next = Vec::with_capacity(layer.w.nrows());
        for j in 0..layer.w.nrows() {
            let (plo, phi) = bounds.pre[l][j];
            // The output layer is linear: give its variable the (possibly
            // saturation-clipped) post interval.
            let (vlo, vhi) =
                if layer.act == Activation::Linear { bounds.post[l][j] } else { (plo, phi) };
            let p = b.add_continuous(vlo, vhi);
            let mut coeffs = vec![(p, T::one())];
            for (k, &a) in prev.iter().enumerate() {
                let w = layer.w[(j, k)];
                if w != T::zero() {
                    coeffs.push((a, -w));
                }
            }
            b.lp.add_row(coeffs, Sense::Eq, layer.b[j]);
            let out = match layer.act {
                Activation::Linear => p,
                act => {
                    if plo >= T::zero() {
                        p // identity region: activation variable aliases the input
                    } else {
                        let alpha =
                            if act == Activation::Relu { T::zero() } else { net.leak() };
                        let (qlo, qhi) = bounds.post[l][j];
                        let y = b.add_continuous(qlo, qhi);
                        let role = BinaryRole::Neuron { net: tag, layer: l, neuron: j };
                        encode_leaky_relu(b, p, y, plo, phi, alpha, role);
                        y
                    }
                }
            };
            next.push(out);
        }
        prev = next;
    }
    prev
}

/// Builds the positivity check: maximise `eps1·‖x‖₁ − V(x)` over the box.
///
/// The condition `V(x) ≥ eps1·‖x‖₁` holds on the box iff the optimum is
/// at most zero.
pub fn build_pos_milp<T: Scalar>(v: &Mlp<T>, region: &[(T, T)], eps1: T) -> MilpInstance<T> {
    assert_eq!(v.input_dim(), region.len(), "region dimension mismatch");
    assert_eq!(v.output_dim(), 1, "Lyapunov candidate must be scalar");
    let mut b = MilpBuilder::new();
    let xs: Vec<usize> = region.iter().map(|&(lo, hi)| b.add_continuous(lo, hi)).collect();
    for (i, (&x, &(lo, hi))) in xs.iter().zip(region).enumerate() {
        let (tlo, thi) = abs_interval(lo, hi);
        let t = b.add_continuous(tlo, thi);
        encode_abs(&mut b, x, t, lo, hi, BinaryRole::InputSign { coord: i });
        b.lp.objective[t] = eps1;
    }
    let vb = propagate_bounds(v, region);
    let v_out = encode_network(&mut b, v, &xs, &vb, NetTag::V)[0];
    b.lp.objective[v_out] = -T::one();
    b.finish(xs)
}

/// Builds the decrease check: maximise
/// `V(Āx + B̄·π(x)) − (1 + eps2)·V(x)` over the box, with one controller
/// copy per vehicle acting on its own error block.
///
/// The condition `V(x⁺) ≤ (1 − eps2)·V(x)` holds on the box iff the
/// optimum is at most zero.
pub fn build_dec_milp<T: Scalar>(
    v: &Mlp<T>,
    pi: &Mlp<T>,
    model: &PlatoonModel<T>,
    region: &[(T, T)],
    eps2: T,
) -> MilpInstance<T> {
    let dim = model.state_dim();
    assert_eq!(region.len(), dim, "region dimension mismatch");
    assert_eq!(v.input_dim(), dim, "Lyapunov candidate dimension mismatch");
    assert_eq!(pi.input_dim(), 2, "controller acts on one error block");
    assert_eq!(pi.output_dim(), 1, "controller output must be scalar");

    let mut b = MilpBuilder::new();
    let xs: Vec<usize> = region.iter().map(|&(lo, hi)| b.add_continuous(lo, hi)).collect();

    // One controller copy per vehicle on its own (gap, velocity) errors.
    let mut us = Vec::with_capacity(model.n());
    let mut u_boxes = Vec::with_capacity(model.n());
    for i in 0..model.n() {
        let block = [region[2 * i], region[2 * i + 1]];
        let pb = propagate_bounds(pi, &block);
        let u = encode_network(&mut b, pi, &[xs[2 * i], xs[2 * i + 1]], &pb, NetTag::Pi(i))[0];
        u_boxes.push(pb.output());
        us.push(u);
    }

    // Successor state rows x⁺ = Ā·x + B̄·u with interval-derived bounds.
    let a_bar = model.a_bar();
    let b_bar = model.b_bar();
    let mut xp = Vec::with_capacity(dim);
    let mut xp_box = Vec::with_capacity(dim);
    for r in 0..dim {
        let mut lo = T::zero();
        let mut hi = T::zero();
        let mut coeffs = Vec::new();
        for c in 0..dim {
            let w = a_bar[(r, c)];
            if w != T::zero() {
                let (blo, bhi) = region[c];
                if w >= T::zero() {
                    lo += w * blo;
                    hi += w * bhi;
                } else {
                    lo += w * bhi;
                    hi += w * blo;
                }
                coeffs.push((xs[c], -w));
            }
        }
        for k in 0..model.n() {
            let w = b_bar[(r, k)];
            if w != T::zero() {
                let (blo, bhi) = u_boxes[k];
                if w >= T::zero() {
                    lo += w * blo;
                    hi += w * bhi;
                } else {
                    lo += w * bhi;
                    hi += w * blo;
                }
                coeffs.push((us[k], -w));
            }
        }
        let p = b.add_continuous(lo, hi);
        coeffs.insert(0, (p, T::one()));
        b.lp.add_row(coeffs, Sense::Eq, T::zero());
        xp.push(p);
        xp_box.push((lo, hi));
    }

    let v_now = encode_network(&mut b, v, &xs, &propagate_bounds(v, region), NetTag::V)[0];
    let v_next = encode_network(&mut b, v, &xp, &propagate_bounds(v, &xp_box), NetTag::VNext)[0];
    b.lp.objective[v_next] = T::one();
    b.lp.objective[v_now] = -(T::one() + eps2);
    b.finish(xs)
}

/// Fixes every binary to the activation pattern a forward pass takes at
/// `x`, and the input variables to `x` itself.
///
/// The remaining LP is fully determined, which makes it an oracle for the
/// encoding: its optimum must equal the directly evaluated objective.
pub fn fix_to_activation_pattern<T: Scalar>(
    inst: &MilpInstance<T>,
    v: &Mlp<T>,
    pi: Option<(&Mlp<T>, &PlatoonModel<T>)>,
    x: &[T],
) -> LinearProgram<T> {
    let mut lp = inst.lp.clone();
    for (&var, &xi) in inst.input_vars.iter().zip(x) {
        lp.fix(var, xi);
    }
    let v_trace = v.forward_trace(x).1;
    // Successor-state trace and per-vehicle controller traces, when the
    // instance encodes the decrease condition.
    let (vnext_trace, pi_traces) = match pi {
        Some((pi_net, model)) => {
            let u = pi_net.eval_blockwise(x);
            let xp = crate::dynamics::step_platoon_error(model, x, &u);
            let traces: Vec<_> =
                (0..model.n()).map(|i| pi_net.forward_trace(&x[2 * i..2 * i + 2]).1).collect();
            (Some(v.forward_trace(&xp).1), traces)
        }
        None => (None, Vec::new()),
    };
    for (&var, &role) in inst.binaries.iter().zip(&inst.roles) {
        let pre = match role {
            BinaryRole::InputSign { coord } => x[coord],
            BinaryRole::Neuron { net, layer, neuron } => match net {
                NetTag::V => v_trace.pre[layer][neuron],
                NetTag::VNext => {
                    vnext_trace.as_ref().expect("decrease instance needs dynamics").pre[layer]
                        [neuron]
                }
                NetTag::Pi(i) => pi_traces[i].pre[layer][neuron],
            },
        };
        lp.fix(var, if pre >= T::zero() { T::one() } else { T::zero() });
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_platoon_model;
    use crate::milp::lp::LpOutcome;
    use crate::milp::simplex::solve_lp;
    use ndarray::{arr1, arr2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solve_max(lp: &LinearProgram<f64>) -> f64 {
        match solve_lp(lp).unwrap() {
            LpOutcome::Optimal { value, .. } => value,
            LpOutcome::Infeasible => panic!("unexpected infeasible"),
        }
    }

    /// `‖x‖₁`-style candidate: V(x) = 0.9·(|ep| + |ev|) as a zero-bias
    /// leaky network, using r(t) + r(-t) = (1-alpha)·|t|.
    fn l1_candidate() -> Mlp<f64> {
        Mlp::from_parts(
            vec![
                arr2(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
                arr2(&[[1.0, 1.0, 1.0, 1.0]]),
            ],
            vec![arr1(&[0.0; 4]), arr1(&[0.0])],
            0.1,
            true,
        )
        .unwrap()
    }

    #[test]
    fn l1_candidate_matches_closed_form() {
        let v = l1_candidate();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: [f64; 2] = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let want = 0.9 * (x[0].abs() + x[1].abs());
            assert!((v.eval_scalar(&x) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn leaky_rows_pin_value_once_binary_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let alpha = if rng.gen_bool(0.5) { 0.1 } else { 0.0 };
            let (lo, hi) = (-2.0, 1.5);
            let xv: f64 = rng.gen_range(lo..hi);
            let want = if xv >= 0.0 { xv } else { alpha * xv };

            let mut b = MilpBuilder::<f64>::new();
            let x = b.add_continuous(lo, hi);
            let y = b.add_continuous(alpha * lo, hi);
            let z = encode_leaky_relu(
                &mut b,
                x,
                y,
                lo,
                hi,
                alpha,
                BinaryRole::InputSign { coord: 0 },
            )
            .expect("straddling interval needs a binary");
            let mut inst = b.finish(vec![x]);
            inst.lp.fix(x, xv);
            inst.lp.fix(z, if xv >= 0.0 { 1.0 } else { 0.0 });

            for sign in [1.0, -1.0] {
                let mut lp = inst.lp.clone();
                lp.objective[y] = sign;
                assert!(
                    (solve_max(&lp) - sign * want).abs() < 1e-9,
                    "activation not pinned at x = {xv}"
                );
            }
        }
    }

    #[test]
    fn leaky_relaxation_contains_the_graph() {
        // With the binary free, (x, y) pairs on the true graph stay feasible.
        let mut b = MilpBuilder::<f64>::new();
        let x = b.add_continuous(-1.0, 1.0);
        let y = b.add_continuous(-0.1, 1.0);
        encode_leaky_relu(&mut b, x, y, -1.0, 1.0, 0.1, BinaryRole::InputSign { coord: 0 });
        let inst = b.finish(vec![x]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let xv: f64 = rng.gen_range(-1.0..1.0);
            let yv = if xv >= 0.0 { xv } else { 0.1 * xv };
            let witness = [xv, yv, if xv >= 0.0 { 1.0 } else { 0.0 }];
            assert!(
                inst.lp.violation_at(&witness) < 1e-12,
                "graph point cut off at x = {xv}"
            );
        }
    }

    #[test]
    fn abs_rows_pin_value_once_binary_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let (lo, hi) = (-1.0, 2.0);
            let xv: f64 = rng.gen_range(lo..hi);
            let mut b = MilpBuilder::<f64>::new();
            let x = b.add_continuous(lo, hi);
            let t = b.add_continuous(0.0, 2.0);
            let s =
                encode_abs(&mut b, x, t, lo, hi, BinaryRole::InputSign { coord: 0 }).unwrap();
            let mut lp = b.finish(vec![x]).lp;
            lp.fix(x, xv);
            lp.fix(s, if xv >= 0.0 { 1.0 } else { 0.0 });
            for sign in [1.0, -1.0] {
                let mut probe = lp.clone();
                probe.objective[t] = sign;
                assert!((solve_max(&probe) - sign * xv.abs()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fixed_sign_intervals_need_no_binary() {
        let mut b = MilpBuilder::<f64>::new();
        let x = b.add_continuous(0.2, 1.0);
        let y = b.add_continuous(0.2, 1.0);
        assert!(encode_leaky_relu(&mut b, x, y, 0.2, 1.0, 0.1, BinaryRole::InputSign { coord: 0 })
            .is_none());
        let x2 = b.add_continuous(-1.0, -0.2);
        let y2 = b.add_continuous(-0.1, -0.02);
        assert!(encode_leaky_relu(
            &mut b,
            x2,
            y2,
            -1.0,
            -0.2,
            0.1,
            BinaryRole::InputSign { coord: 1 }
        )
        .is_none());
        let t = b.add_continuous(0.2, 1.0);
        assert!(encode_abs(&mut b, x, t, 0.2, 1.0, BinaryRole::InputSign { coord: 0 }).is_none());
        assert!(b.finish(vec![x]).binaries.is_empty());
    }

    #[test]
    fn binary_count_matches_straddling_neurons() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..10 {
            let v = Mlp::<f64>::glorot(&[2, 6, 5, 1], 0.1, true, &mut rng).unwrap();
            let r = 0.1 + 0.2 * trial as f64;
            let region = [(-r, r), (-r, r)];
            let vb = propagate_bounds(&v, &region);
            let straddling: usize = vb
                .pre
                .iter()
                .take(v.layers().len() - 1) // output layer is linear
                .map(|layer| layer.iter().filter(|&&(lo, hi)| lo < 0.0 && hi > 0.0).count())
                .sum();
            let inst = build_pos_milp(&v, &region, 0.05);
            // Both input coordinates straddle zero, so two sign binaries.
            assert_eq!(inst.num_binaries(), straddling + 2, "trial {trial}");
        }
    }

    #[test]
    fn pos_encoding_matches_direct_evaluation_when_pattern_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let eps1 = 0.05;
        for _ in 0..5 {
            let v = Mlp::<f64>::glorot(&[2, 8, 1], 0.1, true, &mut rng).unwrap();
            let region = [(-0.5, 0.5), (-0.5, 0.5)];
            let inst = build_pos_milp(&v, &region, eps1);
            for _ in 0..20 {
                let x: [f64; 2] = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
                let lp = fix_to_activation_pattern(&inst, &v, None, &x);
                let direct = eps1 * (x[0].abs() + x[1].abs()) - v.eval_scalar(&x);
                assert!(
                    (solve_max(&lp) - direct).abs() < 1e-8,
                    "encoding disagrees with forward pass at {x:?}"
                );
            }
        }
    }

    #[test]
    fn dec_encoding_matches_direct_evaluation_when_pattern_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let eps2 = 0.01;
        for n in [1usize, 2] {
            let model = build_platoon_model::<f64>(n, 0.1, &vec![5.0; n]).unwrap();
            let v = Mlp::<f64>::glorot(&[2 * n, 8, 1], 0.1, true, &mut rng).unwrap();
            let pi = Mlp::<f64>::glorot(&[2, 6, 1], 0.1, false, &mut rng)
                .unwrap()
                .saturate_output(3.0);
            let region: Vec<(f64, f64)> = vec![(-0.4, 0.4); 2 * n];
            let inst = build_dec_milp(&v, &pi, &model, &region, eps2);
            for _ in 0..20 {
                let x: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-0.4..0.4)).collect();
                let lp = fix_to_activation_pattern(&inst, &v, Some((&pi, &model)), &x);
                let u = pi.eval_blockwise(&x);
                let xp = crate::dynamics::step_platoon_error(&model, &x, &u);
                let direct = v.eval_scalar(&xp) - (1.0 + eps2) * v.eval_scalar(&x);
                assert!(
                    (solve_max(&lp) - direct).abs() < 1e-8,
                    "n = {n}: encoding disagrees with forward pass at {x:?}"
                );
            }
        }
    }

    #[test]
    fn relaxation_upper_bounds_every_sample() {
        // The LP relaxation (binaries free in [0,1]) can only over-estimate
        // the true maximum.
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let v = Mlp::<f64>::glorot(&[2, 8, 1], 0.1, true, &mut rng).unwrap();
        let region = [(-0.3, 0.3), (-0.3, 0.3)];
        let inst = build_pos_milp(&v, &region, 0.05);
        let relax = solve_max(&inst.lp);
        for _ in 0..500 {
            let x: [f64; 2] = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
            let direct = 0.05 * (x[0].abs() + x[1].abs()) - v.eval_scalar(&x);
            assert!(relax >= direct - 1e-9);
        }
    }
}
