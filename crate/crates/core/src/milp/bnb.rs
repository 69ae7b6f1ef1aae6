//! Branch-and-bound over the activation binaries.
//!
//! Best-bound node selection with most-fractional branching, both with
//! deterministic tie-breaking, so repeated runs visit identical trees.
//! When the caller supplies a direct objective evaluator (a forward pass
//! through the encoded networks), every node's LP point doubles as a
//! feasible incumbent, which tightens pruning long before any leaf.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::encode::MilpInstance;
use super::lp::{LpError, LpOutcome};
use super::simplex::solve_lp;
use crate::scalar::{s, Scalar};

/// Solver limits and tolerances.
#[derive(Debug, Clone)]
pub struct BnbConfig<T> {
    /// Maximum number of LP relaxations to solve.
    pub node_limit: usize,
    /// Wall-clock budget.
    pub timeout: Duration,
    /// A binary within this distance of 0/1 counts as integral.
    pub int_tol: T,
    /// Nodes whose LP bound clears the incumbent by less are pruned.
    pub prune_tol: T,
    /// At most this many positive-objective inputs are collected.
    pub max_witnesses: usize,
}

impl<T: Scalar> Default for BnbConfig<T> {
    fn default() -> Self {
        Self {
            node_limit: 1_000_000,
            timeout: Duration::from_secs(30 * 60),
            int_tol: s(1e-6),
            prune_tol: s(1e-9),
            max_witnesses: 64,
        }
    }
}

/// How the search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Tree exhausted: `value` is the exact optimum.
    Optimal,
    /// No assignment of the binaries admits a feasible point.
    Infeasible,
    /// Stopped at the node limit; `value`/`upper_bound` bracket the optimum.
    NodeLimit,
    /// Stopped at the wall-clock budget.
    TimedOut,
}

/// Result of a branch-and-bound run.
#[derive(Debug, Clone)]
pub struct MilpSolution<T> {
    pub status: SolveStatus,
    /// Best feasible objective found (meaningless when `Infeasible`).
    pub value: T,
    /// Input coordinates achieving `value`.
    pub input: Vec<T>,
    /// Proven upper bound on the optimum.
    pub upper_bound: T,
    /// LP relaxations solved.
    pub nodes: usize,
    /// Inputs whose true objective was strictly positive (condition
    /// violations, harvested as counterexamples).
    pub witnesses: Vec<Vec<T>>,
}

struct PathNode {
    var: usize,
    bit: bool,
    parent: Option<Arc<PathNode>>,
}

struct Node<T> {
    bound: T,
    seq: u64,
    path: Option<Arc<PathNode>>,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl<T: Scalar> Eq for Node<T> {}
impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Node<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Highest bound first; older node wins ties for determinism.
        self.bound
            .partial_cmp(&other.bound)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Maximises a [`MilpInstance`] exactly.
///
/// `evaluate`, when given, maps input coordinates to the true objective
/// (by running the encoded networks forward); because the encoding is
/// exact, every such value is attainable and is used as an incumbent.
pub fn branch_and_bound<T: Scalar>(
    inst: &MilpInstance<T>,
    cfg: &BnbConfig<T>,
    evaluate: Option<&dyn Fn(&[T]) -> T>,
) -> Result<MilpSolution<T>, LpError> {
    let start = Instant::now();
    let witness_tol = s::<T>(1e-12);
    let mut heap: BinaryHeap<Node<T>> = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node { bound: T::max_value(), seq, path: None });

    let mut best: Option<(T, Vec<T>)> = None;
    let mut witnesses: Vec<Vec<T>> = Vec::new();
    let mut nodes = 0usize;
    let mut status = SolveStatus::Optimal;
    let mut open_bound = T::max_value();

    while let Some(node) = heap.pop() {
        if let Some((bv, _)) = &best {
            if node.bound <= *bv + cfg.prune_tol {
                // Best-first order: every remaining node is also prunable.
                heap.clear();
                break;
            }
        }
        if nodes >= cfg.node_limit {
            status = SolveStatus::NodeLimit;
            open_bound = node.bound;
            break;
        }
        if start.elapsed() >= cfg.timeout {
            status = SolveStatus::TimedOut;
            open_bound = node.bound;
            break;
        }
        nodes += 1;

        let mut lp = inst.lp.clone();
        let mut link = node.path.clone();
        while let Some(p) = link {
            lp.fix(p.var, if p.bit { T::one() } else { T::zero() });
            link = p.parent.clone();
        }
        let (value, x) = match solve_lp(&lp)? {
            LpOutcome::Infeasible => continue,
            LpOutcome::Optimal { value, x } => (value, x),
        };
        if let Some((bv, _)) = &best {
            if value <= *bv + cfg.prune_tol {
                continue;
            }
        }

        if let Some(f) = evaluate {
            let input = inst.input_of(&x);
            let true_val = f(&input);
            if true_val > witness_tol && witnesses.len() < cfg.max_witnesses {
                witnesses.push(input.clone());
            }
            if best.as_ref().map_or(true, |(bv, _)| true_val > *bv) {
                best = Some((true_val, input));
            }
        }

        // Most-fractional free binary, lowest index on ties.
        let mut pick: Option<(usize, T)> = None;
        for (pos, &var) in inst.binaries.iter().enumerate() {
            if lp.lower[var] == lp.upper[var] {
                continue;
            }
            let zi = x[var];
            if zi.min(T::one() - zi).abs() <= cfg.int_tol {
                continue;
            }
            let score = (zi - s::<T>(0.5)).abs();
            if pick.as_ref().map_or(true, |&(_, sc)| score < sc) {
                pick = Some((pos, score));
            }
        }

        match pick {
            None => {
                // All binaries integral: the LP value is feasible for the MILP.
                if best.as_ref().map_or(true, |(bv, _)| value > *bv) {
                    let input = inst.input_of(&x);
                    if value > witness_tol && witnesses.len() < cfg.max_witnesses {
                        witnesses.push(input.clone());
                    }
                    best = Some((value, input));
                }
            }
            Some((pos, _)) => {
                let var = inst.binaries[pos];
                for bit in [false, true] {
                    seq += 1;
                    heap.push(Node {
                        bound: value,
                        seq,
                        path: Some(Arc::new(PathNode {
                            var,
                            bit,
                            parent: node.path.clone(),
                        })),
                    });
                }
            }
        }
    }

    let heap_bound =
        heap.iter().map(|n| n.bound).fold(T::min_value(), |a, b| a.max(b));
    Ok(match best {
        Some((value, input)) => {
            let upper_bound = match status {
                SolveStatus::Optimal => value,
                _ => value.max(heap_bound).max(open_bound),
            };
            MilpSolution { status, value, input, upper_bound, nodes, witnesses }
        }
        None => MilpSolution {
            status: if status == SolveStatus::Optimal { SolveStatus::Infeasible } else { status },
            value: T::min_value(),
            input: Vec::new(),
            upper_bound: if status == SolveStatus::Optimal {
                T::min_value()
            } else {
                heap_bound.max(open_bound)
            },
            nodes,
            witnesses,
        },
    })
}

/// Brute-force oracle: solves one LP per binary assignment.
///
/// Only intended for instances with a handful of binaries (the cost is
/// `2^b` LP solves); used to validate [`branch_and_bound`].
pub fn exhaustive_oracle<T: Scalar>(
    inst: &MilpInstance<T>,
) -> Result<Option<(T, Vec<T>)>, LpError> {
    let b = inst.binaries.len();
    assert!(b <= 24, "oracle is exponential; got {b} binaries");
    let mut best: Option<(T, Vec<T>)> = None;
    for mask in 0u64..(1u64 << b) {
        let mut lp = inst.lp.clone();
        for (pos, &var) in inst.binaries.iter().enumerate() {
            let bit = (mask >> pos) & 1 == 1;
            lp.fix(var, if bit { T::one() } else { T::zero() });
        }
        if let LpOutcome::Optimal { value, x } = solve_lp(&lp)? {
            if best.as_ref().map_or(true, |(bv, _)| value > *bv) {
                best = Some((value, inst.input_of(&x)));
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_platoon_model, step_platoon_error, PlatoonModel};
    use crate::milp::encode::{build_dec_milp, build_pos_milp, BinaryRole, MilpBuilder};
    use crate::milp::lp::Sense;
    use crate::nn::Mlp;
    use ndarray::{arr1, arr2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn l1_candidate() -> Mlp<f64> {
        // V(x) = 0.9·(|ep| + |ev|) as a zero-bias leaky network.
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

    /// Hand-built pair that certifies on any centred box up to [-1, 1]²:
    /// u = clamp(ep + 2·ev) places both closed-loop eigenvalues at 0.9
    /// (the input enters the error block with a negative sign), and
    /// V(x) = 0.9·(|ev| + 2·|ep + ev|) contracts by 0.95 per step.
    fn certified_pair() -> (Mlp<f64>, Mlp<f64>) {
        let v = Mlp::from_parts(
            vec![
                arr2(&[[0.0, -1.0], [0.0, 1.0], [2.0, 2.0], [-2.0, -2.0]]),
                arr2(&[[1.0, 1.0, 1.0, 1.0]]),
            ],
            vec![arr1(&[0.0; 4]), arr1(&[0.0])],
            0.1,
            true,
        )
        .unwrap();
        let pi = Mlp::from_parts(vec![arr2(&[[1.0, 2.0]])], vec![arr1(&[0.0])], 0.1, false)
            .unwrap()
            .saturate_output(3.0);
        (v, pi)
    }

    fn zero_controller() -> Mlp<f64> {
        Mlp::from_parts(vec![arr2(&[[0.0, 0.0]])], vec![arr1(&[0.0])], 0.1, true).unwrap()
    }

    fn pos_evaluator<'a>(v: &'a Mlp<f64>, eps1: f64) -> impl Fn(&[f64]) -> f64 + 'a {
        move |x: &[f64]| {
            let l1: f64 = x.iter().map(|xi| xi.abs()).sum();
            eps1 * l1 - v.eval_scalar(x)
        }
    }

    fn dec_evaluator<'a>(
        v: &'a Mlp<f64>,
        pi: &'a Mlp<f64>,
        model: &'a PlatoonModel<f64>,
        eps2: f64,
    ) -> impl Fn(&[f64]) -> f64 + 'a {
        move |x: &[f64]| {
            let u = pi.eval_blockwise(x);
            let xp = step_platoon_error(model, x, &u);
            v.eval_scalar(&xp) - (1.0 + eps2) * v.eval_scalar(x)
        }
    }

    #[test]
    fn trivial_candidate_fails_positivity_by_a_tenth() {
        // V ≡ 0 over [-1, 1]² with margin 0.05: optimum 0.05·2 = 0.1.
        let v = Mlp::<f64>::from_parts(
            vec![arr2(&[[0.0, 0.0]])],
            vec![arr1(&[0.0])],
            0.1,
            true,
        )
        .unwrap();
        let inst = build_pos_milp(&v, &[(-1.0, 1.0), (-1.0, 1.0)], 0.05);
        let eval = pos_evaluator(&v, 0.05);
        let sol = branch_and_bound(&inst, &BnbConfig::default(), Some(&eval)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 0.1).abs() < 1e-9, "optimum {}", sol.value);
        assert!(!sol.witnesses.is_empty());
        assert!(sol.input.iter().all(|c| (c.abs() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn l1_candidate_passes_positivity_with_small_margin() {
        let v = l1_candidate();
        let inst = build_pos_milp(&v, &[(-1.0, 1.0), (-1.0, 1.0)], 0.5);
        let eval = pos_evaluator(&v, 0.5);
        let sol = branch_and_bound(&inst, &BnbConfig::default(), Some(&eval)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.value.abs() < 1e-9, "optimum {}", sol.value);
    }

    #[test]
    fn l1_candidate_fails_positivity_with_oversized_margin() {
        // 0.95 > 0.9 forces a violation of (0.95-0.9)·2 = 0.1 at a corner.
        let v = l1_candidate();
        let inst = build_pos_milp(&v, &[(-1.0, 1.0), (-1.0, 1.0)], 0.95);
        let eval = pos_evaluator(&v, 0.95);
        let sol = branch_and_bound(&inst, &BnbConfig::default(), Some(&eval)).unwrap();
        assert!((sol.value - 0.1).abs() < 1e-9, "optimum {}", sol.value);
        assert!(!sol.witnesses.is_empty());
        let worst = &sol.input;
        assert!((eval(worst) - sol.value).abs() < 1e-12);
    }

    #[test]
    fn uncontrolled_platoon_fails_decrease_at_known_point() {
        // With u ≡ 0 the drift is x⁺ = Ā·x; for V = 0.9·‖x‖₁ on
        // [-0.1, 0.1]² the worst violation is at (0, ±0.1):
        // 0.9·(0.01 + 0.1) - 1.01·0.9·0.1 = 0.0081.
        let v = l1_candidate();
        let pi = zero_controller();
        let model = build_platoon_model::<f64>(1, 0.1, &[5.0]).unwrap();
        let inst = build_dec_milp(&v, &pi, &model, &[(-0.1, 0.1), (-0.1, 0.1)], 0.01);
        let eval = dec_evaluator(&v, &pi, &model, 0.01);
        let sol = branch_and_bound(&inst, &BnbConfig::default(), Some(&eval)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 0.0081).abs() < 1e-9, "optimum {}", sol.value);
        assert!(sol.input[0].abs() < 1e-9 && (sol.input[1].abs() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn hand_built_pair_certifies_both_conditions() {
        let (v, pi) = certified_pair();
        let model = build_platoon_model::<f64>(1, 0.1, &[5.0]).unwrap();
        let region = [(-0.1, 0.1), (-0.1, 0.1)];

        let pos = build_pos_milp(&v, &region, 0.05);
        let eval = pos_evaluator(&v, 0.05);
        let sol = branch_and_bound(&pos, &BnbConfig::default(), Some(&eval)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.value.abs() < 1e-9, "positivity optimum {}", sol.value);

        let dec = build_dec_milp(&v, &pi, &model, &region, 0.01);
        let eval = dec_evaluator(&v, &pi, &model, 0.01);
        let sol = branch_and_bound(&dec, &BnbConfig::default(), Some(&eval)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.value.abs() < 1e-9, "decrease optimum {}", sol.value);
        assert!(sol.witnesses.is_empty());
    }

    #[test]
    fn hand_built_pair_certifies_on_the_unit_box() {
        // The pair is linear-homogeneous inside the saturation range, so
        // certification survives a 10× larger region.
        let (v, pi) = certified_pair();
        let model = build_platoon_model::<f64>(1, 0.1, &[5.0]).unwrap();
        let region = [(-1.0, 1.0), (-1.0, 1.0)];
        let dec = build_dec_milp(&v, &pi, &model, &region, 0.01);
        let eval = dec_evaluator(&v, &pi, &model, 0.01);
        let sol = branch_and_bound(&dec, &BnbConfig::default(), Some(&eval)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.value.abs() < 1e-9, "decrease optimum {}", sol.value);
    }

    /// Random mixed-binary programs with no network structure at all.
    fn random_instance(rng: &mut ChaCha8Rng, max_binaries: usize) -> crate::milp::MilpInstance<f64> {
        let nc = rng.gen_range(1..=4);
        let nb = rng.gen_range(1..=max_binaries);
        let mut b = MilpBuilder::<f64>::new();
        let xs: Vec<usize> = (0..nc).map(|_| b.add_continuous(-1.0, 1.0)).collect();
        let zs: Vec<usize> =
            (0..nb).map(|k| b.add_binary(BinaryRole::InputSign { coord: k })).collect();
        let rows = rng.gen_range(1..=5);
        for _ in 0..rows {
            let mut coeffs = Vec::new();
            for &x in &xs {
                if rng.gen_bool(0.7) {
                    coeffs.push((x, rng.gen_range(-2.0..2.0)));
                }
            }
            for &z in &zs {
                if rng.gen_bool(0.5) {
                    coeffs.push((z, rng.gen_range(-2.0..2.0)));
                }
            }
            if coeffs.is_empty() {
                continue;
            }
            let sense = if rng.gen_bool(0.25) { Sense::Eq } else { Sense::Le };
            b.lp.add_row(coeffs, sense, rng.gen_range(-1.0..2.0));
        }
        for j in 0..b.lp.objective.len() {
            b.lp.objective[j] = rng.gen_range(-1.0..1.0);
        }
        b.finish(xs)
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..30 {
            let inst = random_instance(&mut rng, 10);
            let oracle = exhaustive_oracle(&inst).unwrap();
            let sol = branch_and_bound(&inst, &BnbConfig::default(), None).unwrap();
            match oracle {
                Some((want, _)) => {
                    assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
                    assert!(
                        (sol.value - want).abs() < 1e-6,
                        "trial {trial}: bnb {} vs oracle {want}",
                        sol.value
                    );
                }
                None => assert_eq!(sol.status, SolveStatus::Infeasible, "trial {trial}"),
            }
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        let v = l1_candidate();
        let inst = build_pos_milp(&v, &[(-1.0, 1.0), (-1.0, 1.0)], 0.95);
        let eval = pos_evaluator(&v, 0.95);
        let a = branch_and_bound(&inst, &BnbConfig::default(), Some(&eval)).unwrap();
        let b = branch_and_bound(&inst, &BnbConfig::default(), Some(&eval)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.input, b.input);
        assert_eq!(a.witnesses, b.witnesses);
    }

    #[test]
    fn node_limit_reports_a_valid_bracket() {
        let v = l1_candidate();
        let inst = build_pos_milp(&v, &[(-1.0, 1.0), (-1.0, 1.0)], 0.95);
        let eval = pos_evaluator(&v, 0.95);
        let cfg = BnbConfig { node_limit: 1, ..BnbConfig::default() };
        let sol = branch_and_bound(&inst, &cfg, Some(&eval)).unwrap();
        assert_eq!(sol.status, SolveStatus::NodeLimit);
        assert!(sol.value <= 0.1 + 1e-9 && sol.upper_bound >= 0.1 - 1e-9);
    }
}
