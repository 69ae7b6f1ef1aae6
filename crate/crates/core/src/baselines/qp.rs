//! Deterministic solver for box-constrained convex quadratic programs
//! `min 0.5 u'Pu + q'u, lo <= u <= hi`, written for the model-predictive
//! baseline: a direct solve when no bound is active, otherwise fixed-penalty
//! operator splitting with a single Cholesky factorisation.

use ndarray::{Array1, Array2};

use crate::scalar::{s, Scalar};

/// Convergence tolerance on the primal and dual operator-splitting residuals,
/// relative to the iterate and multiplier scales.
const TOL: f64 = 1e-8;

/// Floor on the splitting penalty; the penalty itself is fixed for a solve
/// but picked from the Hessian scale so ill-scaled costs still converge.
const RHO_MIN: f64 = 1.0;

/// Over-relaxation factor for the splitting update.
const RELAX: f64 = 1.6;

/// Outcome of a box-QP solve; `u` is always inside the box.
#[derive(Clone, Debug)]
pub struct QpSolution<T> {
    pub u: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

/// Lower-triangular Cholesky factor, or `None` if the matrix is not
/// positive definite.
fn cholesky<T: Scalar>(a: &Array2<T>) -> Option<Array2<T>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum <= T::zero() {
                    return None;
                }
                l[(i, j)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Solves `L L' x = b` by forward and backward substitution.
fn chol_solve<T: Scalar>(l: &Array2<T>, b: &Array1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[(i, k)] * y[k];
        }
        y[i] = sum / l[(i, i)];
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[(k, i)] * x[k];
        }
        x[i] = sum / l[(i, i)];
    }
    x
}

fn clamp_to<T: Scalar>(v: T, lo: T, hi: T) -> T {
    v.max(lo).min(hi)
}

/// Minimises `0.5 u'Pu + q'u` over the box `[lower, upper]`.
///
/// `p` must be symmetric positive definite.  `warm`, when given, seeds the
/// splitting iteration (the minimiser is unique, so warm starting changes
/// only the iteration count).  `max_iters` bounds the splitting loop; on
/// exhaustion the best feasible iterate is returned with `converged: false`.
pub fn solve_box_qp<T: Scalar>(
    p: &Array2<T>,
    q: &[T],
    lower: &[T],
    upper: &[T],
    warm: Option<&[T]>,
    max_iters: usize,
) -> QpSolution<T> {
    let n = q.len();
    assert_eq!(p.nrows(), n, "Hessian rows must match the variable count");
    assert_eq!(p.ncols(), n, "Hessian must be square");
    assert_eq!(lower.len(), n, "lower bound length mismatch");
    assert_eq!(upper.len(), n, "upper bound length mismatch");
    for i in 0..n {
        assert!(lower[i] <= upper[i], "empty box at coordinate {i}");
    }
    let qv = Array1::from(q.to_vec());

    // Unconstrained fast path: accept the Newton point if it is feasible.
    if let Some(l) = cholesky(p) {
        let newton = chol_solve(&l, &qv.mapv(|v| -v));
        let inside = (0..n).all(|i| lower[i] <= newton[i] && newton[i] <= upper[i]);
        if inside {
            return QpSolution { u: newton.to_vec(), iterations: 0, converged: true };
        }
    }

    let diag_mean = (0..n).map(|i| p[(i, i)]).sum::<T>() / s::<T>(n as f64);
    let rho = diag_mean.max(s::<T>(RHO_MIN));
    let tol = s::<T>(TOL);
    let mut shifted = p.clone();
    for i in 0..n {
        shifted[(i, i)] += rho;
    }
    let l = cholesky(&shifted).expect("P + rho*I is positive definite");

    let mut z: Array1<T> = match warm {
        Some(w) => {
            assert_eq!(w.len(), n, "warm start length mismatch");
            Array1::from_iter((0..n).map(|i| clamp_to(w[i], lower[i], upper[i])))
        }
        None => Array1::zeros(n),
    };
    let mut w: Array1<T> = Array1::zeros(n);
    let relax = s::<T>(RELAX);
    for iter in 0..max_iters {
        let rhs = (&z - &w).mapv(|v| v * rho) - &qv;
        let x = chol_solve(&l, &rhs);
        let z_prev = z.clone();
        let x_hat = x.mapv(|v| v * relax) + z_prev.mapv(|v| v * (T::one() - relax));
        z = Array1::from_iter(
            (0..n).map(|i| clamp_to(x_hat[i] + w[i], lower[i], upper[i])),
        );
        w = w + &x_hat - &z;

        let primal = (0..n).map(|i| (x[i] - z[i]).abs()).fold(T::zero(), T::max);
        let dual = (0..n).map(|i| (z[i] - z_prev[i]).abs() * rho).fold(T::zero(), T::max);
        let x_scale = x.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
        let z_scale = z.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
        let y_scale = w.iter().fold(T::zero(), |a, &v| a.max((v * rho).abs()));
        let eps_pri = tol * T::one().max(x_scale).max(z_scale);
        let eps_dual = tol * T::one().max(y_scale);
        if primal < eps_pri && dual < eps_dual {
            return QpSolution { u: z.to_vec(), iterations: iter + 1, converged: true };
        }
    }
    QpSolution { u: z.to_vec(), iterations: max_iters, converged: false }
}

/// Max-norm of the projected-gradient optimality residual at `u`.
pub fn kkt_residual<T: Scalar>(
    p: &Array2<T>,
    q: &[T],
    lower: &[T],
    upper: &[T],
    u: &[T],
) -> T {
    let g = p.dot(&Array1::from(u.to_vec())) + &Array1::from(q.to_vec());
    (0..u.len())
        .map(|i| (u[i] - clamp_to(u[i] - g[i], lower[i], upper[i])).abs())
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const MAX_ITERS: usize = 5000;

    fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let m = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
        m.t().dot(&m) + Array2::<f64>::eye(n)
    }

    /// Exact box-QP oracle for n = 2: enumerate all nine active-set
    /// patterns and return the unique KKT point.
    fn oracle_2d(
        p: &Array2<f64>,
        q: &[f64],
        lower: &[f64],
        upper: &[f64],
    ) -> [f64; 2] {
        let candidates = [-1i32, 0, 1];
        for &s0 in &candidates {
            for &s1 in &candidates {
                let fix = |side: i32, i: usize| match side {
                    -1 => Some(lower[i]),
                    1 => Some(upper[i]),
                    _ => None,
                };
                let (f0, f1) = (fix(s0, 0), fix(s1, 1));
                let u = match (f0, f1) {
                    (Some(a), Some(b)) => [a, b],
                    (Some(a), None) => {
                        [a, (-q[1] - p[(1, 0)] * a) / p[(1, 1)]]
                    }
                    (None, Some(b)) => {
                        [(-q[0] - p[(0, 1)] * b) / p[(0, 0)], b]
                    }
                    (None, None) => {
                        let det = p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)];
                        [
                            (-q[0] * p[(1, 1)] + q[1] * p[(0, 1)]) / det,
                            (-q[1] * p[(0, 0)] + q[0] * p[(1, 0)]) / det,
                        ]
                    }
                };
                // Feasibility of free coordinates.
                if u[0] < lower[0] - 1e-12
                    || u[0] > upper[0] + 1e-12
                    || u[1] < lower[1] - 1e-12
                    || u[1] > upper[1] + 1e-12
                {
                    continue;
                }
                // Multiplier signs: the gradient must push into active bounds.
                let g0 = p[(0, 0)] * u[0] + p[(0, 1)] * u[1] + q[0];
                let g1 = p[(1, 0)] * u[0] + p[(1, 1)] * u[1] + q[1];
                let ok0 = match s0 {
                    -1 => g0 >= -1e-10,
                    1 => g0 <= 1e-10,
                    _ => g0.abs() <= 1e-10,
                };
                let ok1 = match s1 {
                    -1 => g1 >= -1e-10,
                    1 => g1 <= 1e-10,
                    _ => g1.abs() <= 1e-10,
                };
                if ok0 && ok1 {
                    return u;
                }
            }
        }
        panic!("no KKT point found; the oracle inputs must be degenerate");
    }

    #[test]
    fn unconstrained_minimum_taken_directly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_pd(6, &mut rng);
        let q: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let wide = vec![100.0; 6];
        let neg: Vec<f64> = wide.iter().map(|&v| -v).collect();
        let sol = solve_box_qp(&p, &q, &neg, &wide, None, MAX_ITERS);
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0, "the Newton point is feasible");
        assert!(kkt_residual(&p, &q, &neg, &wide, &sol.u) < 1e-8);
    }

    #[test]
    fn separable_hand_instance_clamps_one_coordinate() {
        // min (u0 - 1)^2 + (u1 - 3)^2 on [-1, 2]^2 => (1, 2).
        let p: Array2<f64> = Array2::from_shape_vec((2, 2), vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        let sol = solve_box_qp(&p, &[-2.0, -6.0], &[-1.0, -1.0], &[2.0, 2.0], None, MAX_ITERS);
        assert!(sol.converged);
        assert!((sol.u[0] - 1.0).abs() < 1e-7);
        assert!((sol.u[1] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn coupled_hand_instance_matches_kkt_solution() {
        // Unconstrained minimiser (2, -1); the box activates the first
        // upper bound, leaving u1 = -(0 + 1.5)/2 = -0.75.
        let p: Array2<f64> = Array2::from_shape_vec((2, 2), vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let q = [-3.0, 0.0];
        let lo = [-1.5, -1.5];
        let hi = [1.5, 1.5];
        let sol = solve_box_qp(&p, &q, &lo, &hi, None, MAX_ITERS);
        assert!(sol.converged);
        assert!((sol.u[0] - 1.5).abs() < 1e-7);
        assert!((sol.u[1] + 0.75).abs() < 1e-7);
    }

    #[test]
    fn agrees_with_active_set_enumeration_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..200 {
            let p = random_pd(2, &mut rng);
            let q = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let lo = [rng.gen_range(-2.0..0.0), rng.gen_range(-2.0..0.0)];
            let hi = [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)];
            let sol = solve_box_qp(&p, &q, &lo, &hi, None, MAX_ITERS);
            assert!(sol.converged, "trial {trial} did not converge");
            let want = oracle_2d(&p, &q, &lo, &hi);
            for i in 0..2 {
                assert!(
                    (sol.u[i] - want[i]).abs() < 1e-6,
                    "trial {trial} coord {i}: {} vs {}",
                    sol.u[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn projected_gradient_residual_vanishes_at_solutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let n = rng.gen_range(1..=12);
            let p = random_pd(n, &mut rng);
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.0)).collect();
            let hi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let sol = solve_box_qp(&p, &q, &lo, &hi, None, MAX_ITERS);
            assert!(sol.converged);
            assert!(kkt_residual(&p, &q, &lo, &hi, &sol.u) < 1e-6);
        }
    }

    #[test]
    fn warm_start_reaches_the_same_minimiser() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = random_pd(5, &mut rng);
        let q: Vec<f64> = (0..5).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let lo = vec![-0.5; 5];
        let hi = vec![0.5; 5];
        let cold = solve_box_qp(&p, &q, &lo, &hi, None, MAX_ITERS);
        let warm_seed: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let warm = solve_box_qp(&p, &q, &lo, &hi, Some(&warm_seed), MAX_ITERS);
        assert!(cold.converged && warm.converged);
        for i in 0..5 {
            assert!((cold.u[i] - warm.u[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn exhausted_iteration_budget_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = random_pd(4, &mut rng);
        let q: Vec<f64> = (0..4).map(|_| rng.gen_range(1.0..5.0)).collect();
        let lo = vec![-0.1; 4];
        let hi = vec![0.1; 4];
        let sol = solve_box_qp(&p, &q, &lo, &hi, None, 1);
        assert!(!sol.converged);
        // The iterate is still feasible.
        assert!(sol.u.iter().all(|&v| (-0.1..=0.1).contains(&v)));
    }

    #[test]
    fn solves_are_bit_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = random_pd(6, &mut rng);
        let q: Vec<f64> = (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let lo = vec![-0.3; 6];
        let hi = vec![0.3; 6];
        let a = solve_box_qp(&p, &q, &lo, &hi, None, MAX_ITERS);
        let b = solve_box_qp(&p, &q, &lo, &hi, None, MAX_ITERS);
        assert_eq!(a.iterations, b.iterations);
        for i in 0..6 {
            assert_eq!(a.u[i].to_bits(), b.u[i].to_bits());
        }
    }
}
