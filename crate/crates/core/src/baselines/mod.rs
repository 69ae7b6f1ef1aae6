//! Benchmark controllers: clamped linear feedback, a leader reference
//! tracker, and a distributed MPC that tracks its predecessor's shared plan
//! by solving a box-constrained QP each step.

use ndarray::{Array1, Array2};

use crate::dynamics::{ErrorState, VehicleState};
use crate::scalar::{s, Scalar};

mod qp;

pub use qp::{kkt_residual, solve_box_qp, QpSolution};

/// Velocity-tracking gain of the lead vehicle, per second.
const K_LEAD: f64 = 2.0;

/// Iteration budget for the per-step MPC solve.
const MAX_QP_ITERS: usize = 5000;

/// Weight multiplier standing in for a hard terminal constraint.
const TERMINAL_WEIGHT: f64 = 1e3;

/// Gains of the clamped linear feedback baseline.
#[derive(Clone, Copy, Debug)]
pub struct LinearGains<T> {
    /// Gain on the gap error, per metre.
    pub kp: T,
    /// Gain on the velocity error, per metre/second.
    pub kv: T,
    /// Symmetric input bound.
    pub u_max: T,
}

impl<T: Scalar> Default for LinearGains<T> {
    fn default() -> Self {
        Self { kp: T::one(), kv: s(2.0), u_max: s(3.0) }
    }
}

/// Clamped proportional feedback on the spacing and velocity errors.
pub fn linear_feedback<T: Scalar>(e: ErrorState<T>, g: LinearGains<T>) -> T {
    debug_assert!(g.kp > T::zero() && g.kv > T::zero() && g.u_max > T::zero());
    (g.kp * e.ep + g.kv * e.ev).max(-g.u_max).min(g.u_max)
}

/// Clamped proportional velocity tracking for the lead vehicle.
pub fn leader_track<T: Scalar>(v_now: T, v_ref: T, u_max: T) -> T {
    (s::<T>(K_LEAD) * (v_ref - v_now)).max(-u_max).min(u_max)
}

/// Parameters of the distributed MPC baseline.
///
/// The defaults keep long chains string stable: a small effort weight lets
/// each vehicle track its predecessor's plan tightly instead of amplifying
/// plan revisions down the platoon.
#[derive(Clone, Copy, Debug)]
pub struct DmpcConfig<T> {
    /// Prediction horizon in steps (at least 2).
    pub horizon: usize,
    /// Weight on the predecessor position-tracking error.
    pub q_p: T,
    /// Weight on the predecessor velocity-tracking error.
    pub q_v: T,
    /// Weight on control effort.
    pub r: T,
    /// Weight on deviation from the vehicle's own previously shared plan.
    pub f: T,
    /// Symmetric input bound.
    pub u_max: T,
    /// Heavily weight the final tracking error instead of leaving it soft.
    pub terminal_constraint: bool,
}

impl<T: Scalar> Default for DmpcConfig<T> {
    fn default() -> Self {
        Self {
            horizon: 20,
            q_p: T::one(),
            q_v: s(2.0),
            r: s(0.01),
            f: s(0.1),
            u_max: s(3.0),
            terminal_constraint: false,
        }
    }
}

/// A vehicle's shared plan: states at steps `step, step+1, ...` spaced `dt`
/// apart, consistent with the double-integrator dynamics by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct AssumedTrajectory<T> {
    /// Simulation step of the first entry.
    pub step: u64,
    /// Step length in seconds.
    pub dt: T,
    /// Planned positions, one per step.
    pub positions: Vec<T>,
    /// Planned velocities, one per step.
    pub velocities: Vec<T>,
}

impl<T: Scalar> AssumedTrajectory<T> {
    /// Plan produced by rolling the inputs through the double integrator.
    pub fn from_inputs(p0: T, v0: T, dt: T, inputs: &[T], step: u64) -> Self {
        assert!(dt > T::zero(), "step length must be positive");
        let mut positions = Vec::with_capacity(inputs.len() + 1);
        let mut velocities = Vec::with_capacity(inputs.len() + 1);
        let (mut p, mut v) = (p0, v0);
        positions.push(p);
        velocities.push(v);
        for &u in inputs {
            p = p + dt * v;
            v = v + dt * u;
            positions.push(p);
            velocities.push(v);
        }
        Self { step, dt, positions, velocities }
    }

    /// Plan that keeps the current velocity for `horizon` steps.
    pub fn constant_velocity(p0: T, v0: T, dt: T, horizon: usize, step: u64) -> Self {
        Self::from_inputs(p0, v0, dt, &vec![T::zero(); horizon], step)
    }

    /// Number of planned steps (states minus one).
    pub fn horizon(&self) -> usize {
        self.positions.len() - 1
    }

    /// Inputs implied by consecutive planned velocities.
    pub fn inputs(&self) -> Vec<T> {
        (0..self.horizon())
            .map(|k| (self.velocities[k + 1] - self.velocities[k]) / self.dt)
            .collect()
    }
}

/// Advances a plan by one step: drop the first state and extend the tail by
/// holding the final input.
pub fn update_assumed<T: Scalar>(prev: &AssumedTrajectory<T>) -> AssumedTrajectory<T> {
    let h = prev.horizon();
    assert!(h >= 1, "a plan must cover at least one step");
    let last_u = (prev.velocities[h] - prev.velocities[h - 1]) / prev.dt;
    let mut inputs: Vec<T> = prev.inputs()[1..].to_vec();
    inputs.push(last_u);
    AssumedTrajectory::from_inputs(
        prev.positions[1],
        prev.velocities[1],
        prev.dt,
        &inputs,
        prev.step + 1,
    )
}

/// One distributed-MPC step for a following vehicle.
///
/// Minimises predecessor tracking at distance `gap`, deviation from the
/// vehicle's own previously shared plan, and control effort, over the
/// box-bounded inputs of an `horizon`-step double-integrator rollout.  Both
/// trajectories must already be aligned to the current step (the harness
/// shifts last step's plans forward).  If the QP solver fails to converge,
/// the previous plan is kept and its first input applied (with a warning).
pub fn dmpc_step<T: Scalar>(
    state: VehicleState<T>,
    pred: &AssumedTrajectory<T>,
    own_prev: &AssumedTrajectory<T>,
    cfg: &DmpcConfig<T>,
    gap: T,
) -> (T, AssumedTrajectory<T>) {
    dmpc_step_with(state, pred, own_prev, cfg, gap, MAX_QP_ITERS)
}

fn dmpc_step_with<T: Scalar>(
    state: VehicleState<T>,
    pred: &AssumedTrajectory<T>,
    own_prev: &AssumedTrajectory<T>,
    cfg: &DmpcConfig<T>,
    gap: T,
    max_iters: usize,
) -> (T, AssumedTrajectory<T>) {
    let h = cfg.horizon;
    assert!(h >= 2, "horizon must be at least 2");
    assert!(cfg.q_p > T::zero() && cfg.q_v > T::zero(), "tracking weights must be positive");
    assert!(cfg.r >= T::zero() && cfg.f >= T::zero(), "effort weights must be non-negative");
    assert!(cfg.u_max > T::zero(), "input bound must be positive");
    assert!(pred.horizon() >= h, "predecessor plan too short");
    assert!(own_prev.horizon() >= h, "own plan too short");
    assert_eq!(pred.step, own_prev.step, "plans must be aligned to the same step");
    assert_eq!(pred.dt, own_prev.dt, "plans must share the step length");
    let dt = pred.dt;

    // Free response and input-to-state maps of the double integrator:
    // v_k = v0 + dt * sum_{j<k} u_j,  p_k = p0 + k dt v0 + dt^2 * sum (k-1-j) u_j.
    // The free position accumulates step by step with the same arithmetic as
    // the shared plan rollouts, so exact formations yield an exactly zero
    // gradient.
    let dt2 = dt * dt;
    let mut hess: Array2<T> = Array2::zeros((h, h));
    let mut lin: Array1<T> = Array1::zeros(h);
    let two = T::one() + T::one();
    let mut p_free = state.p;
    for k in 1..=h {
        p_free = p_free + dt * state.v;
        let v_free = state.v;
        let (mut wp, mut wv) = (cfg.q_p, cfg.q_v);
        if cfg.terminal_constraint && k == h {
            wp *= s(TERMINAL_WEIGHT);
            wv *= s(TERMINAL_WEIGHT);
        }
        let rp = pred.positions[k] - gap;
        let rv = pred.velocities[k];
        let op = own_prev.positions[k];
        let ov = own_prev.velocities[k];
        // Gradient pieces at u = 0 for this step's position and velocity.
        let gp = wp * (p_free - rp) + cfg.f * (p_free - op);
        let gv = wv * (v_free - rv) + cfg.f * (v_free - ov);
        let (cp, cv) = (wp + cfg.f, wv + cfg.f);
        for j in 0..k {
            let sp_j = dt2 * s::<T>((k - 1 - j) as f64);
            lin[j] += two * (sp_j * gp + dt * gv);
            for i in 0..k {
                let sp_i = dt2 * s::<T>((k - 1 - i) as f64);
                hess[(j, i)] += two * (cp * sp_j * sp_i + cv * dt * dt);
            }
        }
    }
    for j in 0..h {
        hess[(j, j)] += two * cfg.r;
    }

    let warm: Vec<T> = own_prev.inputs()[..h].to_vec();
    let lower = vec![-cfg.u_max; h];
    let upper = vec![cfg.u_max; h];
    let sol = solve_box_qp(&hess, lin.as_slice().unwrap(), &lower, &upper, Some(&warm), max_iters);
    if !sol.converged {
        eprintln!(
            "warning: MPC solve for step {} stopped after {} iterations; keeping previous plan",
            pred.step, sol.iterations
        );
        let u0 = warm[0].max(-cfg.u_max).min(cfg.u_max);
        return (u0, own_prev.clone());
    }
    let plan = AssumedTrajectory::from_inputs(state.p, state.v, dt, &sol.u, pred.step);
    (sol.u[0], plan)
}
