//! Longitudinal vehicle dynamics and the stacked platoon error model.
//!
//! Each vehicle follows a first-order velocity-tracking model: the raw
//! actuation command is a *desired velocity* `a` which the vehicle
//! approaches with delay `tau`,
//!
//! ```text
//! p(k+1) = p(k) + dt * v(k)
//! v(k+1) = v(k) + dt * (a(k) - v(k)) / tau
//! ```
//!
//! Substituting `a = tau * u + v` turns every vehicle into the same
//! double integrator `p' = p + dt*v`, `v' = v + dt*u`, regardless of its
//! delay.  Controllers in this crate always act in `u`-space; the inverse
//! substitution converts their outputs back to actuation commands.
//!
//! For a platoon, stacking per-vehicle spacing/velocity errors relative to
//! each predecessor (the first vehicle tracks a virtual reference moving at
//! constant speed) yields linear error dynamics `x(k+1) = A̅x(k) + B̅u(k)`
//! shared by the trainer and the MILP verifier.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{s, Scalar};

/// Per-vehicle model parameters: actuation delay `tau` and step `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams<T> {
    pub tau: T,
    pub dt: T,
}

/// Longitudinal state of one vehicle: absolute position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState<T> {
    pub p: T,
    pub v: T,
}

/// Spacing/velocity error of a vehicle relative to its predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorState<T> {
    /// Gap error: predecessor position minus own position minus desired gap.
    pub ep: T,
    /// Velocity error: predecessor velocity minus own velocity.
    pub ev: T,
}

/// Gaussian disturbance configuration for closed-loop simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation added to every plant state component per step.
    pub dynamics_sigma: f64,
    /// Standard deviation added to every measured error fed to controllers.
    pub sensing_sigma: f64,
    /// Seed for the per-trial noise stream.
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { dynamics_sigma: 0.02, sensing_sigma: 0.02, seed: 0 }
    }
}

/// Errors raised while building models.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("platoon must contain at least one vehicle")]
    EmptyPlatoon,
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("vehicle delay must satisfy 0 < dt < tau, got tau={tau}, dt={dt}")]
    BadDelay { tau: f64, dt: f64 },
    #[error("desired gap {index} must be positive, got {value}")]
    NonPositiveGap { index: usize, value: f64 },
    #[error("expected {expected} desired gaps, got {got}")]
    GapCount { expected: usize, got: usize },
}

impl<T: Scalar> VehicleParams<T> {
    /// Validates `0 < dt < tau`.
    pub fn new(tau: T, dt: T) -> Result<Self, ModelError> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(ModelError::BadTimeStep(dt.to_f64_lossy()));
        }
        if !(tau > dt) || !tau.is_finite() {
            return Err(ModelError::BadDelay {
                tau: tau.to_f64_lossy(),
                dt: dt.to_f64_lossy(),
            });
        }
        Ok(Self { tau, dt })
    }
}

/// Advances one vehicle by one step under a desired-velocity command `a`.
///
/// Panics on non-finite inputs.
pub fn step_vehicle<T: Scalar>(state: VehicleState<T>, a: T, params: VehicleParams<T>) -> VehicleState<T> {
    assert!(
        state.p.is_finite() && state.v.is_finite() && a.is_finite(),
        "step_vehicle requires finite state and input"
    );
    VehicleState {
        p: state.p + params.dt * state.v,
        v: state.v + params.dt * (a - state.v) / params.tau,
    }
}

/// Converts a double-integrator input `u` to the raw desired-velocity
/// command for a vehicle with delay `tau`: `a = tau * u + v`.
#[inline]
pub fn accel_to_desired_velocity<T: Scalar>(u: T, v: T, tau: T) -> T {
    tau * u + v
}

/// Inverse of [`accel_to_desired_velocity`]: `u = (a - v) / tau`.
#[inline]
pub fn desired_velocity_to_accel<T: Scalar>(a: T, v: T, tau: T) -> T {
    (a - v) / tau
}

/// Advances the normalised double-integrator model `p' = p + dt*v`,
/// `v' = v + dt*u` shared by every vehicle after the change of variable.
pub fn step_double_integrator<T: Scalar>(state: VehicleState<T>, u: T, dt: T) -> VehicleState<T> {
    VehicleState { p: state.p + dt * state.v, v: state.v + dt * u }
}

/// Spacing/velocity error of `follower` relative to `predecessor` for a
/// desired inter-vehicle gap.
pub fn error_from_states<T: Scalar>(
    predecessor: VehicleState<T>,
    follower: VehicleState<T>,
    gap: T,
) -> ErrorState<T> {
    ErrorState { ep: predecessor.p - follower.p - gap, ev: predecessor.v - follower.v }
}

/// Stacked error dynamics `x(k+1) = A̅ x(k) + B̅ u(k)` for an `n`-vehicle
/// platoon in double-integrator coordinates.
///
/// `x` stacks per-vehicle errors `(ep_1, ev_1, ..., ep_n, ev_n)`; `u`
/// stacks per-vehicle inputs.  `A̅` is block-diagonal with the single
/// integrator block; `B̅` carries `-B` on the block diagonal and `+B` on
/// the first block subdiagonal (the lead vehicle's predecessor is a virtual
/// reference with zero input).
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonModel<T> {
    n: usize,
    dt: T,
    a_bar: Array2<T>,
    b_bar: Array2<T>,
    gaps: Vec<T>,
}

/// Builds the stacked platoon error model.
///
/// `gaps[i]` is the desired distance between vehicle `i+1` and its
/// predecessor; all gaps must be positive and `gaps.len()` must equal `n`.
pub fn build_platoon_model<T: Scalar>(n: usize, dt: T, gaps: &[T]) -> Result<PlatoonModel<T>, ModelError> {
    if n == 0 {
        return Err(ModelError::EmptyPlatoon);
    }
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(ModelError::BadTimeStep(dt.to_f64_lossy()));
    }
    if gaps.len() != n {
        return Err(ModelError::GapCount { expected: n, got: gaps.len() });
    }
    for (index, &g) in gaps.iter().enumerate() {
        if !(g > T::zero()) || !g.is_finite() {
            return Err(ModelError::NonPositiveGap { index, value: g.to_f64_lossy() });
        }
    }

    let mut a_bar = Array2::zeros((2 * n, 2 * n));
    let mut b_bar = Array2::zeros((2 * n, n));
    for i in 0..n {
        a_bar[(2 * i, 2 * i)] = T::one();
        a_bar[(2 * i, 2 * i + 1)] = dt;
        a_bar[(2 * i + 1, 2 * i + 1)] = T::one();
        // Own input slows the closure rate; the predecessor's input (absent
        // for the virtual reference ahead of vehicle 1) widens it.
        b_bar[(2 * i + 1, i)] = -dt;
        if i > 0 {
            b_bar[(2 * i + 1, i - 1)] = dt;
        }
    }
    Ok(PlatoonModel { n, dt, a_bar, b_bar, gaps: gaps.to_vec() })
}

impl<T: Scalar> PlatoonModel<T> {
    /// Number of vehicles.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Simulation step length.
    pub fn dt(&self) -> T {
        self.dt
    }

    /// Stacked state-transition matrix `A̅` (`2n x 2n`).
    pub fn a_bar(&self) -> &Array2<T> {
        &self.a_bar
    }

    /// Stacked input matrix `B̅` (`2n x n`).
    pub fn b_bar(&self) -> &Array2<T> {
        &self.b_bar
    }

    /// Desired inter-vehicle gaps, one per vehicle.
    pub fn gaps(&self) -> &[T] {
        &self.gaps
    }

    /// State dimension `2n`.
    pub fn state_dim(&self) -> usize {
        2 * self.n
    }
}

/// Applies the stacked error dynamics for one step.
///
/// Panics if `x` or `u` have the wrong length.
pub fn step_platoon_error<T: Scalar>(model: &PlatoonModel<T>, x: &[T], u: &[T]) -> Vec<T> {
    assert_eq!(x.len(), 2 * model.n, "state length must be 2n");
    assert_eq!(u.len(), model.n, "input length must be n");
    let xv = Array1::from(x.to_vec());
    let uv = Array1::from(u.to_vec());
    let next = model.a_bar.dot(&xv) + model.b_bar.dot(&uv);
    next.to_vec()
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `sigma` to
/// every component.  Always consumes one draw per component so that noise
/// streams stay aligned across configurations.
pub fn inject_noise<T: Scalar, R: Rng>(x: &[T], sigma: T, rng: &mut R) -> Vec<T> {
    x.iter()
        .map(|&xi| {
            let z: f64 = rng.sample(StandardNormal);
            xi + sigma * s::<T>(z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(tau: f64, dt: f64) -> VehicleParams<f64> {
        VehicleParams::new(tau, dt).unwrap()
    }

    #[test]
    fn step_vehicle_tracks_desired_velocity() {
        let next = step_vehicle(VehicleState { p: 0.0, v: 2.0 }, 2.0, params(0.3, 0.1));
        assert_eq!(next, VehicleState { p: 0.2, v: 2.0 });

        let next = step_vehicle(VehicleState { p: 0.0, v: 0.0 }, 3.0, params(0.3, 0.1));
        assert!((next.p - 0.0).abs() < 1e-15);
        assert!((next.v - 1.0).abs() < 1e-12);

        let next = step_vehicle(VehicleState { p: 1.0, v: 0.0 }, 0.0, params(0.5, 0.1));
        assert_eq!(next, VehicleState { p: 1.0, v: 0.0 });
    }

    #[test]
    #[should_panic(expected = "finite")]
    fn step_vehicle_rejects_non_finite() {
        step_vehicle(VehicleState { p: f64::NAN, v: 0.0 }, 0.0, params(0.3, 0.1));
    }

    #[test]
    fn vehicle_params_validation() {
        assert!(VehicleParams::new(0.3, 0.1).is_ok());
        assert_eq!(VehicleParams::new(0.3, 0.0), Err(ModelError::BadTimeStep(0.0)));
        assert_eq!(
            VehicleParams::new(0.05, 0.1),
            Err(ModelError::BadDelay { tau: 0.05, dt: 0.1 })
        );
        assert!(VehicleParams::new(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn command_conversions() {
        assert_eq!(accel_to_desired_velocity(10.0, 0.0, 0.3), 3.0);
        assert_eq!(accel_to_desired_velocity(0.0, 2.0, 0.3), 2.0);
        assert_eq!(desired_velocity_to_accel(2.0, 2.0, 0.3), 0.0);
        assert_eq!(desired_velocity_to_accel(3.0, 0.0, 0.3), 10.0);
        assert_eq!(desired_velocity_to_accel(0.0, 4.0, 0.8), -5.0);
    }

    #[test]
    fn command_conversions_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let u: f64 = rng.gen_range(-10.0..10.0);
            let v = rng.gen_range(-5.0..30.0);
            let tau = rng.gen_range(0.1..1.0);
            let a = accel_to_desired_velocity(u, v, tau);
            assert!((desired_velocity_to_accel(a, v, tau) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn double_integrator_step() {
        let next = step_double_integrator(VehicleState { p: 1.0, v: 2.0 }, 0.0, 0.1);
        assert_eq!(next, VehicleState { p: 1.2, v: 2.0 });
        let next = step_double_integrator(VehicleState { p: 0.0, v: 0.0 }, 10.0, 0.1);
        assert_eq!(next, VehicleState { p: 0.0, v: 1.0 });
        // Zero velocity and input is a fixed point.
        let next = step_double_integrator(VehicleState { p: 4.0, v: 0.0 }, 0.0, 0.1);
        assert_eq!(next, VehicleState { p: 4.0, v: 0.0 });
    }

    #[test]
    fn change_of_variable_makes_delay_irrelevant() {
        // Simulating the raw model under the substituted command must match
        // the double integrator for any delay, over long horizons.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let tau = rng.gen_range(0.15..1.0);
            let p = params(tau, 0.1);
            let mut raw = VehicleState { p: 0.0, v: rng.gen_range(0.0..25.0) };
            let mut ideal = raw;
            for _ in 0..1000 {
                let u = rng.gen_range(-3.0..3.0);
                let a = accel_to_desired_velocity(u, raw.v, tau);
                raw = step_vehicle(raw, a, p);
                ideal = step_double_integrator(ideal, u, 0.1);
                assert!((raw.p - ideal.p).abs() < 1e-9);
                assert!((raw.v - ideal.v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn error_state_from_absolute_states() {
        let e = error_from_states(
            VehicleState { p: 10.0, v: 5.0 },
            VehicleState { p: 4.0, v: 4.0 },
            5.0,
        );
        assert_eq!(e, ErrorState { ep: 1.0, ev: 1.0 });

        let e = error_from_states(
            VehicleState { p: 10.0, v: 3.0 },
            VehicleState { p: 5.0, v: 3.0 },
            5.0,
        );
        assert_eq!(e, ErrorState { ep: 0.0, ev: 0.0 });

        // Follower closer than desired: negative gap error.
        let e = error_from_states(
            VehicleState { p: 6.0, v: 3.0 },
            VehicleState { p: 4.0, v: 3.0 },
            5.0,
        );
        assert_eq!(e, ErrorState { ep: -3.0, ev: 0.0 });
    }

    #[test]
    fn single_vehicle_model_matrices() {
        let m = build_platoon_model(1, 0.1, &[5.0]).unwrap();
        assert_eq!(m.a_bar().shape(), &[2, 2]);
        assert_eq!(m.a_bar()[(0, 0)], 1.0);
        assert_eq!(m.a_bar()[(0, 1)], 0.1);
        assert_eq!(m.a_bar()[(1, 0)], 0.0);
        assert_eq!(m.a_bar()[(1, 1)], 1.0);
        // Lead vehicle: only its own input acts, with negative sign.
        assert_eq!(m.b_bar().shape(), &[2, 1]);
        assert_eq!(m.b_bar()[(0, 0)], 0.0);
        assert_eq!(m.b_bar()[(1, 0)], -0.1);
    }

    #[test]
    fn two_vehicle_model_couples_neighbours() {
        let m = build_platoon_model(2, 0.1, &[5.0, 5.0]).unwrap();
        assert_eq!(m.b_bar().shape(), &[4, 2]);
        assert_eq!(m.b_bar()[(1, 0)], -0.1);
        assert_eq!(m.b_bar()[(3, 1)], -0.1);
        // Vehicle 2 sees vehicle 1's input with positive sign.
        assert_eq!(m.b_bar()[(3, 0)], 0.1);
        assert_eq!(m.b_bar()[(2, 0)], 0.0);
        // A̅ has no cross-vehicle coupling.
        assert_eq!(m.a_bar()[(2, 1)], 0.0);
        assert_eq!(m.a_bar()[(2, 2)], 1.0);
        assert_eq!(m.a_bar()[(2, 3)], 0.1);
    }

    #[test]
    fn model_validation() {
        assert_eq!(build_platoon_model::<f64>(0, 0.1, &[]), Err(ModelError::EmptyPlatoon));
        assert_eq!(
            build_platoon_model(2, 0.1, &[5.0, -1.0]),
            Err(ModelError::NonPositiveGap { index: 1, value: -1.0 })
        );
        assert_eq!(
            build_platoon_model(2, 0.1, &[5.0]),
            Err(ModelError::GapCount { expected: 2, got: 1 })
        );
        assert_eq!(build_platoon_model(1, -0.1, &[5.0]), Err(ModelError::BadTimeStep(-0.1)));
    }

    #[test]
    fn platoon_step_matches_per_vehicle_recursion() {
        // Independent oracle: write out the per-vehicle update by hand.
        let m = build_platoon_model(2, 0.1, &[5.0, 5.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let u: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let next = step_platoon_error(&m, &x, &u);
            let expect = [
                x[0] + 0.1 * x[1],
                x[1] + 0.1 * (0.0 - u[0]),
                x[2] + 0.1 * x[3],
                x[3] + 0.1 * (u[0] - u[1]),
            ];
            for (a, b) in next.iter().zip(expect.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn platoon_step_zero_is_fixed_point() {
        let m = build_platoon_model(3, 0.1, &[5.0, 5.0, 5.0]).unwrap();
        let next = step_platoon_error(&m, &[0.0; 6], &[0.0; 3]);
        assert!(next.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_gap_error_drifts_only_through_velocity() {
        let m = build_platoon_model(1, 0.1, &[5.0]).unwrap();
        let next = step_platoon_error(&m, &[1.0, 0.0], &[0.0]);
        assert_eq!(next, vec![1.0, 0.0]);
    }

    #[test]
    fn noise_is_deterministic_and_zero_sigma_is_identity() {
        let x = [1.0, -2.0, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let unchanged = inject_noise(&x, 0.0, &mut rng);
        assert_eq!(unchanged, x.to_vec());

        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(inject_noise(&x, 0.3, &mut r1), inject_noise(&x, 0.3, &mut r2));
    }

    #[test]
    fn noise_standard_deviation_matches_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let zeros = vec![0.0f64; n];
        let noisy = inject_noise(&zeros, 0.5, &mut rng);
        let mean: f64 = noisy.iter().sum::<f64>() / n as f64;
        let var: f64 = noisy.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        assert!((std - 0.5).abs() / 0.5 < 0.01, "std {std} too far from 0.5");
    }
}
