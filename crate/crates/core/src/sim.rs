//! Closed-loop platoon simulation: a lead vehicle tracking a piecewise
//! velocity profile, followers running one of the benchmark controllers on
//! noisy measurements, first-order velocity-tracking plants with per-vehicle
//! time constants, collision detection, and RMSE summaries over trials.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::baselines::{
    dmpc_step, leader_track, linear_feedback, update_assumed, AssumedTrajectory, DmpcConfig,
    LinearGains,
};
use crate::dynamics::{
    accel_to_desired_velocity, inject_noise, step_vehicle, ErrorState, NoiseConfig,
    VehicleParams, VehicleState,
};
use crate::nn::Mlp;
use crate::scalar::{s, Scalar};

/// Input bound of the lead vehicle's velocity tracker.
const LEAD_U_MAX: f64 = 3.0;

/// Gap perturbation half-width for non-formation starts, in metres.
const INIT_PERTURBATION: f64 = 1.0;

/// Errors raised by scenario validation and simulation.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    BadScenario(String),
    #[error("state became non-finite at step {step}, vehicle {vehicle}")]
    NumericalFailure { step: usize, vehicle: usize },
    #[error("only {valid} trial(s) finished; at least 2 are required")]
    TooFewTrials { valid: usize },
}

/// How follower engine time constants are chosen.
#[derive(Clone, Copy, Debug)]
pub enum TauSpec<T> {
    /// Every vehicle uses the same constant.
    Fixed(T),
    /// One uniform draw per vehicle from `[lo, hi]`.
    Uniform(T, T),
}

/// Initial platoon placement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialConditions {
    /// Exact desired gaps at the profile's starting speed.
    Formation,
    /// Formation with uniform gap offsets of up to +/-1 m.
    PerturbedGaps,
}

/// Follower control law under test.
#[derive(Clone, Debug)]
pub enum Controller<T> {
    /// Learned network evaluated on each follower's error block.
    Nn(Mlp<T>),
    /// Clamped proportional feedback.
    Linear(LinearGains<T>),
    /// Distributed MPC tracking the predecessor's shared plan.
    Dmpc(DmpcConfig<T>),
}

/// Complete description of one simulation set-up.
#[derive(Clone, Debug)]
pub struct Scenario<T> {
    /// Vehicles including the leader.
    pub n: usize,
    /// Step length in seconds.
    pub dt: T,
    /// Steps recorded per trial.
    pub steps: usize,
    /// Desired bumper gaps, one per follower.
    pub gaps: Vec<T>,
    /// Engine time-constant specification.
    pub tau: TauSpec<T>,
    /// Lead velocity profile as increasing `(time_s, speed)` knots.
    pub profile: Vec<(T, T)>,
    /// Disturbance levels.
    pub noise: NoiseConfig,
    /// Follower controller.
    pub controller: Controller<T>,
    /// Starting placement.
    pub init: InitialConditions,
}

/// The velocity profile used throughout the experiments: 20 m/s cruise, a
/// ramp to 25 m/s, a dwell, a ramp back down and a settling tail.
pub fn default_profile<T: Scalar>() -> Vec<(T, T)> {
    [(0.0, 20.0), (10.0, 20.0), (15.0, 25.0), (25.0, 25.0), (30.0, 20.0), (50.0, 20.0)]
        .iter()
        .map(|&(t, v)| (s(t), s(v)))
        .collect()
}

/// Piecewise-linear interpolation of a profile, clamped at both ends.
pub fn profile_speed<T: Scalar>(profile: &[(T, T)], t: T) -> T {
    assert!(!profile.is_empty(), "profile needs at least one knot");
    if t <= profile[0].0 {
        return profile[0].1;
    }
    for pair in profile.windows(2) {
        let ((t0, v0), (t1, v1)) = (pair[0], pair[1]);
        if t <= t1 {
            return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
        }
    }
    profile.last().expect("non-empty").1
}

impl<T: Scalar> Scenario<T> {
    /// Checks the structural invariants; simulation entry points call this.
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::BadScenario(msg));
        if self.n == 0 {
            return bad("need at least the lead vehicle".into());
        }
        if !(self.dt > T::zero()) {
            return bad(format!("step length must be positive, got {}", self.dt));
        }
        if self.steps == 0 {
            return bad("duration must be at least one step".into());
        }
        if self.gaps.len() != self.n - 1 {
            return bad(format!("expected {} gaps, got {}", self.n - 1, self.gaps.len()));
        }
        if self.gaps.iter().any(|&g| !(g > T::zero())) {
            return bad("desired gaps must be positive".into());
        }
        match self.tau {
            TauSpec::Fixed(t) if !(t > T::zero()) => {
                return bad(format!("time constant must be positive, got {t}"));
            }
            TauSpec::Uniform(lo, hi) if !(lo > T::zero()) || !(hi >= lo) => {
                return bad(format!("bad time-constant interval [{lo}, {hi}]"));
            }
            _ => {}
        }
        if self.profile.is_empty() {
            return bad("profile needs at least one knot".into());
        }
        for pair in self.profile.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return bad("profile times must be strictly increasing".into());
            }
        }
        if self.profile.iter().any(|&(_, v)| !(v >= T::zero())) {
            return bad("profile speeds must be non-negative".into());
        }
        if self.noise.dynamics_sigma < 0.0 || self.noise.sensing_sigma < 0.0 {
            return bad("noise levels must be non-negative".into());
        }
        Ok(())
    }
}

/// One detected rear-end collision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionEvent<T> {
    /// Step at which the distance first became non-positive.
    pub step: usize,
    /// Index (1-based) of the rear vehicle in the colliding pair.
    pub follower: usize,
    /// Signed bumper distance at the event.
    pub distance: T,
}

/// Everything recorded during a single trial; arrays are `[step][vehicle]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord<T> {
    pub dt: T,
    pub positions: Vec<Vec<T>>,
    pub velocities: Vec<Vec<T>>,
    /// Applied inputs in the double-integrator coordinates.
    pub inputs: Vec<Vec<T>>,
    /// True gap errors; zero for the leader.
    pub gap_errors: Vec<Vec<T>>,
    /// True velocity errors; the leader's is relative to the profile.
    pub vel_errors: Vec<Vec<T>>,
    pub collisions: Vec<CollisionEvent<T>>,
}

/// Flags every step at which a follower reaches its predecessor.
pub fn detect_collisions<T: Scalar>(rec: &TrialRecord<T>, gaps: &[T]) -> Vec<CollisionEvent<T>> {
    let mut events = Vec::new();
    for (k, errs) in rec.gap_errors.iter().enumerate() {
        for (i, &gap) in gaps.iter().enumerate() {
            let distance = errs[i + 1] + gap;
            if distance <= T::zero() {
                events.push(CollisionEvent { step: k, follower: i + 1, distance });
            }
        }
    }
    events
}

/// Per-vehicle `(position RMSE, velocity RMSE)` over the recorded steps.
pub fn rmse_per_vehicle<T: Scalar>(rec: &TrialRecord<T>) -> Vec<(T, T)> {
    let steps = rec.gap_errors.len();
    let n = rec.gap_errors[0].len();
    let denom = s::<T>(steps as f64);
    (0..n)
        .map(|i| {
            let mut sp = T::zero();
            let mut sv = T::zero();
            for k in 0..steps {
                sp += rec.gap_errors[k][i] * rec.gap_errors[k][i];
                sv += rec.vel_errors[k][i] * rec.vel_errors[k][i];
            }
            ((sp / denom).sqrt(), (sv / denom).sqrt())
        })
        .collect()
}

/// Simulates one trial; identical seeds give bit-identical records.
///
/// The leader tracks the profile; each follower measures its spacing and
/// velocity errors with sensing noise and applies the configured controller.
/// Inputs act through the per-vehicle first-order engine model, and process
/// noise perturbs every state component each step.  The MPC variant instead
/// receives its predecessor's one-step-old shared plan (communication, not
/// sensing; the sensing draws are still consumed to keep streams aligned).
pub fn run_trial<T: Scalar>(sc: &Scenario<T>, seed: u64) -> Result<TrialRecord<T>, SimError> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sc.n;
    let dt = sc.dt;

    // Per-vehicle engine constants, one draw each even when fixed-valued
    // scenarios need none, so downstream draws stay aligned across specs.
    let taus: Vec<T> = (0..n)
        .map(|_| {
            let draw: f64 = rng.gen_range(0.0..1.0);
            match sc.tau {
                TauSpec::Fixed(t) => t,
                TauSpec::Uniform(lo, hi) => lo + (hi - lo) * s::<T>(draw),
            }
        })
        .collect();

    let v0 = profile_speed(&sc.profile, T::zero());
    let mut states: Vec<VehicleState<T>> = Vec::with_capacity(n);
    states.push(VehicleState { p: T::zero(), v: v0 });
    for i in 1..n {
        let mut gap = sc.gaps[i - 1];
        if sc.init == InitialConditions::PerturbedGaps {
            let offset: f64 = rng.gen_range(-INIT_PERTURBATION..INIT_PERTURBATION);
            gap += s::<T>(offset);
        }
        let prev = states[i - 1].p;
        states.push(VehicleState { p: prev - gap, v: v0 });
    }

    // Shared plans for the MPC controller, aligned to the current step.
    let horizon = match &sc.controller {
        Controller::Dmpc(cfg) => cfg.horizon,
        _ => 1,
    };
    let mut plans: Vec<AssumedTrajectory<T>> = states
        .iter()
        .map(|st| AssumedTrajectory::constant_velocity(st.p, st.v, dt, horizon, 0))
        .collect();

    let mut rec = TrialRecord {
        dt,
        positions: Vec::with_capacity(sc.steps),
        velocities: Vec::with_capacity(sc.steps),
        inputs: Vec::with_capacity(sc.steps),
        gap_errors: Vec::with_capacity(sc.steps),
        vel_errors: Vec::with_capacity(sc.steps),
        collisions: Vec::new(),
    };

    for k in 0..sc.steps {
        let t = s::<T>(k as f64) * dt;
        let v_ref = profile_speed(&sc.profile, t);

        // True errors for the record (leader: profile tracking only).
        let mut gap_err = vec![T::zero(); n];
        let mut vel_err = vec![T::zero(); n];
        vel_err[0] = v_ref - states[0].v;
        for i in 1..n {
            gap_err[i] = states[i - 1].p - states[i].p - sc.gaps[i - 1];
            vel_err[i] = states[i - 1].v - states[i].v;
        }

        // Noisy measurements, two draws per follower in vehicle order.
        let mut sensed: Vec<ErrorState<T>> = Vec::with_capacity(n - 1);
        for i in 1..n {
            let noisy = inject_noise(
                &[gap_err[i], vel_err[i]],
                s::<T>(sc.noise.sensing_sigma),
                &mut rng,
            );
            sensed.push(ErrorState { ep: noisy[0], ev: noisy[1] });
        }

        // Control inputs in double-integrator coordinates.
        let mut u = vec![T::zero(); n];
        u[0] = leader_track(states[0].v, v_ref, s::<T>(LEAD_U_MAX));
        let mut new_plans: Option<Vec<AssumedTrajectory<T>>> = None;
        match &sc.controller {
            Controller::Nn(net) => {
                for i in 1..n {
                    u[i] = net.eval_scalar(&[sensed[i - 1].ep, sensed[i - 1].ev]);
                }
            }
            Controller::Linear(gains) => {
                for i in 1..n {
                    u[i] = linear_feedback(sensed[i - 1], *gains);
                }
            }
            Controller::Dmpc(cfg) => {
                let aligned: Vec<AssumedTrajectory<T>> = plans
                    .iter()
                    .map(|p| if p.step == k as u64 { p.clone() } else { update_assumed(p) })
                    .collect();
                let mut published = Vec::with_capacity(n);
                published.push(AssumedTrajectory::constant_velocity(
                    states[0].p,
                    states[0].v,
                    dt,
                    horizon,
                    k as u64,
                ));
                for i in 1..n {
                    let (ui, plan) = dmpc_step(
                        states[i],
                        &aligned[i - 1],
                        &aligned[i],
                        cfg,
                        sc.gaps[i - 1],
                    );
                    u[i] = ui;
                    published.push(plan);
                }
                new_plans = Some(published);
            }
        }
        if let Some(p) = new_plans {
            plans = p;
        }

        rec.positions.push(states.iter().map(|s| s.p).collect());
        rec.velocities.push(states.iter().map(|s| s.v).collect());
        rec.inputs.push(u.clone());
        rec.gap_errors.push(gap_err);
        rec.vel_errors.push(vel_err);

        // Advance the physical plants and add process noise.
        for i in 0..n {
            let params = VehicleParams { tau: taus[i], dt };
            let desired = accel_to_desired_velocity(u[i], states[i].v, taus[i]);
            if !desired.is_finite() {
                return Err(SimError::NumericalFailure { step: k, vehicle: i });
            }
            let next = step_vehicle(states[i], desired, params);
            let noisy = inject_noise(
                &[next.p, next.v],
                s::<T>(sc.noise.dynamics_sigma),
                &mut rng,
            );
            states[i] = VehicleState { p: noisy[0], v: noisy[1] };
            if !states[i].p.is_finite() || !states[i].v.is_finite() {
                return Err(SimError::NumericalFailure { step: k, vehicle: i });
            }
        }
    }

    rec.collisions = detect_collisions(&rec, &sc.gaps);
    Ok(rec)
}

/// Aggregated over-trials metrics for one vehicle (1-based indexing in CSV).
#[derive(Clone, Copy, Debug)]
pub struct VehicleMetrics<T> {
    pub pos_rmse_mean: T,
    pub pos_rmse_ci: T,
    pub vel_rmse_mean: T,
    pub vel_rmse_ci: T,
}

/// Experiment-level summary across trials.
#[derive(Clone, Debug)]
pub struct MetricsSummary<T> {
    /// Per-vehicle means and 95% confidence half-widths.
    pub vehicles: Vec<VehicleMetrics<T>>,
    /// Collision events summed over all trials.
    pub total_collisions: usize,
    /// Trials that finished without numerical failure.
    pub trials_used: usize,
}

fn mean_and_ci<T: Scalar>(samples: &[T]) -> (T, T) {
    let n = samples.len();
    let nf = s::<T>(n as f64);
    let mean = samples.iter().copied().sum::<T>() / nf;
    if n < 2 {
        return (mean, T::zero());
    }
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>()
        / s::<T>((n - 1) as f64);
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid Student-t parameters")
        .inverse_cdf(0.975);
    let half = s::<T>(t) * var.sqrt() / nf.sqrt();
    (mean, half)
}

/// Runs `trials` seeds (`base_seed`, `base_seed + 1`, ...) and aggregates
/// per-vehicle RMSE with Student-t 95% confidence half-widths.
///
/// Trials that fail numerically are excluded with a warning; fewer than two
/// surviving trials is an error.
pub fn run_experiment<T: Scalar>(
    sc: &Scenario<T>,
    trials: usize,
    base_seed: u64,
) -> Result<MetricsSummary<T>, SimError> {
    run_experiment_threaded(sc, trials, base_seed, 1)
}

/// [`run_experiment`] with trials spread over `threads` workers.
///
/// Each trial is an independent deterministic computation and aggregation
/// happens in trial order, so any thread count produces results identical
/// to a sequential run.
pub fn run_experiment_threaded<T: Scalar>(
    sc: &Scenario<T>,
    trials: usize,
    base_seed: u64,
    threads: usize,
) -> Result<MetricsSummary<T>, SimError> {
    sc.validate()?;
    if trials < 2 {
        return Err(SimError::TooFewTrials { valid: trials });
    }
    type TrialResult<T> = Result<(Vec<(T, T)>, usize), SimError>;
    let one = |trial: usize| -> TrialResult<T> {
        let rec = run_trial(sc, base_seed + trial as u64)?;
        Ok((rmse_per_vehicle(&rec), rec.collisions.len()))
    };
    let threads = threads.clamp(1, trials);
    let results: Vec<TrialResult<T>> = if threads == 1 {
        (0..trials).map(one).collect()
    } else {
        std::thread::scope(|scope| {
            let workers: Vec<_> = (0..threads)
                .map(|w| {
                    let one = &one;
                    scope.spawn(move || {
                        (w..trials).step_by(threads).map(|t| (t, one(t))).collect::<Vec<_>>()
                    })
                })
                .collect();
            let mut slots: Vec<Option<TrialResult<T>>> = (0..trials).map(|_| None).collect();
            for worker in workers {
                for (t, r) in worker.join().expect("trial worker panicked") {
                    slots[t] = Some(r);
                }
            }
            slots.into_iter().map(|r| r.expect("every trial ran")).collect()
        })
    };
    let mut per_trial: Vec<Vec<(T, T)>> = Vec::with_capacity(trials);
    let mut total_collisions = 0;
    for (trial, result) in results.into_iter().enumerate() {
        match result {
            Ok((rmse, collisions)) => {
                total_collisions += collisions;
                per_trial.push(rmse);
            }
            Err(e) => eprintln!("warning: trial {trial} aborted: {e}"),
        }
    }
    if per_trial.len() < 2 {
        return Err(SimError::TooFewTrials { valid: per_trial.len() });
    }
    let vehicles = (0..sc.n)
        .map(|i| {
            let pos: Vec<T> = per_trial.iter().map(|t| t[i].0).collect();
            let vel: Vec<T> = per_trial.iter().map(|t| t[i].1).collect();
            let (pm, pc) = mean_and_ci(&pos);
            let (vm, vc) = mean_and_ci(&vel);
            VehicleMetrics {
                pos_rmse_mean: pm,
                pos_rmse_ci: pc,
                vel_rmse_mean: vm,
                vel_rmse_ci: vc,
            }
        })
        .collect();
    Ok(MetricsSummary { vehicles, total_collisions, trials_used: per_trial.len() })
}

/// Writes the long-format trajectory table for one trial.
pub fn write_trajectory_csv<T: Scalar, W: Write>(
    rec: &TrialRecord<T>,
    out: &mut W,
) -> io::Result<()> {
    writeln!(out, "step,time_s,vehicle,position_m,velocity_mps,input_mps2,gap_error_m,vel_error_mps")?;
    for (k, positions) in rec.positions.iter().enumerate() {
        let t = rec.dt.to_f64_lossy() * k as f64;
        for i in 0..positions.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                k,
                t,
                i + 1,
                positions[i],
                rec.velocities[k][i],
                rec.inputs[k][i],
                rec.gap_errors[k][i],
                rec.vel_errors[k][i],
            )?;
        }
    }
    Ok(())
}

/// Writes the per-vehicle RMSE summary table.
pub fn write_metrics_csv<T: Scalar, W: Write>(
    summary: &MetricsSummary<T>,
    out: &mut W,
) -> io::Result<()> {
    writeln!(out, "vehicle,pos_rmse_mean,pos_rmse_ci,vel_rmse_mean,vel_rmse_ci")?;
    for (i, m) in summary.vehicles.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            m.pos_rmse_mean,
            m.pos_rmse_ci,
            m.vel_rmse_mean,
            m.vel_rmse_ci,
        )?;
    }
    Ok(())
}
