//! Learning and certification toolkit for distributed vehicle-platoon control.
//!
//! The crate is organised around one pipeline:
//!
//! * [`dynamics`] — longitudinal vehicle models, the change of variable that
//!   turns every vehicle into a double integrator, and the stacked platoon
//!   error dynamics `x(k+1) = A̅x(k) + B̅u(k)`.
//! * [`nn`] — small leaky-ReLU multilayer perceptrons with analytic
//!   gradients, Adam, an exact saturation construction and JSON checkpoints.
//! * [`milp`] — mixed-integer encodings of the Lyapunov conditions and an
//!   in-house bounded-variable simplex plus branch-and-bound to solve them
//!   to proven global optimality.
//! * [`train`] — the guided training loop that alternates gradient descent
//!   on the certificate/controller pair with MILP counterexample search.
//! * [`baselines`] — clamped linear feedback and a distributed MPC built on
//!   a box-constrained QP solver, used for benchmarking.
//! * [`sim`] — the closed-loop simulation harness, disturbance injection,
//!   collision detection and RMSE/confidence-interval reporting.
//!
//! All numeric code is generic over a [`Scalar`] floating-point type;
//! `f64` aliases for the main types are exported at the crate root.

pub mod baselines;
pub mod dynamics;
pub mod milp;
pub mod nn;
pub mod scalar;
pub mod sim;
pub mod train;

pub use scalar::Scalar;

/// Double-precision platoon error-dynamics model.
pub type PlatoonModel64 = dynamics::PlatoonModel<f64>;
/// Double-precision multilayer perceptron.
pub type Mlp64 = nn::Mlp<f64>;
/// Double-precision Adam optimiser state.
pub type Adam64 = nn::Adam<f64>;
/// Double-precision linear program.
pub type LinearProgram64 = milp::LinearProgram<f64>;
/// Double-precision MILP instance (encoded Lyapunov condition).
pub type MilpInstance64 = milp::MilpInstance<f64>;
/// Double-precision verification region.
pub type Region64 = train::Region<f64>;
