//! Exact verification of Lyapunov conditions via mixed-integer linear
//! programming.
//!
//! The pipeline: interval [`bounds`] fix which activations can switch,
//! [`encode`] turns the networks and error dynamics into big-M
//! constraints, [`bnb`] branches on the activation binaries, and each
//! relaxation is solved by the in-house [`simplex`] solver.

mod bnb;
mod bounds;
mod encode;
mod lp;
mod simplex;

pub use bnb::{branch_and_bound, exhaustive_oracle, BnbConfig, MilpSolution, SolveStatus};
pub use bounds::{propagate_bounds, ActivationBounds};
pub use encode::{
    build_dec_milp, build_pos_milp, encode_abs, encode_leaky_relu, encode_network,
    fix_to_activation_pattern, BinaryRole, MilpBuilder, MilpInstance, NetTag,
};
pub use lp::{LinRow, LinearProgram, LpError, LpOutcome, Sense};
pub use simplex::solve_lp;
