//! Trajectory tracking for an autonomous tractor-trailer.
//!
//! The controller is built from three additive parts:
//!
//! ```text
//!     u = u_f - u_b + u_m
//! ```
//!
//! * `u_f`: feedforward reference inputs derived from the reference trajectory
//!   ([`robust::feedforward_action`]),
//! * `u_b`: a receding-horizon linear MPC on the body-frame tracking error
//!   ([`lmpc::Controller`]), solved by the dense active-set QP in [`qp`],
//! * `u_m`: a saturated PD law on the mismatch between a nominal linear error
//!   model and the measured error ([`robust::RobustController`]).
//!
//! [`sim`] closes the loop around the kinematic plant in [`vehicle`] with
//! sensor noise and an optional drift disturbance, and computes tracking
//! metrics per segment class.

// `!(a < b)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod error;
pub mod error_model;
pub mod lmpc;
pub mod qp;
pub mod robust;
pub mod sim;
pub mod trajectory;
pub mod vehicle;

pub use error::{Error, Result};
