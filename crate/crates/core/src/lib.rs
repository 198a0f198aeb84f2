//! Softmax policy mirror ascent (SPMA) and baseline policy-gradient methods
//! on finite MDPs and bandits.
//!
//! Everything here is exact and deterministic: policies are evaluated by a
//! dense linear solve, sampling is driven by explicit seeds, and the
//! convergence bounds of the methods are available as checks over recorded
//! trajectories ([`diagnostics`]).
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod diagnostics;
pub mod env;
pub mod error;
pub mod fa;
mod linalg;
pub mod mdp;
pub mod policy;
pub mod tabular;

pub use diagnostics::{IterationRecord, Method, Trajectory};
pub use error::{Error, Result};
pub use mdp::{EvalResult, Occupancy, TabularMdp};
pub use policy::{Logits, Policy};
