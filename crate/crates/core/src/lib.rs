//! Adaptive-cruise-control benchmark comparing a DDPG policy against
//! receding-horizon MPC solved by a log-barrier interior-point method, with
//! a whole-episode optimum as the reference.

// NaN-rejecting parameter checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cost;
pub mod drl;
pub mod dynamics;
pub mod episode;
pub mod error;
pub mod harness;
pub mod mpc;
pub mod trace;

pub use dynamics::{AccParams, KinematicState, ModelSpec, Plant, SurrogateParams, WorldState};
pub use error::{Error, Result};
pub use trace::EpisodeTrace;
