//! Receding-horizon MPC and the whole-episode benchmark, both built on a
//! single-shooting transcription solved by a log-barrier interior-point
//! method.

pub mod barrier;
pub mod controller;
pub mod rollout;

pub use barrier::{solve_barrier, BarrierConfig, BarrierSolver, NlpProblem, SolveReport};
pub use controller::{ipo_benchmark, mpc_controller, IpoSolution, MpcConfig, MpcController};
pub use rollout::{rollout_cost, LinearCom, ShootingProblem};
