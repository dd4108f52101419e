//! Experiment harness: initial-condition grids, drive cycles, episode
//! runners and summary writers.

pub mod config;
pub mod cycle;
pub mod experiments;
pub mod grid;
pub mod run;
pub mod summary;

pub use config::{ExperimentConfig, MethodKind};
pub use cycle::DriveCycle;
pub use experiments::{Context, ExperimentOutput};
pub use grid::IcGrid;
pub use run::{run_episode, ControllerSpec};
pub use summary::{ExperimentSummary, Series, SummaryRow};
