//! Experiment harness for ensemble power-control networks: configuration,
//! dataset generation, ensemble training, evaluation against classical
//! baselines, penalty sweeps, optimization-landscape statistics and timing.

pub mod bench;
pub mod config;
pub mod controllers;
pub mod error;
pub mod eval;
pub mod generate;
pub mod landscape;
pub mod report;
pub mod sweep;
pub mod train;

pub use config::{ExperimentConfig, Task};
pub use error::{HarnessError, HarnessResult};

/// Stream identifiers for `derive_seed(master, stream)`. Every consumer of
/// randomness draws from its own stream, so adding a member or a controller
/// never shifts the draws of another.
pub mod streams {
    pub const TEST_DATA: u64 = 1;
    /// Offset by member index.
    pub const MEMBER_INIT: u64 = 1000;
    /// Offset by member index.
    pub const MEMBER_DATA: u64 = 2000;
    /// Offset by controller position in the configured list.
    pub const EVAL_CONTROLLERS: u64 = 3000;
    pub const EVAL_TIES: u64 = 4000;
    /// Offset by level index.
    pub const LANDSCAPE_SAMPLES: u64 = 5000;
    /// Offset by level index.
    pub const LANDSCAPE_RESTARTS: u64 = 6000;
    pub const BENCH: u64 = 7000;
}
