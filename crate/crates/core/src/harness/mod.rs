//! Experiment orchestration: configs, Monte Carlo runs, sweeps, the
//! exhaustive MAP oracle and analysis reports.

pub mod analyze;
pub mod config;
pub mod experiment;
pub mod oracle;

pub use analyze::{analyze_command, AnalysisReport, CurvePoint};
pub use config::{ChannelSpec, DesignSpec, ExperimentSpec, PathKind, ProfileKind, ReceiverSpec, SimConfig, UserSpec};
pub use experiment::{
    analysis_block, clopper_pearson, run_monte_carlo, run_prepared, sweep_snr, AnalysisBlock, Experiment, Report,
    SnrPoint, SweepReport, TrialData, UserPoint, Vertex,
};
pub use oracle::{exact_posterior, exhaustive_map_oracle, ExactPosterior, OracleReport};

use crate::error::Error;

/// Process exit code for an error: 1 config, 2 numerical, 3 oracle cap.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) => 1,
        Error::SizeCap(_) => 3,
        _ => 2,
    }
}
