//! Closed-loop route runner, driving-score metrics, benchmark and ablation experiments,
//! and their on-disk reports.

mod config;
mod experiments;
mod metrics;
mod report;
mod runner;
mod suite;

use thiserror::Error;

pub use config::{
    build_encoder, AgentConfig, AgentContext, DecisionMode, EncoderConfig, EncoderKind, HeuristicKind, RunConfig,
};
pub use experiments::{
    accumulate_experience, integrate_reflections, reflection_rounds, run_ablation, run_benchmark, AblationKind,
    AccumulationRow, Cell, Experiment, Grid, Round, SizeSpec, LOW_SCORE,
};
pub use metrics::{compute_is, compute_is_named, Aggregate, PenaltyTable, RouteResult, RouteStatus, Stat};
pub use report::{read_csv, report_rows, summary_rows, write_csv, ReportRow, RunDir, SummaryRow};
pub use runner::{route_timeout, run_route, DecisionRecord, RouteRun};
pub use suite::{builtin_suite, load_suite, BUILTIN_SCENARIOS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] crate::sim::ScenarioError),
    #[error(transparent)]
    Memory(#[from] crate::memory::MemoryError),
    #[error(transparent)]
    Client(#[from] crate::clients::ClientError),
    #[error(transparent)]
    Control(#[from] crate::control::ControlError),
    #[error("unknown infraction kind '{0}'")]
    UnknownInfraction(String),
    #[error("ablation grid is empty")]
    EmptyGrid,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
