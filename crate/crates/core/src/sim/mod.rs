//! Deterministic scenario driver.
//!
//! A scenario puts scripted or self-driving agents in the room and runs the real hub
//! against them: tracker frames, pad gestures and engine prompts all travel as encoded
//! envelopes. Every inbound frame is written to a JSONL log that [`replay`] can re-run.

mod agent;
mod config;
mod harness;
mod live;
mod log;

use thiserror::Error;

pub use agent::{column_stand, personal_stand, shared_stand, Agent, Leg};
pub use config::{
    Action, AgentScript, ClockMode, CorpusSource, Experiment, Fault, ScenarioConfig, TimedAction, Waypoint,
    MAX_AGENTS,
};
pub use harness::{run_scenario, RunOutput, RunStatus};
pub use live::{LiveHub, FIRST_CLIENT_CONN};
pub use log::{replay, report_from_log, LogFinal, LogHeader, LogRecord, ReplayError, ReplayOutcome, LOG_FORMAT};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Content(#[from] crate::content::ContentError),
    #[error(transparent)]
    Task(#[from] crate::tasks::TaskError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
