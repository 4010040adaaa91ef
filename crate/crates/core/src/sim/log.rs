use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{CorpusSource, ScenarioConfig};
use super::harness::RunStatus;
use crate::content::{ContentError, ContentProvider, CorpusManifest};
use crate::interaction::WallState;
use crate::protocol::{ConnId, ConnectRequest, Hub, HubConfig, HubEvent};
use crate::tasks::exp1::TaskRecord;
use crate::tasks::metrics::MetricsReport;
use crate::tasks::recipe::GameRecord;

pub const LOG_FORMAT: u32 = 1;

/// Everything needed to rebuild the hub as it was before the first frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: u32,
    /// The scenario with its corpus inlined.
    pub scenario: ScenarioConfig,
    pub hub: HubConfig,
    pub provider_seed: u64,
    pub initial_state: WallState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFinal {
    pub at: u64,
    pub status: RunStatus,
    pub state: WallState,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(Box<LogHeader>),
    Connect { at: u64, conn: ConnId, request: ConnectRequest, accepted: bool },
    Disconnect { at: u64, conn: ConnId },
    /// A housekeeping pass that changed something.
    Tick { at: u64 },
    In { at: u64, conn: ConnId, raw: String },
    /// Replies worth keeping: registrations and errors.
    Out { at: u64, conn: ConnId, raw: String },
    Event { event: HubEvent },
    Task { record: TaskRecord },
    Game { record: GameRecord },
    Final(Box<LogFinal>),
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log records serialize")
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log line {line}: {message}")]
    LogCorrupt { line: usize, message: String },
    #[error("replay diverged at log line {line}: {detail}")]
    Diverged { line: usize, detail: String },
    #[error(transparent)]
    Content(#[from] ContentError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub frames: usize,
    pub events: usize,
    pub status: RunStatus,
    pub state: WallState,
}

fn parse(text: &str) -> impl Iterator<Item = (usize, Result<LogRecord, ReplayError>)> + '_ {
    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, l)| {
        let line = i + 1;
        (line, serde_json::from_str(l).map_err(|e| ReplayError::LogCorrupt { line, message: e.to_string() }))
    })
}

fn summarize(expected: &WallState, actual: &WallState) -> String {
    let changes = expected.diff(actual);
    let kinds: Vec<String> = changes
        .iter()
        .take(5)
        .map(|c| serde_json::to_value(c).ok().and_then(|v| v["type"].as_str().map(String::from)).unwrap_or_default())
        .collect();
    format!(
        "final state differs in {} place(s) (revision {} vs {}): {}",
        changes.len(),
        expected.revision,
        actual.revision,
        kinds.join(", ")
    )
}

/// Re-runs every logged frame against a fresh hub and checks that the same events and
/// the same final state come out.
pub fn replay(text: &str) -> Result<ReplayOutcome, ReplayError> {
    let mut records = parse(text);
    let (line, header) = records.next().ok_or(ReplayError::LogCorrupt { line: 1, message: "empty log".into() })?;
    let header = match header? {
        LogRecord::Header(h) => h,
        _ => return Err(ReplayError::LogCorrupt { line, message: "first record is not a header".into() }),
    };
    if header.format != LOG_FORMAT {
        return Err(ReplayError::LogCorrupt { line, message: format!("unsupported log format {}", header.format) });
    }
    let CorpusSource::Inline { entries } = &header.scenario.corpus else {
        return Err(ReplayError::LogCorrupt { line, message: "header corpus is not inline".into() });
    };
    let provider = ContentProvider::new(CorpusManifest::new(entries.clone())?, header.provider_seed);
    let mut hub = Hub::new(header.hub, provider, header.initial_state.clone());

    let mut pending: VecDeque<HubEvent> = VecDeque::new();
    let (mut frames, mut events) = (0, 0);
    for (line, rec) in records {
        match rec? {
            LogRecord::Header(_) => {
                return Err(ReplayError::LogCorrupt { line, message: "second header".into() });
            }
            LogRecord::Connect { at, conn, request, accepted } => {
                let got = hub.connect(conn, &request, at).accepted;
                if got != accepted {
                    let detail = format!("connection {conn} accepted={got}, log says {accepted}");
                    return Err(ReplayError::Diverged { line, detail });
                }
            }
            LogRecord::Disconnect { at, conn } => hub.disconnect(conn, at),
            LogRecord::Tick { at } => {
                hub.tick(at);
            }
            LogRecord::In { at, conn, raw } => {
                frames += 1;
                hub.dispatch_bytes(conn, raw.as_bytes(), at);
            }
            LogRecord::Out { .. } | LogRecord::Task { .. } | LogRecord::Game { .. } => {}
            LogRecord::Event { event } => {
                pending.extend(hub.drain_events());
                events += 1;
                match pending.pop_front() {
                    Some(got) if got == event => {}
                    Some(got) => {
                        let detail = format!("expected event {event:?}, replay produced {got:?}");
                        return Err(ReplayError::Diverged { line, detail });
                    }
                    None => {
                        let detail = format!("expected event {event:?}, replay produced none");
                        return Err(ReplayError::Diverged { line, detail });
                    }
                }
            }
            LogRecord::Final(f) => {
                pending.extend(hub.drain_events());
                if let Some(extra) = pending.front() {
                    let detail = format!("replay produced unlogged event {extra:?}");
                    return Err(ReplayError::Diverged { line, detail });
                }
                if hub.state() != &f.state {
                    return Err(ReplayError::Diverged { line, detail: summarize(&f.state, hub.state()) });
                }
                return Ok(ReplayOutcome { frames, events, status: f.status, state: f.state });
            }
        }
    }
    let line = text.lines().count();
    Err(ReplayError::LogCorrupt { line, message: "log ends without a final record".into() })
}

/// Recomputes the metrics report from the task and game records alone.
pub fn report_from_log(text: &str) -> Result<MetricsReport, ReplayError> {
    let mut timings = Vec::new();
    let mut games = Vec::new();
    for (_, rec) in parse(text) {
        match rec? {
            LogRecord::Task { record: TaskRecord::Ended { timing } } => timings.push(timing),
            LogRecord::Game { record: GameRecord::Finished { outcome } } => games.push(outcome),
            _ => {}
        }
    }
    Ok(MetricsReport::from_records(&timings, &games))
}
