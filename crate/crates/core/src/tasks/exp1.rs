//! Single-user prompted task run.

use serde::{Deserialize, Serialize};

use super::{check_completion, record_timing, TaskGenerator, TaskOutcome, TaskPrompt, TaskTiming};
use crate::interaction::{Prompt, PromptTone, Surface, WallEvent, WallState};
use crate::protocol::{HubEvent, PromptMsg};
use crate::registry::{SessionId, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exp1Config {
    /// A task left open this long is abandoned and the next one issued.
    pub task_timeout_ms: u64,
    pub topics: Vec<String>,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Self { task_timeout_ms: 120_000, topics: Vec::new() }
    }
}

pub fn task_prompt_id(sid: &SessionId) -> String {
    format!("task:{sid}")
}

/// Progress notifications for the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TaskRecord {
    Issued { task: TaskPrompt },
    Ended { timing: TaskTiming },
}

#[derive(Debug, Clone)]
pub struct Exp1Runner {
    cfg: Exp1Config,
    session_id: SessionId,
    side: Side,
    generator: TaskGenerator,
    current: Option<TaskPrompt>,
    timings: Vec<TaskTiming>,
    records: Vec<TaskRecord>,
    started: bool,
    finished: bool,
}

impl Exp1Runner {
    pub fn new(cfg: Exp1Config, seed: u64, session_id: SessionId, side: Side, columns: u32) -> Self {
        let generator = TaskGenerator::new(seed, session_id.clone(), side, columns, cfg.topics.clone());
        Self {
            cfg,
            session_id,
            side,
            generator,
            current: None,
            timings: Vec::new(),
            records: Vec::new(),
            started: false,
            finished: false,
        }
    }

    pub fn total(&self) -> usize {
        self.generator.total()
    }

    pub fn current(&self) -> Option<&TaskPrompt> {
        self.current.as_ref()
    }

    pub fn timings(&self) -> &[TaskTiming] {
        &self.timings
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn drain_records(&mut self) -> Vec<TaskRecord> {
        std::mem::take(&mut self.records)
    }

    fn current_column(&self, state: &WallState) -> Option<u32> {
        match state.cursors.get(&self.session_id).map(|c| c.surface) {
            Some(Surface::Column(c)) if c.side == self.side => Some(c.index),
            _ => None,
        }
    }

    fn issue_next(&mut self, state: &WallState, now: u64) -> PromptMsg {
        let pid = task_prompt_id(&self.session_id);
        let current = self.current_column(state);
        match self.generator.next_task(current, now) {
            Some(task) => {
                let prompt = Prompt {
                    prompt_id: pid.clone(),
                    session_id: Some(self.session_id.clone()),
                    text: task.text.clone(),
                    tone: PromptTone::Task,
                    target: Some(task.target),
                    task: Some(task.kind.clone()),
                    task_id: Some(task.task_id.clone()),
                };
                self.records.push(TaskRecord::Issued { task: task.clone() });
                self.current = Some(task);
                PromptMsg { prompt_id: pid, prompt: Some(prompt) }
            }
            None => {
                self.current = None;
                self.finished = true;
                let prompt = Prompt {
                    prompt_id: pid.clone(),
                    session_id: Some(self.session_id.clone()),
                    text: "All tasks done, thank you".into(),
                    tone: PromptTone::Done,
                    target: None,
                    task: None,
                    task_id: None,
                };
                PromptMsg { prompt_id: pid, prompt: Some(prompt) }
            }
        }
    }

    /// Feeds one hub event; `state` is the hub state after it.
    pub fn on_event(&mut self, ev: &HubEvent, state: &WallState) -> Vec<PromptMsg> {
        if self.finished || ev.event.session_id() != &self.session_id {
            return Vec::new();
        }
        if !self.started {
            if matches!(ev.event, WallEvent::Activation { active: true, .. }) {
                self.started = true;
                return vec![self.issue_next(state, ev.at)];
            }
            return Vec::new();
        }
        let Some(task) = &self.current else {
            return Vec::new();
        };
        if !check_completion(task, &ev.event) {
            return Vec::new();
        }
        let timing = record_timing(task, ev.at).expect("hub events are time ordered");
        self.records.push(TaskRecord::Ended { timing: timing.clone() });
        self.timings.push(timing);
        vec![self.issue_next(state, ev.at)]
    }

    fn abandon_current(&mut self, now: u64) -> bool {
        let Some(task) = self.current.take() else {
            return false;
        };
        let timing = TaskTiming {
            task_id: task.task_id.clone(),
            session_id: task.session_id.clone(),
            kind: task.kind.label().to_string(),
            issued_at: task.issued_at,
            ended_at: now,
            outcome: TaskOutcome::Abandoned,
            duration_ms: now.saturating_sub(task.issued_at),
        };
        self.records.push(TaskRecord::Ended { timing: timing.clone() });
        self.timings.push(timing);
        true
    }

    /// Abandons the open task once it exceeds the timeout.
    pub fn poll(&mut self, now: u64, state: &WallState) -> Vec<PromptMsg> {
        let overdue = self
            .current
            .as_ref()
            .is_some_and(|t| now.saturating_sub(t.issued_at) >= self.cfg.task_timeout_ms);
        if overdue && self.abandon_current(now) {
            vec![self.issue_next(state, now)]
        } else {
            Vec::new()
        }
    }

    /// Ends the run, abandoning whatever is still open.
    pub fn close(&mut self, now: u64) {
        self.abandon_current(now);
        self.finished = true;
    }

    pub fn abandoned(&self) -> usize {
        self.timings.iter().filter(|t| t.outcome == TaskOutcome::Abandoned).count()
    }
}
