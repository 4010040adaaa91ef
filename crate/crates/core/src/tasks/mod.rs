//! Prompted experiments and their scoring.
//!
//! [`exp1`] issues randomized single-user tasks and times them, [`recipe`] runs the
//! two-player layout game, and [`metrics`] turns timings into a report. Completion is always
//! judged from hub events, never from agent intent.

pub mod exp1;
pub mod metrics;
pub mod recipe;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{normalize, ContentError};
use crate::interaction::{ColumnRef, Container, WallEvent};
use crate::registry::{SessionId, Side};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("task {task_id} completed at {completed_at} before it was issued at {issued_at}")]
    ClockSkew { task_id: String, issued_at: u64, completed_at: u64 },
    #[error("corpus has no image tagged {0:?}")]
    MissingAnswer(String),
    #[error("need at least two recipes, got {0}")]
    NotEnoughRecipes(usize),
    #[error(transparent)]
    Content(#[from] ContentError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "topic", rename_all = "snake_case")]
pub enum TaskKind {
    SpatialSelect,
    ScrollColumn,
    SelectImage,
    MoveToFront,
    VoicePopulate(String),
}

impl TaskKind {
    /// Labels in report order.
    pub const LABELS: [&'static str; 5] =
        ["spatial_select", "scroll_column", "select_image", "move_to_front", "voice_populate"];

    pub const WEIGHTS: [u32; 5] = [2, 2, 2, 2, 1];

    pub fn label(&self) -> &'static str {
        match self {
            TaskKind::SpatialSelect => Self::LABELS[0],
            TaskKind::ScrollColumn => Self::LABELS[1],
            TaskKind::SelectImage => Self::LABELS[2],
            TaskKind::MoveToFront => Self::LABELS[3],
            TaskKind::VoicePopulate(_) => Self::LABELS[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPrompt {
    pub task_id: String,
    pub session_id: SessionId,
    pub kind: TaskKind,
    pub target: ColumnRef,
    pub text: String,
    pub issued_at: u64,
}

impl TaskPrompt {
    pub fn describe(kind: &TaskKind, target: ColumnRef) -> String {
        let n = target.index + 1;
        match kind {
            TaskKind::SpatialSelect => format!("Walk over to column {n}"),
            TaskKind::ScrollColumn => format!("Scroll through column {n}"),
            TaskKind::SelectImage => format!("Tap an image in column {n} to select it"),
            TaskKind::MoveToFront => format!("Send an image from column {n} to your front column"),
            TaskKind::VoicePopulate(topic) => format!("Ask for pictures of {topic} in column {n}"),
        }
    }
}

pub const DEFAULT_TOPICS: [&str; 6] = ["dogs", "cats", "flowers", "cars", "mountains", "birds"];

/// Lazily draws one user's task sequence. Fully determined by the seed and the columns
/// passed to [`TaskGenerator::next_task`].
#[derive(Debug, Clone)]
pub struct TaskGenerator {
    rng: ChaCha8Rng,
    session_id: SessionId,
    side: Side,
    columns: u32,
    topics: Vec<String>,
    total: usize,
    issued: usize,
    weights: WeightedIndex<u32>,
}

impl TaskGenerator {
    pub const MIN_TASKS: usize = 20;
    pub const MAX_TASKS: usize = 35;

    pub fn new(seed: u64, session_id: SessionId, side: Side, columns: u32, topics: Vec<String>) -> Self {
        assert!(columns >= 2, "tasks need at least two columns");
        let topics = if topics.is_empty() {
            DEFAULT_TOPICS.iter().map(|t| t.to_string()).collect()
        } else {
            topics
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = rng.random_range(Self::MIN_TASKS..=Self::MAX_TASKS);
        Self {
            rng,
            session_id,
            side,
            columns,
            topics,
            total,
            issued: 0,
            weights: WeightedIndex::new(TaskKind::WEIGHTS).expect("static weights"),
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn issued(&self) -> usize {
        self.issued
    }

    /// Next task, or `None` once the sequence is exhausted. `current` is the column the
    /// user stands at, if any.
    pub fn next_task(&mut self, current: Option<u32>, issued_at: u64) -> Option<TaskPrompt> {
        if self.issued >= self.total {
            return None;
        }
        let kind = match self.weights.sample(&mut self.rng) {
            0 => TaskKind::SpatialSelect,
            1 => TaskKind::ScrollColumn,
            2 => TaskKind::SelectImage,
            3 => TaskKind::MoveToFront,
            _ => {
                let i = self.rng.random_range(0..self.topics.len());
                TaskKind::VoicePopulate(self.topics[i].clone())
            }
        };
        let index = match (kind == TaskKind::SpatialSelect, current) {
            (true, Some(cur)) if cur < self.columns => {
                let k = self.rng.random_range(0..self.columns - 1);
                if k >= cur {
                    k + 1
                } else {
                    k
                }
            }
            _ => self.rng.random_range(0..self.columns),
        };
        self.issued += 1;
        let target = ColumnRef::new(self.side, index);
        Some(TaskPrompt {
            task_id: format!("{}-t{}", self.session_id, self.issued),
            session_id: self.session_id.clone(),
            text: TaskPrompt::describe(&kind, target),
            kind,
            target,
            issued_at,
        })
    }
}

/// Whether `event` fulfils `prompt`.
pub fn check_completion(prompt: &TaskPrompt, event: &WallEvent) -> bool {
    if event.session_id() != &prompt.session_id {
        return false;
    }
    let target = prompt.target;
    match (&prompt.kind, event) {
        (TaskKind::SpatialSelect, WallEvent::Highlight { to: Some(c), .. }) => *c == target,
        (TaskKind::ScrollColumn, WallEvent::Scrolled { container: Container::Column(c), .. }) => {
            *c == target
        }
        (
            TaskKind::SelectImage,
            WallEvent::Selected { container: Container::Column(c), selected: true, .. },
        ) => *c == target,
        (TaskKind::MoveToFront, WallEvent::MovedToFront { from, .. }) => *from == target,
        (TaskKind::VoicePopulate(topic), WallEvent::Populated { column, query, .. }) => {
            *column == target && normalize(query) == normalize(topic)
        }
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOutcome {
    Completed,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTiming {
    pub task_id: String,
    pub session_id: SessionId,
    pub kind: String,
    pub issued_at: u64,
    pub ended_at: u64,
    pub outcome: TaskOutcome,
    pub duration_ms: u64,
}

pub fn record_timing(prompt: &TaskPrompt, completion_ts: u64) -> Result<TaskTiming, TaskError> {
    let duration_ms = completion_ts.checked_sub(prompt.issued_at).ok_or_else(|| TaskError::ClockSkew {
        task_id: prompt.task_id.clone(),
        issued_at: prompt.issued_at,
        completed_at: completion_ts,
    })?;
    Ok(TaskTiming {
        task_id: prompt.task_id.clone(),
        session_id: prompt.session_id.clone(),
        kind: prompt.kind.label().to_string(),
        issued_at: prompt.issued_at,
        ended_at: completion_ts,
        outcome: TaskOutcome::Completed,
        duration_ms,
    })
}
