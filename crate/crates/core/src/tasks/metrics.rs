//! Per-kind timing statistics.

use serde::{Deserialize, Serialize};

use super::recipe::{GameMode, GameOutcome};
use super::{TaskKind, TaskOutcome, TaskTiming};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub kind: String,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameStats {
    pub game_id: String,
    pub mode: GameMode,
    pub completed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tasks: Vec<KindStats>,
    pub abandoned: usize,
    pub games: Vec<GameStats>,
}

/// Lower median of a sorted slice.
fn lower_median(sorted: &[u64]) -> Option<u64> {
    (!sorted.is_empty()).then(|| sorted[(sorted.len() - 1) / 2])
}

impl MetricsReport {
    /// Statistics over completed tasks; abandoned ones are only counted.
    pub fn from_records(timings: &[TaskTiming], games: &[GameOutcome]) -> Self {
        let tasks = TaskKind::LABELS
            .iter()
            .map(|&kind| {
                let mut ms: Vec<u64> = timings
                    .iter()
                    .filter(|t| t.kind == kind && t.outcome == TaskOutcome::Completed)
                    .map(|t| t.duration_ms)
                    .collect();
                ms.sort_unstable();
                let count = ms.len();
                let sum: u64 = ms.iter().sum();
                KindStats {
                    kind: kind.to_string(),
                    count,
                    mean_s: (count > 0).then(|| sum as f64 / count as f64 / 1000.0),
                    median_s: lower_median(&ms).map(|m| m as f64 / 1000.0),
                }
            })
            .collect();
        let abandoned = timings.iter().filter(|t| t.outcome == TaskOutcome::Abandoned).count();
        let games = games
            .iter()
            .map(|g| GameStats {
                game_id: g.game_id.clone(),
                mode: g.mode,
                completed: g.completed,
                duration_s: g.duration_ms().map(|d| d as f64 / 1000.0),
            })
            .collect();
        Self { tasks, abandoned, games }
    }

    pub fn kind(&self, label: &str) -> Option<&KindStats> {
        self.tasks.iter().find(|k| k.kind == label)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `kind,count,mean_s,median_s`; empty cells for empty buckets.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("kind,count,mean_s,median_s\n");
        for k in &self.tasks {
            out.push_str(&format!("{},{},{},{}\n", k.kind, k.count, cell(k.mean_s), cell(k.median_s)));
        }
        out
    }
}
