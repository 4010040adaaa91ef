use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::content::{CorpusEntry, CorpusManifest};
use crate::interaction::{GestureKind, InteractionConfig};
use crate::protocol::GestureMsg;
use crate::registry::{RegistryConfig, Side};
use crate::spatial::{FloorPoint, RoomSpec};
use crate::tasks::exp1::Exp1Config;
use crate::tasks::recipe::GameConfig;

/// Upper bound on simulated bodies.
pub const MAX_AGENTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusSource {
    Inline { entries: Vec<CorpusEntry> },
    /// Directory holding `manifest.json`; relative paths resolve against the scenario file.
    Dir { path: PathBuf },
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Dir { path: PathBuf::from("corpus") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Simulated,
    /// Paces ticks against the wall clock; results are still those of the simulated run.
    Realtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    /// Single prompted user.
    Exp1 {
        user: AgentScript,
        #[serde(default)]
        tasks: Exp1Config,
    },
    /// Two-player recipe game; the first agent must be on the left.
    Exp2 {
        agents: Vec<AgentScript>,
        #[serde(default)]
        game: GameConfig,
    },
    /// Scripted agents only, no task engine. Ends when every script has run out.
    Free { agents: Vec<AgentScript> },
}

impl Experiment {
    pub fn agents(&self) -> Vec<&AgentScript> {
        match self {
            Experiment::Exp1 { user, .. } => vec![user],
            Experiment::Exp2 { agents, .. } | Experiment::Free { agents } => agents.iter().collect(),
        }
    }

    pub fn agents_mut(&mut self) -> Vec<&mut AgentScript> {
        match self {
            Experiment::Exp1 { user, .. } => vec![user],
            Experiment::Exp2 { agents, .. } | Experiment::Free { agents } => agents.iter_mut().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub dwell_ms: u64,
}

impl Waypoint {
    pub fn point(&self) -> FloorPoint {
        FloorPoint::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Gesture {
        gesture: GestureKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dx: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dy: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    Say { text: String },
    /// Select the image in the personal strip and send it to the shared area.
    Place { image_id: String },
    /// Grab a placed image and drop it with its center at `(u, v)`.
    DragTo { image_id: String, u: f64, v: f64 },
}

impl Action {
    pub fn gesture(g: GestureKind) -> Self {
        Action::Gesture { gesture: g, dx: None, dy: None, scale: None }
    }

    pub(crate) fn as_gesture(&self) -> Option<GestureMsg> {
        match self {
            Action::Gesture { gesture, dx, dy, scale } => {
                Some(GestureMsg { gesture: *gesture, dx: *dx, dy: *dy, scale: *scale })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedAction {
    pub at_ms: u64,
    #[serde(flatten)]
    pub action: Action,
}

/// Pad outage: the connection drops at `at_ms` and resumes `down_ms` later.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub at_ms: u64,
    pub down_ms: u64,
    /// Re-send the last envelope after resuming, as a flaky client would.
    #[serde(default = "yes")]
    pub resend_last: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentScript {
    pub agent_id: String,
    pub side: Side,
    pub start: Option<Waypoint>,
    pub waypoints: Vec<Waypoint>,
    pub walk_speed: f64,
    pub actions: Vec<TimedAction>,
    pub reaction_ms: u64,
    /// Gap between consecutive phone gestures.
    pub gesture_gap_ms: u64,
    /// Let the agent decide its own moves from the prompts on the wall.
    pub autopilot: bool,
    /// Whether the autopilot may speak.
    pub use_voice: bool,
    /// Answer the autopilot looks for in the recipe game; defaults to its recipe's tags.
    pub answer_tags: Option<BTreeSet<String>>,
    pub join_at_ms: u64,
    pub faults: Vec<Fault>,
}

impl Default for AgentScript {
    fn default() -> Self {
        Self {
            agent_id: "agent".into(),
            side: Side::Left,
            start: None,
            waypoints: Vec::new(),
            walk_speed: 1.2,
            actions: Vec::new(),
            reaction_ms: 800,
            gesture_gap_ms: 150,
            autopilot: false,
            use_voice: true,
            answer_tags: None,
            join_at_ms: 0,
            faults: Vec::new(),
        }
    }
}

impl AgentScript {
    pub fn autopilot(agent_id: &str, side: Side) -> Self {
        Self { agent_id: agent_id.into(), side, autopilot: true, ..Self::default() }
    }

    pub fn start_point(&self, room: &RoomSpec) -> FloorPoint {
        self.start.map_or(FloorPoint::new(room.width_m / 2.0, room.depth_m / 2.0), |w| w.point())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub room: RoomSpec,
    pub interaction: InteractionConfig,
    pub registry: RegistryConfig,
    pub corpus: CorpusSource,
    pub experiment: Experiment,
    pub tracker_hz: u32,
    pub clock: ClockMode,
    /// Standard deviation of Gaussian tracker noise per axis.
    pub tracker_noise_m: f64,
    /// Simulated time after which the run stops unfinished.
    pub max_duration_ms: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            room: RoomSpec::default(),
            interaction: InteractionConfig::default(),
            registry: RegistryConfig::default(),
            corpus: CorpusSource::default(),
            experiment: Experiment::Free { agents: Vec::new() },
            tracker_hz: 30,
            clock: ClockMode::Simulated,
            tracker_noise_m: 0.0,
            max_duration_ms: 30 * 60 * 1000,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    /// Copy with every relative corpus path resolved against `base`.
    pub fn resolve_paths(mut self, base: &std::path::Path) -> Self {
        if let CorpusSource::Dir { path } = &mut self.corpus {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        self
    }

    pub fn inline_corpus(&mut self, manifest: &CorpusManifest) {
        self.corpus = CorpusSource::Inline { entries: manifest.entries.clone() };
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.room.validate().map_err(|e| SimError::Config(e.to_string()))?;
        if !(1..=1000).contains(&self.tracker_hz) {
            return bad(format!("tracker_hz {} out of range", self.tracker_hz));
        }
        if !(self.tracker_noise_m.is_finite() && self.tracker_noise_m >= 0.0) {
            return bad("tracker_noise_m must be >= 0".into());
        }
        let agents = self.experiment.agents();
        if agents.len() > MAX_AGENTS {
            return bad(format!("at most {MAX_AGENTS} agents"));
        }
        for side in [Side::Left, Side::Right] {
            let n = agents.iter().filter(|a| a.side == side).count();
            if n > self.registry.max_sessions_per_side {
                return bad(format!("{n} agents on the {side} side"));
            }
        }
        let mut ids = BTreeSet::new();
        for a in &agents {
            if !ids.insert(&a.agent_id) {
                return bad(format!("duplicate agent id {}", a.agent_id));
            }
            if !(a.walk_speed.is_finite() && a.walk_speed > 0.0) {
                return bad(format!("{}: walk_speed must be > 0", a.agent_id));
            }
            for w in a.start.iter().chain(&a.waypoints) {
                if !self.room.contains(w.point()) {
                    return bad(format!("{}: waypoint ({}, {}) outside the room", a.agent_id, w.x, w.y));
                }
            }
            if a.actions.windows(2).any(|w| w[0].at_ms > w[1].at_ms) {
                return bad(format!("{}: actions must be sorted by time", a.agent_id));
            }
            for act in &a.actions {
                if let Some(g) = act.action.as_gesture() {
                    g.validate().map_err(|e| SimError::Config(format!("{}: {e}", a.agent_id)))?;
                }
            }
        }
        match &self.experiment {
            Experiment::Exp2 { agents, .. } => {
                let sides: Vec<Side> = agents.iter().map(|a| a.side).collect();
                if sides != [Side::Left, Side::Right] {
                    return bad("recipe game needs one left and one right agent, in that order".into());
                }
            }
            Experiment::Exp1 { .. } if self.room.columns_per_side < 2 => {
                return bad("prompted tasks need at least two columns per side".into());
            }
            _ => {}
        }
        Ok(())
    }
}
