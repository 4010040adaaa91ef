//! The authoritative wall state and its change records.
//!
//! Diffs are computed structurally between two states, so any transition can be
//! broadcast without hand-maintained change bookkeeping.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::registry::{SessionId, Side, TrackId};
use crate::spatial::ScreenPixel;
use crate::tasks::TaskKind;

pub const MIN_SCALE: f64 = 0.25;
pub const MAX_SCALE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageCard {
    pub image_id: String,
    pub source_ref: String,
    pub tags: BTreeSet<String>,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_by: Option<SessionId>,
}

impl ImageCard {
    pub fn new(image_id: &str, source_ref: &str, tags: BTreeSet<String>) -> Self {
        Self {
            image_id: image_id.to_string(),
            source_ref: source_ref.to_string(),
            tags,
            scale: 1.0,
            selected_by: None,
        }
    }

    pub fn set_scale(&mut self, scale: f64) {
        self.scale = scale.clamp(MIN_SCALE, MAX_SCALE);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub side: Side,
    pub index: u32,
}

impl ColumnRef {
    pub fn new(side: Side, index: u32) -> Self {
        Self { side, index }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnState {
    pub side: Side,
    pub index: u32,
    pub cards: Vec<ImageCard>,
    pub scroll_offset: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub populated_query: Option<String>,
}

impl ColumnState {
    pub fn column_ref(&self) -> ColumnRef {
        ColumnRef::new(self.side, self.index)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonalColumn {
    pub cards: Vec<ImageCard>,
    pub scroll_offset: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    Column(ColumnRef),
    /// The session's own personal strip on the front wall.
    Personal,
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cursor {
    pub session_id: SessionId,
    pub surface: Surface,
    pub u: f64,
    pub v: f64,
}

/// Axis-aligned pixel rectangle, `[u0, u1] x [v0, v1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub u0: f64,
    pub v0: f64,
    pub u1: f64,
    pub v1: f64,
}

impl Rect {
    pub fn centered(u: f64, v: f64, w: f64, h: f64) -> Self {
        Self { u0: u - w / 2.0, v0: v - h / 2.0, u1: u + w / 2.0, v1: v + h / 2.0 }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (self.u0..=self.u1).contains(&u) && (self.v0..=self.v1).contains(&v)
    }

    pub fn inside(&self, outer: &Rect) -> bool {
        self.u0 >= outer.u0 && self.u1 <= outer.u1 && self.v0 >= outer.v0 && self.v1 <= outer.v1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.u0 + self.u1) / 2.0, (self.v0 + self.v1) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextBlock {
    pub block_id: String,
    pub rect: Rect,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placeholder {
    pub block_id: String,
    pub target_rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedImage {
    pub card: ImageCard,
    pub u: f64,
    pub v: f64,
    pub placed_by: SessionId,
}

/// Front-wall shared area. Geometry is in strip pixel coordinates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SharedLayout {
    pub text_blocks: Vec<TextBlock>,
    pub placeholders: Vec<Placeholder>,
    pub placed: Vec<PlacedImage>,
    /// Image currently held by each dragging session.
    pub drag_active: BTreeMap<SessionId, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTone {
    Task,
    Correct,
    Incorrect,
    Info,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<SessionId>,
    pub text: String,
    pub tone: PromptTone,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<ColumnRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub side: Side,
    pub front_slot: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_track: Option<TrackId>,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WallState {
    pub revision: u64,
    pub columns: Vec<ColumnState>,
    pub personal: BTreeMap<SessionId, PersonalColumn>,
    pub shared: SharedLayout,
    pub cursors: BTreeMap<SessionId, Cursor>,
    pub highlights: BTreeMap<SessionId, ColumnRef>,
    pub rings: BTreeMap<TrackId, ScreenPixel>,
    pub prompts: BTreeMap<String, Prompt>,
    pub sessions: BTreeMap<SessionId, SessionView>,
}

/// One typed change record. `None` payloads delete the keyed entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Change {
    Column { column: ColumnState },
    Personal { session_id: SessionId, column: Option<PersonalColumn> },
    Shared { shared: SharedLayout },
    Cursor { session_id: SessionId, cursor: Option<Cursor> },
    Highlight { session_id: SessionId, column: Option<ColumnRef> },
    Ring { track_id: TrackId, anchor: Option<ScreenPixel> },
    Prompt { prompt_id: String, prompt: Option<Prompt> },
    Session { session_id: SessionId, session: Option<SessionView> },
}

fn diff_map<K: Ord + Clone, V: PartialEq + Clone>(
    old: &BTreeMap<K, V>,
    new: &BTreeMap<K, V>,
    mut emit: impl FnMut(K, Option<V>),
) {
    for (k, v) in new {
        if old.get(k) != Some(v) {
            emit(k.clone(), Some(v.clone()));
        }
    }
    for k in old.keys() {
        if !new.contains_key(k) {
            emit(k.clone(), None);
        }
    }
}

fn set_entry<K: Ord, V>(map: &mut BTreeMap<K, V>, k: K, v: Option<V>) {
    match v {
        Some(v) => {
            map.insert(k, v);
        }
        None => {
            map.remove(&k);
        }
    }
}

impl WallState {
    pub fn column(&self, c: ColumnRef) -> Option<&ColumnState> {
        self.columns.iter().find(|col| col.side == c.side && col.index == c.index)
    }

    pub fn column_mut(&mut self, c: ColumnRef) -> Option<&mut ColumnState> {
        self.columns.iter_mut().find(|col| col.side == c.side && col.index == c.index)
    }

    /// Changes that turn `self` into `next` (revision excluded).
    pub fn diff(&self, next: &WallState) -> Vec<Change> {
        let mut out = Vec::new();
        for col in &next.columns {
            if self.column(col.column_ref()) != Some(col) {
                out.push(Change::Column { column: col.clone() });
            }
        }
        diff_map(&self.personal, &next.personal, |session_id, column| {
            out.push(Change::Personal { session_id, column })
        });
        if self.shared != next.shared {
            out.push(Change::Shared { shared: next.shared.clone() });
        }
        diff_map(&self.cursors, &next.cursors, |session_id, cursor| {
            out.push(Change::Cursor { session_id, cursor })
        });
        diff_map(&self.highlights, &next.highlights, |session_id, column| {
            out.push(Change::Highlight { session_id, column })
        });
        diff_map(&self.rings, &next.rings, |track_id, anchor| {
            out.push(Change::Ring { track_id, anchor })
        });
        diff_map(&self.prompts, &next.prompts, |prompt_id, prompt| {
            out.push(Change::Prompt { prompt_id, prompt })
        });
        diff_map(&self.sessions, &next.sessions, |session_id, session| {
            out.push(Change::Session { session_id, session })
        });
        out
    }

    pub fn apply(&mut self, revision: u64, changes: &[Change]) {
        for change in changes.iter().cloned() {
            match change {
                Change::Column { column } => match self.column_mut(column.column_ref()) {
                    Some(slot) => *slot = column,
                    None => self.columns.push(column),
                },
                Change::Personal { session_id, column } => {
                    set_entry(&mut self.personal, session_id, column)
                }
                Change::Shared { shared } => self.shared = shared,
                Change::Cursor { session_id, cursor } => {
                    set_entry(&mut self.cursors, session_id, cursor)
                }
                Change::Highlight { session_id, column } => {
                    set_entry(&mut self.highlights, session_id, column)
                }
                Change::Ring { track_id, anchor } => set_entry(&mut self.rings, track_id, anchor),
                Change::Prompt { prompt_id, prompt } => {
                    set_entry(&mut self.prompts, prompt_id, prompt)
                }
                Change::Session { session_id, session } => {
                    set_entry(&mut self.sessions, session_id, session)
                }
            }
        }
        self.revision = revision;
    }

    /// Every card on the wall with where it currently lives.
    pub fn all_cards(&self) -> impl Iterator<Item = &ImageCard> {
        self.columns
            .iter()
            .flat_map(|c| c.cards.iter())
            .chain(self.personal.values().flat_map(|p| p.cards.iter()))
            .chain(self.shared.placed.iter().map(|p| &p.card))
    }
}
