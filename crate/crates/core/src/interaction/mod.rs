//! Screen interaction: what each phone gesture, body movement and utterance does to the wall.
//!
//! Every transition takes `&mut WallState` and either succeeds, pushing [`WallEvent`]s, or
//! returns an error. Callers run transitions on a scratch copy and drop it on error so that
//! failed inputs never leave partial changes behind.

mod state;

pub use state::*;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{self, ContentError, ContentProvider};
use crate::registry::{SessionId, SessionUpdate, Side};
use crate::spatial::{self, Region, RoomSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InteractionError {
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session is outside the active zone")]
    InactiveSession,
    #[error("session has no interaction surface here")]
    NoSurface,
    #[error("voice population needs a side column")]
    NoColumn,
    #[error("nothing selected")]
    NoSelection,
    #[error("image {0} is not in the personal column")]
    NotInPersonalColumn(String),
    #[error("could not parse utterance {0:?}")]
    UnparseableUtterance(String),
    #[error(transparent)]
    Content(ContentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractionConfig {
    pub visible_cards: u32,
    pub cards_per_column: u32,
    /// Width of each session's personal strip on the front wall.
    pub personal_width_m: f64,
    /// Vertical pixels per full-pad move; `None` means the screen height.
    pub pad_gain_v: Option<f64>,
    /// Horizontal pixels per full-pad move on the shared area.
    pub pad_gain_u: f64,
    pub resize_step: f64,
    /// Edge length of an unscaled image on the shared area.
    pub card_px: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self {
            visible_cards: 4,
            cards_per_column: 12,
            personal_width_m: 1.5,
            pad_gain_v: None,
            pad_gain_u: 2000.0,
            resize_step: 1.25,
            card_px: 300.0,
        }
    }
}

/// Gesture kinds a phone can send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureKind {
    Move,
    Tap,
    SwipeLeft,
    SwipeRight,
    SwipeUp,
    SwipeDown,
    Pinch,
    Zoom,
    DoubleTap,
    LongTap,
}

impl GestureKind {
    pub const ALL: [GestureKind; 10] = [
        GestureKind::Move,
        GestureKind::Tap,
        GestureKind::SwipeLeft,
        GestureKind::SwipeRight,
        GestureKind::SwipeUp,
        GestureKind::SwipeDown,
        GestureKind::Pinch,
        GestureKind::Zoom,
        GestureKind::DoubleTap,
        GestureKind::LongTap,
    ];
}

/// Where a card sits when an event refers to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Container {
    Column(ColumnRef),
    Personal,
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum WallEvent {
    SessionRegistered { session_id: SessionId, side: Side },
    SessionExpired { session_id: SessionId },
    Activation { session_id: SessionId, active: bool },
    Highlight { session_id: SessionId, from: Option<ColumnRef>, to: Option<ColumnRef> },
    SurfaceChanged { session_id: SessionId, surface: Option<Surface> },
    Selected { session_id: SessionId, container: Container, image_id: String, selected: bool },
    Scrolled { session_id: SessionId, container: Container, offset: u32 },
    MovedToFront { session_id: SessionId, from: ColumnRef, image_ids: Vec<String> },
    Populated { session_id: SessionId, column: ColumnRef, query: String, count: usize },
    Placed { session_id: SessionId, image_id: String, tags: Vec<String>, u: f64, v: f64 },
    Returned { session_id: SessionId, image_id: String },
    Resized { session_id: SessionId, image_ids: Vec<String>, scale: f64 },
    DragStarted { session_id: SessionId, image_id: String },
    DragEnded { session_id: SessionId, image_id: String, u: f64, v: f64 },
}

impl WallEvent {
    pub fn session_id(&self) -> &SessionId {
        match self {
            WallEvent::SessionRegistered { session_id, .. }
            | WallEvent::SessionExpired { session_id }
            | WallEvent::Activation { session_id, .. }
            | WallEvent::Highlight { session_id, .. }
            | WallEvent::SurfaceChanged { session_id, .. }
            | WallEvent::Selected { session_id, .. }
            | WallEvent::Scrolled { session_id, .. }
            | WallEvent::MovedToFront { session_id, .. }
            | WallEvent::Populated { session_id, .. }
            | WallEvent::Placed { session_id, .. }
            | WallEvent::Returned { session_id, .. }
            | WallEvent::Resized { session_id, .. }
            | WallEvent::DragStarted { session_id, .. }
            | WallEvent::DragEnded { session_id, .. } => session_id,
        }
    }
}

/// Screen layout derived from the room and interaction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallModel {
    pub room: RoomSpec,
    pub cfg: InteractionConfig,
    /// Personal strips reserved at each end of the front wall.
    pub slots_per_side: u32,
}

impl WallModel {
    pub fn new(room: RoomSpec, cfg: InteractionConfig, slots_per_side: u32) -> Self {
        Self { room, cfg, slots_per_side }
    }

    pub fn pad_gain_v(&self) -> f64 {
        self.cfg.pad_gain_v.unwrap_or(self.room.px_h as f64)
    }

    pub fn slot_height(&self) -> f64 {
        self.room.px_h as f64 / self.cfg.visible_cards as f64
    }

    pub fn max_v(&self) -> f64 {
        self.room.px_h as f64 - 1.0
    }

    /// Column arc span on its side wall.
    pub fn column_arc(&self, c: ColumnRef) -> (f64, f64) {
        let region = match c.side {
            Side::Left => Region::LeftSide,
            Side::Right => Region::RightSide,
        };
        spatial::ColumnAssignment { region, column: Some(c.index) }.arc_span(&self.room)
    }

    fn arc_center_u(&self, (lo, hi): (f64, f64)) -> f64 {
        let (a, b) = spatial::arc_span_pixels(lo, hi, &self.room);
        (a as f64 + b as f64) / 2.0
    }

    pub fn column_center_u(&self, c: ColumnRef) -> f64 {
        self.arc_center_u(self.column_arc(c))
    }

    /// Arc span of a personal strip; left-side strips stack inward from the front-left
    /// corner, right-side strips from the front-right corner.
    pub fn personal_arc(&self, side: Side, slot: u32) -> (f64, f64) {
        let w = self.cfg.personal_width_m;
        match side {
            Side::Left => (slot as f64 * w, (slot + 1) as f64 * w),
            Side::Right => {
                let end = self.room.width_m - slot as f64 * w;
                (end - w, end)
            }
        }
    }

    pub fn personal_center_u(&self, side: Side, slot: u32) -> f64 {
        self.arc_center_u(self.personal_arc(side, slot))
    }

    pub fn shared_arc(&self) -> (f64, f64) {
        let reserved = self.slots_per_side as f64 * self.cfg.personal_width_m;
        (reserved, self.room.width_m - reserved)
    }

    /// Inclusive pixel range of the shared area.
    pub fn shared_px(&self) -> (f64, f64) {
        let (lo, hi) = self.shared_arc();
        let (a, b) = spatial::arc_span_pixels(lo, hi, &self.room);
        (a as f64, b as f64)
    }

    pub fn shared_rect(&self) -> Rect {
        let (u0, u1) = self.shared_px();
        Rect { u0, v0: 0.0, u1, v1: self.max_v() }
    }

    /// Where a freshly placed image lands: just inside the shared area next to the strip.
    pub fn entry_point(&self, side: Side) -> (f64, f64) {
        let (u0, u1) = self.shared_px();
        let inset = self.cfg.card_px / 2.0 + 20.0;
        let u = match side {
            Side::Left => u0 + inset,
            Side::Right => u1 - inset,
        };
        (u, self.room.px_h as f64 / 2.0)
    }

    fn front_surface(&self, side: Side, slot: u32, s: f64) -> Option<Surface> {
        let (plo, phi) = self.personal_arc(side, slot);
        let (slo, shi) = self.shared_arc();
        if (plo..phi).contains(&s) {
            Some(Surface::Personal)
        } else if (slo..shi).contains(&s) {
            Some(Surface::Shared)
        } else {
            None
        }
    }

    fn front_span(&self, side: Side, slot: u32, surface: Surface) -> Option<(f64, f64)> {
        match surface {
            Surface::Personal => Some(self.personal_arc(side, slot)),
            Surface::Shared => Some(self.shared_arc()),
            Surface::Column(_) => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.room.validate().map_err(|e| e.to_string())?;
        let (lo, hi) = self.shared_arc();
        if hi - lo < self.cfg.personal_width_m {
            return Err("front wall too narrow for the personal strips".into());
        }
        if self.cfg.visible_cards == 0 {
            return Err("visible_cards must be >= 1".into());
        }
        if !(self.cfg.resize_step > 1.0) {
            return Err("resize_step must be > 1".into());
        }
        Ok(())
    }
}

/// Builds the starting wall: every side column filled with random images.
pub fn initial_state(
    model: &WallModel,
    provider: &ContentProvider,
    seed: u64,
) -> Result<WallState, ContentError> {
    let mut state = WallState::default();
    for side in [Side::Left, Side::Right] {
        for index in 0..model.room.columns_per_side {
            let col_seed = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(((side as u64) << 32) | index as u64);
            let cards = provider
                .random_fill(model.cfg.cards_per_column as usize, col_seed)?
                .into_iter()
                .enumerate()
                .map(|(i, mut c)| {
                    c.image_id = format!("init-{}{}-{}", side.as_str(), index, i);
                    c
                })
                .collect();
            state.columns.push(ColumnState {
                side,
                index,
                cards,
                scroll_offset: 0,
                populated_query: None,
            });
        }
    }
    Ok(state)
}

fn max_scroll(len: usize, visible: u32) -> u32 {
    len.saturating_sub(visible as usize) as u32
}

fn card_index_under(v: f64, scroll: u32, model: &WallModel) -> usize {
    let slot = (v / model.slot_height()).floor().max(0.0) as u32;
    (scroll + slot.min(model.cfg.visible_cards - 1)) as usize
}

fn session_view(state: &WallState, sid: &SessionId) -> Result<SessionView, InteractionError> {
    state.sessions.get(sid).cloned().ok_or_else(|| InteractionError::UnknownSession(sid.clone()))
}

/// Re-evaluates a session's surface, cursor and highlight after a tracking update.
pub fn apply_physical_move(
    state: &mut WallState,
    model: &WallModel,
    upd: &SessionUpdate,
    events: &mut Vec<WallEvent>,
) {
    let sid = &upd.session_id;
    let Some(view) = state.sessions.get(sid).cloned() else {
        return;
    };
    let prev = state.cursors.get(sid).map(|c| c.surface);
    let desired = if !upd.active {
        None
    } else {
        match upd.assignment {
            Some(a) if a.region == view.side.region() => a.column.and_then(|index| {
                let c = ColumnRef::new(view.side, index);
                let taken = state.highlights.iter().any(|(other, h)| other != sid && *h == c);
                (!taken).then_some(Surface::Column(c))
            }),
            Some(a) if a.region == Region::FrontShared => upd.arc_s.and_then(|s| {
                let raw = model.front_surface(view.side, view.front_slot, s);
                match prev.and_then(|p| model.front_span(view.side, view.front_slot, p)) {
                    Some((lo, hi)) if raw != prev => {
                        let gap = if s < lo { lo - s } else { (s - hi).max(0.0) };
                        if gap >= model.room.column_dead_band_m { raw } else { prev }
                    }
                    _ => raw,
                }
            }),
            _ => None,
        }
    };

    if desired != prev {
        if prev == Some(Surface::Shared) {
            end_drag(state, sid, events);
        }
        let v = state.cursors.get(sid).map_or(model.room.px_h as f64 / 2.0, |c| c.v);
        match desired {
            None => {
                state.cursors.remove(sid);
            }
            Some(surface) => {
                let u = match surface {
                    Surface::Shared => {
                        let (lo, hi) = model.shared_px();
                        upd.anchor.map_or(lo, |a| a.u as f64).clamp(lo, hi)
                    }
                    _ => 0.0,
                };
                state.cursors.insert(sid.clone(), Cursor { session_id: sid.clone(), surface, u, v });
            }
        }
        events.push(WallEvent::SurfaceChanged { session_id: sid.clone(), surface: desired });
    }
    if let Some(cursor) = state.cursors.get_mut(sid) {
        match cursor.surface {
            Surface::Column(c) => cursor.u = model.column_center_u(c),
            Surface::Personal => cursor.u = model.personal_center_u(view.side, view.front_slot),
            Surface::Shared => {}
        }
    }

    let new_highlight = match desired {
        Some(Surface::Column(c)) => Some(c),
        _ => None,
    };
    let old_highlight = state.highlights.get(sid).copied();
    if new_highlight != old_highlight {
        match new_highlight {
            Some(c) => state.highlights.insert(sid.clone(), c),
            None => state.highlights.remove(sid),
        };
        events.push(WallEvent::Highlight {
            session_id: sid.clone(),
            from: old_highlight,
            to: new_highlight,
        });
    }
}

fn end_drag(state: &mut WallState, sid: &SessionId, events: &mut Vec<WallEvent>) {
    if let Some(image_id) = state.shared.drag_active.remove(sid) {
        let (u, v) = state
            .shared
            .placed
            .iter()
            .find(|p| p.card.image_id == image_id)
            .map_or((0.0, 0.0), |p| (p.u, p.v));
        events.push(WallEvent::DragEnded { session_id: sid.clone(), image_id, u, v });
    }
}

/// Index of the topmost placed image under the given point.
fn placed_under(state: &WallState, model: &WallModel, u: f64, v: f64) -> Option<usize> {
    state.shared.placed.iter().rposition(|p| {
        let half = model.cfg.card_px * p.card.scale / 2.0;
        (p.u - u).abs() <= half && (p.v - v).abs() <= half
    })
}

pub fn apply_gesture(
    state: &mut WallState,
    model: &WallModel,
    sid: &SessionId,
    gesture: GestureKind,
    dx: f64,
    dy: f64,
    events: &mut Vec<WallEvent>,
) -> Result<(), InteractionError> {
    let view = session_view(state, sid)?;
    if !view.active {
        return Err(InteractionError::InactiveSession);
    }
    let cursor = state.cursors.get(sid).cloned().ok_or(InteractionError::NoSurface)?;
    let container = match cursor.surface {
        Surface::Column(c) => Container::Column(c),
        Surface::Personal => Container::Personal,
        Surface::Shared => Container::Shared,
    };

    match gesture {
        GestureKind::Move => {
            let v = (cursor.v + dy * model.pad_gain_v()).clamp(0.0, model.max_v());
            let c = state.cursors.get_mut(sid).expect("cursor");
            c.v = v;
            if cursor.surface == Surface::Shared {
                let (lo, hi) = model.shared_px();
                c.u = (cursor.u + dx * model.cfg.pad_gain_u).clamp(lo, hi);
                let (u, v) = (c.u, c.v);
                if let Some(held) = state.shared.drag_active.get(sid).cloned() {
                    if let Some(p) = state.shared.placed.iter_mut().find(|p| p.card.image_id == held)
                    {
                        p.u = u;
                        p.v = v;
                    }
                }
            }
        }
        GestureKind::Tap => {
            let cards = match cursor.surface {
                Surface::Column(c) => {
                    let col = state.column_mut(c).ok_or(InteractionError::NoSurface)?;
                    let idx = card_index_under(cursor.v, col.scroll_offset, model);
                    col.cards.get_mut(idx)
                }
                Surface::Personal => {
                    let p = state.personal.entry(sid.clone()).or_default();
                    let idx = card_index_under(cursor.v, p.scroll_offset, model);
                    p.cards.get_mut(idx)
                }
                Surface::Shared => None,
            };
            if let Some(card) = cards {
                let selected = match &card.selected_by {
                    None => Some(true),
                    Some(owner) if owner == sid => Some(false),
                    Some(_) => None,
                };
                if let Some(selected) = selected {
                    card.selected_by = selected.then(|| sid.clone());
                    events.push(WallEvent::Selected {
                        session_id: sid.clone(),
                        container,
                        image_id: card.image_id.clone(),
                        selected,
                    });
                }
            }
        }
        GestureKind::SwipeLeft | GestureKind::SwipeRight => match cursor.surface {
            Surface::Column(c) => {
                let visible = model.cfg.visible_cards;
                let col = state.column_mut(c).ok_or(InteractionError::NoSurface)?;
                let (mut moved, kept): (Vec<ImageCard>, Vec<ImageCard>) = std::mem::take(&mut col.cards)
                    .into_iter()
                    .partition(|card| card.selected_by.as_ref() == Some(sid));
                col.cards = kept;
                col.scroll_offset = col.scroll_offset.min(max_scroll(col.cards.len(), visible));
                if !moved.is_empty() {
                    let ids = moved.iter().map(|c| c.image_id.clone()).collect();
                    for card in &mut moved {
                        card.selected_by = None;
                    }
                    state.personal.entry(sid.clone()).or_default().cards.extend(moved);
                    events.push(WallEvent::MovedToFront {
                        session_id: sid.clone(),
                        from: c,
                        image_ids: ids,
                    });
                }
            }
            Surface::Personal => {
                let ids: Vec<String> = state
                    .personal
                    .get(sid)
                    .map(|p| {
                        p.cards
                            .iter()
                            .filter(|c| c.selected_by.as_ref() == Some(sid))
                            .map(|c| c.image_id.clone())
                            .collect()
                    })
                    .unwrap_or_default();
                for id in ids {
                    place_on_shared(state, model, sid, &id, events)?;
                }
            }
            Surface::Shared => {
                // Dragging an image off the shared area returns it to the personal strip.
                if let Some(held) = state.shared.drag_active.remove(sid) {
                    if let Some(i) = state.shared.placed.iter().position(|p| p.card.image_id == held)
                    {
                        let placed = state.shared.placed.remove(i);
                        state.personal.entry(sid.clone()).or_default().cards.push(placed.card);
                        events.push(WallEvent::Returned { session_id: sid.clone(), image_id: held });
                    }
                }
            }
        },
        GestureKind::SwipeUp | GestureKind::SwipeDown => {
            let visible = model.cfg.visible_cards;
            let (offset, len) = match cursor.surface {
                Surface::Column(c) => {
                    let col = state.column_mut(c).ok_or(InteractionError::NoSurface)?;
                    (&mut col.scroll_offset, col.cards.len())
                }
                Surface::Personal => {
                    let p = state.personal.entry(sid.clone()).or_default();
                    (&mut p.scroll_offset, p.cards.len())
                }
                Surface::Shared => return Ok(()),
            };
            let next = if gesture == GestureKind::SwipeUp {
                (*offset + 1).min(max_scroll(len, visible))
            } else {
                offset.saturating_sub(1)
            };
            if next != *offset {
                *offset = next;
                events.push(WallEvent::Scrolled { session_id: sid.clone(), container, offset: next });
            }
        }
        GestureKind::Pinch | GestureKind::Zoom | GestureKind::DoubleTap => {
            let step = model.cfg.resize_step;
            let resize = |scale: f64| match gesture {
                GestureKind::Pinch => scale / step,
                GestureKind::Zoom => scale * step,
                _ if (scale - 2.0).abs() < 1e-9 => 1.0,
                _ => 2.0,
            };
            let mut targets: Vec<&mut ImageCard> = match cursor.surface {
                Surface::Column(c) => state
                    .column_mut(c)
                    .ok_or(InteractionError::NoSurface)?
                    .cards
                    .iter_mut()
                    .filter(|c| c.selected_by.as_ref() == Some(sid))
                    .collect(),
                Surface::Personal => state
                    .personal
                    .entry(sid.clone())
                    .or_default()
                    .cards
                    .iter_mut()
                    .filter(|c| c.selected_by.as_ref() == Some(sid))
                    .collect(),
                Surface::Shared => {
                    let idx = match state.shared.drag_active.get(sid) {
                        Some(held) => state.shared.placed.iter().position(|p| &p.card.image_id == held),
                        None => placed_under(state, model, cursor.u, cursor.v),
                    };
                    match idx {
                        Some(i) => vec![&mut state.shared.placed[i].card],
                        None => vec![],
                    }
                }
            };
            if targets.is_empty() {
                return Err(InteractionError::NoSelection);
            }
            let mut ids = Vec::with_capacity(targets.len());
            let mut scale = 1.0;
            for card in targets.iter_mut() {
                card.set_scale(resize(card.scale));
                scale = card.scale;
                ids.push(card.image_id.clone());
            }
            events.push(WallEvent::Resized { session_id: sid.clone(), image_ids: ids, scale });
        }
        GestureKind::LongTap => {
            if cursor.surface != Surface::Shared {
                return Ok(());
            }
            if state.shared.drag_active.contains_key(sid) {
                end_drag(state, sid, events);
            } else if let Some(i) = placed_under(state, model, cursor.u, cursor.v) {
                let image_id = state.shared.placed[i].card.image_id.clone();
                let held_by_other = state.shared.drag_active.values().any(|h| *h == image_id);
                if !held_by_other {
                    state.shared.drag_active.insert(sid.clone(), image_id.clone());
                    events.push(WallEvent::DragStarted { session_id: sid.clone(), image_id });
                }
            }
        }
    }
    Ok(())
}

/// Moves an image from the session's personal strip onto the shared area.
pub fn place_on_shared(
    state: &mut WallState,
    model: &WallModel,
    sid: &SessionId,
    image_id: &str,
    events: &mut Vec<WallEvent>,
) -> Result<(), InteractionError> {
    let view = session_view(state, sid)?;
    if !view.active {
        return Err(InteractionError::InactiveSession);
    }
    if state.cursors.get(sid).map(|c| c.surface) != Some(Surface::Personal) {
        return Err(InteractionError::NoSurface);
    }
    let personal = state.personal.entry(sid.clone()).or_default();
    let idx = personal
        .cards
        .iter()
        .position(|c| c.image_id == image_id)
        .ok_or_else(|| InteractionError::NotInPersonalColumn(image_id.to_string()))?;
    let mut card = personal.cards.remove(idx);
    personal.scroll_offset =
        personal.scroll_offset.min(max_scroll(personal.cards.len(), model.cfg.visible_cards));
    card.selected_by = None;
    let (u, v) = model.entry_point(view.side);
    events.push(WallEvent::Placed {
        session_id: sid.clone(),
        image_id: card.image_id.clone(),
        tags: card.tags.iter().cloned().collect(),
        u,
        v,
    });
    state.shared.placed.push(PlacedImage { card, u, v, placed_by: sid.clone() });
    Ok(())
}

pub fn voice_prompt_id(sid: &SessionId) -> String {
    format!("voice:{sid}")
}

/// Repopulates the session's highlighted column from a transcript.
pub fn apply_voice(
    state: &mut WallState,
    model: &WallModel,
    provider: &ContentProvider,
    sid: &SessionId,
    transcript: &str,
    id_prefix: &str,
    events: &mut Vec<WallEvent>,
) -> Result<(), InteractionError> {
    let view = session_view(state, sid)?;
    if !view.active {
        return Err(InteractionError::InactiveSession);
    }
    let column = match state.cursors.get(sid).map(|c| c.surface) {
        Some(Surface::Column(c)) => c,
        _ => return Err(InteractionError::NoColumn),
    };
    let limit = (model.cfg.visible_cards * 3) as usize;
    let query = content::parse_query(transcript, limit).map_err(|e| match e {
        ContentError::UnparseableUtterance(t) => InteractionError::UnparseableUtterance(t),
        other => InteractionError::Content(other),
    })?;
    let cards: Vec<ImageCard> = provider
        .fetch(&query)
        .map_err(InteractionError::Content)?
        .into_iter()
        .enumerate()
        .map(|(i, mut c)| {
            c.image_id = format!("{id_prefix}-{i}");
            c
        })
        .collect();
    let count = cards.len();
    let col = state.column_mut(column).ok_or(InteractionError::NoColumn)?;
    col.cards = cards;
    col.scroll_offset = 0;
    col.populated_query = Some(query.topic.clone());
    let pid = voice_prompt_id(sid);
    if count == 0 {
        state.prompts.insert(
            pid.clone(),
            Prompt {
                prompt_id: pid,
                session_id: Some(sid.clone()),
                text: format!("No pictures of {} found", query.topic),
                tone: PromptTone::Info,
                target: Some(column),
                task: None,
                task_id: None,
            },
        );
    } else {
        state.prompts.remove(&pid);
    }
    events.push(WallEvent::Populated { session_id: sid.clone(), column, query: query.topic, count });
    Ok(())
}
