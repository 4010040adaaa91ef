//! Simulated participants.
//!
//! An agent has a body the tracker sees and a phone that sends envelopes. Everything it
//! knows about the wall comes from the display mirror, the same state a person in the
//! room would be looking at.

use std::collections::{BTreeSet, VecDeque};

use super::config::{Action, AgentScript, Waypoint};
use crate::interaction::{ColumnRef, GestureKind, Surface, WallModel, WallState};
use crate::protocol::{ConnId, GestureMsg, Message, VoiceMsg};
use crate::registry::{SessionId, Side};
use crate::spatial::{self, FloorPoint};
use crate::tasks::exp1::task_prompt_id;
use crate::tasks::TaskKind;

/// Clearance at which agents stand in front of a wall segment.
const STAND_OFF_M: f64 = 0.4;

/// Straight walk at constant speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub from: FloorPoint,
    pub to: FloorPoint,
    pub start_ms: u64,
    pub speed: f64,
}

impl Leg {
    pub fn duration_ms(&self) -> f64 {
        self.from.distance(self.to) / self.speed * 1000.0
    }

    pub fn position(&self, now: u64) -> FloorPoint {
        let total = self.duration_ms();
        let f = if total <= 0.0 { 1.0 } else { ((now.saturating_sub(self.start_ms)) as f64 / total).min(1.0) };
        FloorPoint::new(self.from.x + (self.to.x - self.from.x) * f, self.from.y + (self.to.y - self.from.y) * f)
    }

    pub fn finished(&self, now: u64) -> bool {
        now.saturating_sub(self.start_ms) as f64 >= self.duration_ms()
    }
}

pub fn column_stand(model: &WallModel, c: ColumnRef) -> FloorPoint {
    let room = &model.room;
    let t = (c.index as f64 + 0.5) * room.column_width_m();
    match c.side {
        Side::Left => FloorPoint::new(STAND_OFF_M, room.depth_m - t),
        Side::Right => FloorPoint::new(room.width_m - STAND_OFF_M, t),
    }
}

pub fn personal_stand(model: &WallModel, side: Side, slot: u32) -> FloorPoint {
    let (lo, hi) = model.personal_arc(side, slot);
    FloorPoint::new((lo + hi) / 2.0, STAND_OFF_M)
}

/// A spot on the front wall facing pixel column `u` of the shared area.
pub fn shared_stand(model: &WallModel, u: f64) -> FloorPoint {
    let (lo, hi) = model.shared_arc();
    let s = spatial::pixel_to_arc(u.round() as i64, &model.room).unwrap_or(lo);
    FloorPoint::new(s.clamp(lo + 0.3, hi - 0.3), STAND_OFF_M + 0.1)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Holder {
    Column(ColumnRef),
    Personal,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Goal {
    WaitUntil(u64),
    GoColumn(ColumnRef),
    Select { holder: Holder, image_id: String },
    Scroll(ColumnRef),
    Send(Message),
    Place(String),
    DragTo { image_id: String, u: f64, v: f64 },
}

enum Step {
    Done,
    Idle,
    Walk(FloorPoint),
    Send(Message),
    SendOnce(Message),
}

/// What the autopilot is trying to achieve.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Plan {
    Scripted,
    Tasks { last_task: Option<String> },
    Recipe { answers: BTreeSet<String>, prefer_voice: bool, search_column: u32 },
}

fn gesture(g: GestureKind) -> Message {
    Message::Gesture(GestureMsg::new(g))
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub script: AgentScript,
    pub track_id: u64,
    pub pos: FloorPoint,
    pub session: Option<SessionId>,
    pub resume_token: Option<String>,
    pub conn: Option<ConnId>,
    pub joined: bool,
    pub seq: u64,
    pub last_sent: Option<String>,
    pub(crate) plan: Plan,
    leg: Option<Leg>,
    waypoints: VecDeque<Waypoint>,
    dwell_until: u64,
    pending_dwell: Option<u64>,
    busy_until: u64,
    goals: VecDeque<Goal>,
    next_action: usize,
    pub(crate) next_fault: usize,
    /// Completed walks, for speed checks.
    pub legs: Vec<Leg>,
}

impl Agent {
    pub fn new(script: AgentScript, track_id: u64, model: &WallModel) -> Self {
        let pos = script.start_point(&model.room);
        let waypoints = script.waypoints.iter().copied().collect();
        Self {
            script,
            track_id,
            pos,
            session: None,
            resume_token: None,
            conn: None,
            joined: false,
            seq: 0,
            last_sent: None,
            plan: Plan::Scripted,
            leg: None,
            waypoints,
            dwell_until: 0,
            pending_dwell: None,
            busy_until: 0,
            goals: VecDeque::new(),
            next_action: 0,
            next_fault: 0,
            legs: Vec::new(),
        }
    }

    pub fn connected(&self) -> bool {
        self.conn.is_some()
    }

    pub fn walking(&self) -> bool {
        self.leg.is_some()
    }

    /// Nothing left to do for a scripted agent.
    pub fn script_finished(&self) -> bool {
        self.leg.is_none()
            && self.waypoints.is_empty()
            && self.goals.is_empty()
            && self.next_action >= self.script.actions.len()
            && self.next_fault >= self.script.faults.len()
    }

    fn walk_to(&mut self, to: FloorPoint, now: u64) {
        if self.leg.is_some_and(|l| l.to == to) || self.pos.distance(to) < 1e-9 {
            return;
        }
        self.finish_leg(now);
        self.leg = Some(Leg { from: self.pos, to, start_ms: now, speed: self.script.walk_speed });
    }

    fn finish_leg(&mut self, now: u64) {
        if let Some(leg) = self.leg.take() {
            self.pos = leg.position(now);
            self.legs.push(Leg { to: self.pos, ..leg });
        }
    }

    /// Moves the body to where it is at `now`.
    pub fn advance(&mut self, now: u64) {
        if let Some(leg) = self.leg {
            self.pos = leg.position(now);
            if leg.finished(now) {
                self.leg = None;
                self.legs.push(leg);
                if self.goals.is_empty() {
                    self.dwell_until = now + self.pending_dwell.take().unwrap_or(0);
                }
            }
        }
        if self.leg.is_none() && now >= self.dwell_until {
            if let Some(w) = self.waypoints.pop_front() {
                self.pending_dwell = Some(w.dwell_ms);
                self.walk_to(w.point(), now);
            }
        }
    }

    fn me<'a>(&'a self, mirror: &'a WallState) -> Option<(&'a SessionId, Option<Surface>, u32)> {
        let sid = self.session.as_ref()?;
        let view = mirror.sessions.get(sid)?;
        Some((sid, mirror.cursors.get(sid).map(|c| c.surface), view.front_slot))
    }

    fn step(&self, goal: &Goal, now: u64, mirror: &WallState, model: &WallModel) -> Step {
        let Some((sid, surface, slot)) = self.me(mirror) else {
            return match goal {
                Goal::Send(m) => Step::SendOnce(m.clone()),
                Goal::WaitUntil(t) if now < *t => Step::Idle,
                _ => Step::Done,
            };
        };
        let side = self.script.side;
        let cursor = mirror.cursors.get(sid);
        match goal {
            Goal::WaitUntil(t) => {
                if now < *t {
                    Step::Idle
                } else {
                    Step::Done
                }
            }
            Goal::GoColumn(c) => {
                if surface == Some(Surface::Column(*c)) {
                    Step::Done
                } else {
                    Step::Walk(column_stand(model, *c))
                }
            }
            Goal::Scroll(c) => {
                if surface != Some(Surface::Column(*c)) {
                    return Step::Walk(column_stand(model, *c));
                }
                let col = mirror.column(*c).expect("column");
                let max = col.cards.len().saturating_sub(model.cfg.visible_cards as usize) as u32;
                if max == 0 {
                    return Step::Done;
                }
                Step::SendOnce(gesture(if col.scroll_offset < max {
                    GestureKind::SwipeUp
                } else {
                    GestureKind::SwipeDown
                }))
            }
            Goal::Send(m) => Step::SendOnce(m.clone()),
            Goal::Select { holder, image_id } => {
                let (want, stand, cards, scroll) = match holder {
                    Holder::Column(c) => {
                        let col = mirror.column(*c).expect("column");
                        (Surface::Column(*c), column_stand(model, *c), &col.cards, col.scroll_offset)
                    }
                    Holder::Personal => {
                        let Some(p) = mirror.personal.get(sid) else {
                            return Step::Done;
                        };
                        (Surface::Personal, personal_stand(model, side, slot), &p.cards, p.scroll_offset)
                    }
                };
                if surface != Some(want) {
                    return Step::Walk(stand);
                }
                let Some(idx) = cards.iter().position(|c| &c.image_id == image_id) else {
                    return Step::Done;
                };
                if cards[idx].selected_by.is_some() {
                    return Step::Done;
                }
                let visible = model.cfg.visible_cards as usize;
                let scroll = scroll as usize;
                if idx < scroll {
                    return Step::Send(gesture(GestureKind::SwipeDown));
                }
                if idx >= scroll + visible {
                    return Step::Send(gesture(GestureKind::SwipeUp));
                }
                let cv = cursor.map_or(0.0, |c| c.v);
                let slot_h = model.slot_height();
                let under = scroll + ((cv / slot_h).floor().max(0.0) as usize).min(visible - 1);
                if under == idx {
                    Step::Send(gesture(GestureKind::Tap))
                } else {
                    let target_v = ((idx - scroll) as f64 + 0.5) * slot_h;
                    let dy = ((target_v - cv) / model.pad_gain_v()).clamp(-1.0, 1.0);
                    Step::Send(Message::Gesture(GestureMsg::movement(0.0, dy)))
                }
            }
            Goal::Place(image_id) => {
                if mirror.shared.placed.iter().any(|p| &p.card.image_id == image_id) {
                    return Step::Done;
                }
                let Some(p) = mirror.personal.get(sid) else {
                    return Step::Done;
                };
                let Some(card) = p.cards.iter().find(|c| &c.image_id == image_id) else {
                    return Step::Done;
                };
                if surface != Some(Surface::Personal) {
                    return Step::Walk(personal_stand(model, side, slot));
                }
                if card.selected_by.as_ref() == Some(sid) {
                    Step::Send(gesture(GestureKind::SwipeRight))
                } else {
                    self.step(
                        &Goal::Select { holder: Holder::Personal, image_id: image_id.clone() },
                        now,
                        mirror,
                        model,
                    )
                }
            }
            Goal::DragTo { image_id, u, v } => {
                let Some(img) = mirror.shared.placed.iter().find(|p| &p.card.image_id == image_id) else {
                    return Step::Done;
                };
                if surface != Some(Surface::Shared) {
                    return Step::Walk(shared_stand(model, img.u));
                }
                let c = cursor.expect("cursor on shared");
                let held = mirror.shared.drag_active.get(sid);
                let near = |a: f64, b: f64, x: f64, y: f64| (a - x).abs() <= 0.5 && (b - y).abs() <= 0.5;
                let toward = |x: f64, y: f64| {
                    let dx = ((x - c.u) / model.cfg.pad_gain_u).clamp(-1.0, 1.0);
                    let dy = ((y - c.v) / model.pad_gain_v()).clamp(-1.0, 1.0);
                    Step::Send(Message::Gesture(GestureMsg::movement(dx, dy)))
                };
                match held {
                    Some(h) if h == image_id => {
                        if near(c.u, c.v, *u, *v) {
                            Step::Send(gesture(GestureKind::LongTap))
                        } else {
                            toward(*u, *v)
                        }
                    }
                    Some(_) => Step::Send(gesture(GestureKind::LongTap)),
                    None if near(img.u, img.v, *u, *v) => Step::Done,
                    None if near(c.u, c.v, img.u, img.v) => Step::Send(gesture(GestureKind::LongTap)),
                    None => toward(img.u, img.v),
                }
            }
        }
    }

    fn push_action(&mut self, action: &Action) {
        let goal = match action {
            Action::Gesture { .. } => Goal::Send(Message::Gesture(action.as_gesture().expect("gesture"))),
            Action::Say { text } => Goal::Send(Message::Voice(VoiceMsg { transcript: text.clone(), confidence: None })),
            Action::Place { image_id } => Goal::Place(image_id.clone()),
            Action::DragTo { image_id, u, v } => Goal::DragTo { image_id: image_id.clone(), u: *u, v: *v },
        };
        self.goals.push_back(goal);
    }

    /// Drops scripted actions that fall due while the phone is offline.
    pub fn drop_due_actions(&mut self, now: u64) {
        while self.script.actions.get(self.next_action).is_some_and(|a| a.at_ms <= now) {
            self.next_action += 1;
        }
    }

    /// Next phone message, if the agent wants to send one now.
    pub fn tick(&mut self, now: u64, mirror: &WallState, model: &WallModel) -> Option<Message> {
        if !self.connected() {
            self.drop_due_actions(now);
            return None;
        }
        while let Some(a) = self.script.actions.get(self.next_action).filter(|a| a.at_ms <= now).cloned() {
            self.push_action(&a.action);
            self.next_action += 1;
        }
        if now < self.busy_until {
            return None;
        }
        if self.goals.is_empty() && self.leg.is_none() {
            self.replan(now, mirror, model);
        }
        for _ in 0..8 {
            let goal = self.goals.front()?.clone();
            match self.step(&goal, now, mirror, model) {
                Step::Done => {
                    self.goals.pop_front();
                }
                Step::Idle => return None,
                Step::Walk(p) => {
                    self.walk_to(p, now);
                    return None;
                }
                Step::Send(m) => {
                    self.busy_until = now + self.script.gesture_gap_ms;
                    return Some(m);
                }
                Step::SendOnce(m) => {
                    self.goals.pop_front();
                    self.busy_until = now + self.script.gesture_gap_ms;
                    return Some(m);
                }
            }
        }
        None
    }

    fn replan(&mut self, now: u64, mirror: &WallState, model: &WallModel) {
        let Some(sid) = self.session.clone() else {
            return;
        };
        let side = self.script.side;
        let columns = model.room.columns_per_side;
        let home = ColumnRef::new(side, columns / 2);
        let active = mirror.sessions.get(&sid).is_some_and(|v| v.active);
        let reaction = self.script.reaction_ms;
        match &mut self.plan {
            Plan::Scripted => {}
            Plan::Tasks { last_task } => {
                let prompt = mirror.prompts.get(&task_prompt_id(&sid));
                let task = prompt.and_then(|p| Some((p.task_id.clone()?, p.task.clone()?, p.target?)));
                let Some((task_id, kind, target)) = task else {
                    if !active && prompt.is_none() {
                        self.goals.push_back(Goal::GoColumn(home));
                    }
                    return;
                };
                let fresh = last_task.as_deref() != Some(task_id.as_str());
                *last_task = Some(task_id);
                self.goals.push_back(Goal::WaitUntil(now + if fresh { reaction } else { 300 }));
                self.goals.push_back(Goal::GoColumn(target));
                let col = mirror.column(target).expect("column");
                let pick = || {
                    let visible = col.cards.iter().skip(col.scroll_offset as usize).chain(col.cards.iter());
                    visible.filter(|c| c.selected_by.is_none()).map(|c| c.image_id.clone()).next()
                };
                match kind {
                    TaskKind::SpatialSelect => {}
                    TaskKind::ScrollColumn => self.goals.push_back(Goal::Scroll(target)),
                    TaskKind::SelectImage => {
                        if let Some(image_id) = pick() {
                            self.goals.push_back(Goal::Select { holder: Holder::Column(target), image_id });
                        }
                    }
                    TaskKind::MoveToFront => {
                        let mine = col.cards.iter().any(|c| c.selected_by.as_ref() == Some(&sid));
                        if !mine {
                            if let Some(image_id) = pick() {
                                self.goals.push_back(Goal::Select { holder: Holder::Column(target), image_id });
                            }
                        }
                        self.goals.push_back(Goal::Send(gesture(GestureKind::SwipeRight)));
                    }
                    TaskKind::VoicePopulate(topic) => {
                        let text = format!("show me pictures of {topic}");
                        self.goals.push_back(Goal::Send(Message::Voice(VoiceMsg { transcript: text, confidence: None })));
                    }
                }
            }
            Plan::Recipe { answers, prefer_voice, search_column } => {
                let is_answer = |tags: &BTreeSet<String>| !tags.is_disjoint(answers);
                let block = format!("recipe-{side}");
                let target = mirror.shared.placeholders.iter().find(|p| p.block_id == block).map(|p| p.target_rect);
                if let Some(p) = mirror.shared.placed.iter().find(|p| p.placed_by == sid && is_answer(&p.card.tags)) {
                    let Some(rect) = target else { return };
                    let (tu, tv) = rect.center();
                    let settled = (p.u - tu).abs() <= 0.5 && (p.v - tv).abs() <= 0.5;
                    if settled && !mirror.shared.drag_active.contains_key(&sid) {
                        self.goals.push_back(Goal::WaitUntil(now + 1000));
                    } else {
                        self.goals.push_back(Goal::DragTo { image_id: p.card.image_id.clone(), u: tu, v: tv });
                    }
                    return;
                }
                if let Some(c) = mirror.personal.get(&sid).and_then(|p| p.cards.iter().find(|c| is_answer(&c.tags))) {
                    self.goals.push_back(Goal::Place(c.image_id.clone()));
                    return;
                }
                let visible = model.cfg.visible_cards as usize;
                let seen = mirror.columns.iter().filter(|c| c.side == side).find_map(|col| {
                    col.cards
                        .iter()
                        .skip(col.scroll_offset as usize)
                        .take(visible)
                        .find(|c| is_answer(&c.tags) && c.selected_by.as_ref().is_none_or(|s| s == &sid))
                        .map(|c| (col.column_ref(), c.image_id.clone()))
                });
                if let Some((c, image_id)) = seen {
                    let selected = mirror
                        .column(c)
                        .and_then(|col| col.cards.iter().find(|k| k.image_id == image_id))
                        .is_some_and(|k| k.selected_by.as_ref() == Some(&sid));
                    self.goals.push_back(Goal::GoColumn(c));
                    if !selected {
                        self.goals.push_back(Goal::Select { holder: Holder::Column(c), image_id });
                    }
                    self.goals.push_back(Goal::Send(gesture(GestureKind::SwipeRight)));
                    return;
                }
                if *prefer_voice {
                    let topic = answers.iter().next().cloned().unwrap_or_default();
                    self.goals.push_back(Goal::GoColumn(home));
                    self.goals.push_back(Goal::WaitUntil(now + reaction));
                    let text = format!("show me pictures of {topic}");
                    self.goals.push_back(Goal::Send(Message::Voice(VoiceMsg { transcript: text, confidence: None })));
                    return;
                }
                // Search: page through each column in turn.
                let c = ColumnRef::new(side, *search_column % columns);
                let col = mirror.column(c).expect("column");
                let max = col.cards.len().saturating_sub(visible) as u32;
                if mirror.cursors.get(&sid).map(|k| k.surface) == Some(Surface::Column(c)) && col.scroll_offset >= max {
                    *search_column = (*search_column + 1) % columns;
                    let next = ColumnRef::new(side, *search_column);
                    self.goals.push_back(Goal::GoColumn(next));
                } else {
                    self.goals.push_back(Goal::GoColumn(c));
                    if max > 0 {
                        self.goals.push_back(Goal::WaitUntil(now + 300));
                        self.goals.push_back(Goal::Send(gesture(GestureKind::SwipeUp)));
                    }
                }
            }
        }
    }
}
