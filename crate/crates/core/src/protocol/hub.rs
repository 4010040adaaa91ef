//! The authoritative wall: owns the registry and the wall state, validates and applies
//! inbound envelopes, and fans structural diffs out to displays.
//!
//! The hub is synchronous and transport-agnostic. A transport assigns each connection a
//! [`ConnId`], feeds frames in, and delivers the returned [`Outbound`] frames.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    decode, AckMsg, Envelope, ErrorCode, GestureMsg, Message, PromptMsg, RegisterOk, SnapshotMsg,
    StateDiff, TrackMsg,
};
use crate::content::{ContentError, ContentProvider};
use crate::interaction::{
    self, InteractionConfig, SessionView, WallEvent, WallModel, WallState,
};
use crate::registry::{Registry, RegistryConfig, SessionId, TrackId, TrackSnapshot};
use crate::spatial::{self, RoomSpec};

pub type ConnId = u64;

pub const HUB_SID: &str = "hub";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pad,
    Display,
    Tracker,
    Voice,
    /// In-process task engine posting prompts.
    Engine,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Pad => "pad",
            Role::Display => "display",
            Role::Tracker => "tracker",
            Role::Voice => "voice",
            Role::Engine => "engine",
        }
    }

    fn accepts(self, msg: &Message) -> bool {
        matches!(
            (self, msg),
            (_, Message::Ping | Message::Pong)
                | (Role::Pad, Message::Gesture(_) | Message::Voice(_))
                | (Role::Voice, Message::Voice(_))
                | (Role::Tracker, Message::Tracks(_))
                | (Role::Engine, Message::Prompt(_))
        )
    }
}

/// Parameters of a new connection, usually parsed from the websocket query string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectRequest {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume: Option<String>,
    /// Session a voice feed speaks for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sid: Option<String>,
}

impl ConnectRequest {
    pub fn new(role: Role) -> Self {
        Self { role, side: None, resume: None, sid: None }
    }

    pub fn pad(side: &str) -> Self {
        Self { side: Some(side.to_string()), ..Self::new(Role::Pad) }
    }

    pub fn resume(token: &str) -> Self {
        Self { resume: Some(token.to_string()), ..Self::new(Role::Pad) }
    }

    pub fn voice(sid: &SessionId) -> Self {
        Self { sid: Some(sid.to_string()), ..Self::new(Role::Voice) }
    }

    /// Parses `role=pad&side=left` style queries.
    pub fn from_query(query: &str) -> Result<Self, String> {
        let mut role = None;
        let mut req = Self::new(Role::Display);
        for pair in query.trim_start_matches('?').split('&').filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
            match k {
                "role" => {
                    role = Some(match v {
                        "pad" => Role::Pad,
                        "display" => Role::Display,
                        "tracker" => Role::Tracker,
                        "voice" => Role::Voice,
                        other => return Err(format!("unknown role {other:?}")),
                    })
                }
                "side" => req.side = Some(v.to_string()),
                "resume" => req.resume = Some(v.to_string()),
                "sid" => req.sid = Some(v.to_string()),
                other => return Err(format!("unknown parameter {other:?}")),
            }
        }
        req.role = role.ok_or("missing role")?;
        Ok(req)
    }

    pub fn to_query(&self) -> String {
        let mut parts = vec![format!("role={}", self.role.as_str())];
        for (k, v) in [("side", &self.side), ("resume", &self.resume), ("sid", &self.sid)] {
            if let Some(v) = v {
                parts.push(format!("{k}={v}"));
            }
        }
        parts.join("&")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HubConfig {
    pub room: RoomSpec,
    pub interaction: InteractionConfig,
    pub registry: RegistryConfig,
    pub seed: u64,
}

impl HubConfig {
    pub fn model(&self) -> WallModel {
        WallModel::new(self.room, self.interaction, self.registry.max_sessions_per_side as u32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: ConnId,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectOutcome {
    pub accepted: bool,
    pub session: Option<SessionId>,
    pub outbound: Vec<Outbound>,
}

/// A wall event stamped with the revision it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubEvent {
    pub at: u64,
    pub revision: u64,
    #[serde(flatten)]
    pub event: WallEvent,
}

#[derive(Debug, Clone)]
struct Conn {
    role: Role,
    session: Option<SessionId>,
    last_seq: u64,
    out_seq: u64,
}

#[derive(Debug, Clone)]
pub struct Hub {
    model: WallModel,
    provider: ContentProvider,
    registry: Registry,
    state: WallState,
    conns: BTreeMap<ConnId, Conn>,
    pad_conn: BTreeMap<SessionId, ConnId>,
    voice_conn: BTreeMap<SessionId, ConnId>,
    events: Vec<HubEvent>,
}

/// Removes every trace of a session from the wall except images it already placed.
fn drop_session(state: &mut WallState, sid: &SessionId) {
    state.sessions.remove(sid);
    state.personal.remove(sid);
    state.cursors.remove(sid);
    state.highlights.remove(sid);
    state.shared.drag_active.remove(sid);
    state.prompts.retain(|_, p| p.session_id.as_ref() != Some(sid));
    for col in &mut state.columns {
        for card in &mut col.cards {
            if card.selected_by.as_ref() == Some(sid) {
                card.selected_by = None;
            }
        }
    }
}

impl Hub {
    pub fn new(config: HubConfig, provider: ContentProvider, state: WallState) -> Self {
        Self {
            model: config.model(),
            provider,
            registry: Registry::new(config.room, config.registry, config.seed),
            state,
            conns: BTreeMap::new(),
            pad_conn: BTreeMap::new(),
            voice_conn: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    /// Builds a hub whose columns start filled with random images.
    pub fn with_random_fill(config: HubConfig, provider: ContentProvider) -> Result<Self, ContentError> {
        let state = interaction::initial_state(&config.model(), &provider, config.seed)?;
        Ok(Self::new(config, provider, state))
    }

    pub fn state(&self) -> &WallState {
        &self.state
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn model(&self) -> &WallModel {
        &self.model
    }

    pub fn provider(&self) -> &ContentProvider {
        &self.provider
    }

    pub fn revision(&self) -> u64 {
        self.state.revision
    }

    pub fn is_connected(&self, conn: ConnId) -> bool {
        self.conns.contains_key(&conn)
    }

    pub fn connections(&self) -> impl Iterator<Item = (ConnId, Role)> + '_ {
        self.conns.iter().map(|(id, c)| (*id, c.role))
    }

    /// Events produced since the last drain.
    pub fn drain_events(&mut self) -> Vec<HubEvent> {
        std::mem::take(&mut self.events)
    }

    fn envelope_to(&mut self, to: ConnId, msg: Message, now: u64) -> Outbound {
        let seq = self.conns.get_mut(&to).map_or(1, |c| {
            c.out_seq += 1;
            c.out_seq
        });
        Outbound { to, envelope: Envelope::new(seq, HUB_SID, now, msg) }
    }

    fn error_to(
        &mut self,
        to: ConnId,
        code: ErrorCode,
        message: String,
        ref_seq: Option<u64>,
        now: u64,
    ) -> Outbound {
        self.envelope_to(to, Message::error(code, message, ref_seq), now)
    }

    /// Swaps in `next` and broadcasts the diff, bumping the revision if anything changed.
    fn commit(&mut self, mut next: WallState, events: Vec<WallEvent>, now: u64) -> Vec<Outbound> {
        let changes = self.state.diff(&next);
        let mut out = Vec::new();
        if !changes.is_empty() {
            next.revision = self.state.revision + 1;
            let displays: Vec<ConnId> = self
                .conns
                .iter()
                .filter(|(_, c)| c.role == Role::Display)
                .map(|(id, _)| *id)
                .collect();
            for d in displays {
                let msg = Message::StateDiff(StateDiff { revision: next.revision, changes: changes.clone() });
                out.push(self.envelope_to(d, msg, now));
            }
        } else {
            next.revision = self.state.revision;
        }
        self.state = next;
        let revision = self.state.revision;
        self.events.extend(events.into_iter().map(|event| HubEvent { at: now, revision, event }));
        out
    }

    fn expire(&mut self, next: &mut WallState, events: &mut Vec<WallEvent>, now: u64) {
        for sid in self.registry.expire_sessions(now) {
            drop_session(next, &sid);
            self.pad_conn.remove(&sid);
            self.voice_conn.remove(&sid);
            events.push(WallEvent::SessionExpired { session_id: sid });
        }
    }

    /// Expires sessions whose pads stayed away too long.
    pub fn tick(&mut self, now: u64) -> Vec<Outbound> {
        let mut next = self.state.clone();
        let mut events = Vec::new();
        self.expire(&mut next, &mut events, now);
        self.commit(next, events, now)
    }

    fn reject(
        &mut self,
        conn: ConnId,
        next: WallState,
        events: Vec<WallEvent>,
        code: ErrorCode,
        message: String,
        now: u64,
    ) -> ConnectOutcome {
        let mut outbound = self.commit(next, events, now);
        let envelope = Envelope::new(1, HUB_SID, now, Message::error(code, message, None));
        outbound.push(Outbound { to: conn, envelope });
        ConnectOutcome { accepted: false, session: None, outbound }
    }

    pub fn connect(&mut self, conn: ConnId, req: &ConnectRequest, now: u64) -> ConnectOutcome {
        let mut next = self.state.clone();
        let mut events = Vec::new();
        self.expire(&mut next, &mut events, now);
        let (session, reply) = match req.role {
            Role::Pad => {
                let result = match (&req.resume, &req.side) {
                    (Some(token), _) => self.registry.resume_session(token, now).map(|s| (s, true)),
                    (None, Some(side)) => self.registry.register_session(side, now).map(|s| (s, false)),
                    (None, None) => {
                        return self.reject(conn, next, events, ErrorCode::BadRequest, "pad needs side or resume".into(), now)
                    }
                };
                let (s, resumed) = match result {
                    Ok(v) => v,
                    Err(e) => {
                        // A failed resume may purge an expired session.
                        let code = ErrorCode::from(&e);
                        for sid in next.sessions.keys().cloned().collect::<Vec<_>>() {
                            if self.registry.session(&sid).is_none() {
                                drop_session(&mut next, &sid);
                                self.pad_conn.remove(&sid);
                                self.voice_conn.remove(&sid);
                                events.push(WallEvent::SessionExpired { session_id: sid });
                            }
                        }
                        return self.reject(conn, next, events, code, e.to_string(), now);
                    }
                };
                if !resumed {
                    next.sessions.insert(
                        s.session_id.clone(),
                        SessionView { side: s.side, front_slot: s.front_slot, bound_track: None, active: false },
                    );
                    next.personal.insert(s.session_id.clone(), Default::default());
                    events.push(WallEvent::SessionRegistered { session_id: s.session_id.clone(), side: s.side });
                }
                self.pad_conn.insert(s.session_id.clone(), conn);
                let reply = RegisterOk {
                    session_id: s.session_id.clone(),
                    side: s.side,
                    resume_token: s.resume_token.clone(),
                    revision: 0,
                    resumed,
                };
                (Some(s.session_id), Some(Message::RegisterOk(reply)))
            }
            Role::Voice => {
                let sid = SessionId(req.sid.clone().unwrap_or_default());
                if self.registry.session(&sid).is_none() {
                    let msg = format!("unknown session {sid}");
                    return self.reject(conn, next, events, ErrorCode::UnknownSession, msg, now);
                }
                self.voice_conn.insert(sid.clone(), conn);
                (Some(sid), None)
            }
            Role::Display | Role::Tracker | Role::Engine => (None, None),
        };

        self.conns.insert(conn, Conn { role: req.role, session: session.clone(), last_seq: 0, out_seq: 0 });
        let mut outbound = self.commit(next, events, now);
        match reply {
            Some(Message::RegisterOk(mut ok)) => {
                ok.revision = self.state.revision;
                outbound.push(self.envelope_to(conn, Message::RegisterOk(ok), now));
            }
            Some(other) => outbound.push(self.envelope_to(conn, other, now)),
            None => {}
        }
        if req.role == Role::Display {
            let snap = Message::StateSnapshot(SnapshotMsg { state: self.state.clone() });
            outbound.push(self.envelope_to(conn, snap, now));
        }
        ConnectOutcome { accepted: true, session, outbound }
    }

    pub fn disconnect(&mut self, conn: ConnId, now: u64) {
        let Some(c) = self.conns.remove(&conn) else {
            return;
        };
        let Some(sid) = c.session else {
            return;
        };
        match c.role {
            Role::Pad if self.pad_conn.get(&sid) == Some(&conn) => {
                self.pad_conn.remove(&sid);
                self.registry.mark_disconnected(&sid, now);
            }
            Role::Voice if self.voice_conn.get(&sid) == Some(&conn) => {
                self.voice_conn.remove(&sid);
            }
            _ => {}
        }
    }

    /// A heartbeat ping for one connection.
    pub fn ping(&mut self, conn: ConnId, now: u64) -> Option<Outbound> {
        self.conns.contains_key(&conn).then(|| self.envelope_to(conn, Message::Ping, now))
    }

    pub fn dispatch_bytes(&mut self, conn: ConnId, bytes: &[u8], now: u64) -> Vec<Outbound> {
        match decode(bytes) {
            Ok(env) => self.dispatch(conn, &env, now),
            Err(e) => vec![self.error_to(conn, e.code(), e.to_string(), None, now)],
        }
    }

    /// Applies one inbound envelope. The sender always gets exactly one ack or error.
    pub fn dispatch(&mut self, conn: ConnId, env: &Envelope, now: u64) -> Vec<Outbound> {
        let seq = env.seq;
        let Some(c) = self.conns.get(&conn).cloned() else {
            return vec![self.error_to(conn, ErrorCode::UnknownSession, "connection not registered".into(), Some(seq), now)];
        };
        if !c.role.accepts(&env.msg) {
            let msg = format!("{} may not send {}", c.role.as_str(), env.kind());
            return vec![self.error_to(conn, ErrorCode::UnexpectedKind, msg, Some(seq), now)];
        }

        let fresh = match c.role {
            Role::Pad => {
                let sid = SessionId(env.sid.clone());
                if self.registry.session(&sid).is_none() {
                    let msg = format!("unknown session {sid}");
                    return vec![self.error_to(conn, ErrorCode::UnknownSession, msg, Some(seq), now)];
                }
                if self.pad_conn.get(&sid) != Some(&conn) {
                    let msg = "connection superseded by a newer one".to_string();
                    return vec![self.error_to(conn, ErrorCode::StaleEpoch, msg, Some(seq), now)];
                }
                self.registry.accept_phone_seq(&sid, seq).unwrap_or(false)
            }
            Role::Voice => {
                let sid = SessionId(env.sid.clone());
                if c.session.as_ref() != Some(&sid) || self.registry.session(&sid).is_none() {
                    let msg = format!("unknown session {sid}");
                    return vec![self.error_to(conn, ErrorCode::UnknownSession, msg, Some(seq), now)];
                }
                if self.voice_conn.get(&sid) != Some(&conn) {
                    let msg = "connection superseded by a newer one".to_string();
                    return vec![self.error_to(conn, ErrorCode::StaleEpoch, msg, Some(seq), now)];
                }
                seq > c.last_seq
            }
            _ => seq > c.last_seq,
        };
        if !fresh {
            let ack = Message::Ack(AckMsg { ack_seq: seq, applied: false, revision: self.state.revision });
            return vec![self.envelope_to(conn, ack, now)];
        }
        if let Some(c) = self.conns.get_mut(&conn) {
            c.last_seq = seq;
        }

        let mut next = self.state.clone();
        let mut events = Vec::new();
        let sid = SessionId(env.sid.clone());
        let result = match &env.msg {
            Message::Gesture(GestureMsg { gesture, dx, dy, .. }) => interaction::apply_gesture(
                &mut next,
                &self.model,
                &sid,
                *gesture,
                dx.unwrap_or(0.0),
                dy.unwrap_or(0.0),
                &mut events,
            )
            .map_err(|e| (ErrorCode::from(&e), e.to_string())),
            Message::Voice(v) => {
                let prefix = format!("q{}", self.state.revision + 1);
                interaction::apply_voice(
                    &mut next,
                    &self.model,
                    &self.provider,
                    &sid,
                    &v.transcript,
                    &prefix,
                    &mut events,
                )
                .map_err(|e| (ErrorCode::from(&e), e.to_string()))
            }
            Message::Tracks(t) => {
                self.ingest_tracks(&mut next, t, env.ts, &mut events);
                Ok(())
            }
            Message::Prompt(PromptMsg { prompt_id, prompt }) => {
                match prompt {
                    Some(p) => next.prompts.insert(prompt_id.clone(), p.clone()),
                    None => next.prompts.remove(prompt_id),
                };
                Ok(())
            }
            _ => Ok(()),
        };

        match result {
            Ok(()) => {
                let mut out = self.commit(next, events, now);
                let ack = Message::Ack(AckMsg { ack_seq: seq, applied: true, revision: self.state.revision });
                out.push(self.envelope_to(conn, ack, now));
                out
            }
            Err((code, message)) => vec![self.error_to(conn, code, message, Some(seq), now)],
        }
    }

    fn ingest_tracks(&mut self, next: &mut WallState, t: &TrackMsg, ts: u64, events: &mut Vec<WallEvent>) {
        let snap = TrackSnapshot {
            entries: t.tracks.iter().map(|e| (TrackId(e.id), e.x, e.y)).collect(),
            captured_at: ts,
        };
        let report = self.registry.ingest_snapshot(&snap);
        for upd in &report.updates {
            let Some(view) = next.sessions.get_mut(&upd.session_id) else {
                continue;
            };
            view.bound_track = upd.bound_track;
            if view.active != upd.active {
                view.active = upd.active;
                events.push(WallEvent::Activation { session_id: upd.session_id.clone(), active: upd.active });
            }
            interaction::apply_physical_move(next, &self.model, upd, events);
        }
        let room = *self.registry.room();
        next.rings = self
            .registry
            .tracks()
            .filter_map(|t| spatial::feedback_anchor(t.pos, &room).ok().map(|a| (t.track_id, a)))
            .collect();
    }
}
