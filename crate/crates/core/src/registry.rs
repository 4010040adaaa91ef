//! Pad sessions, tracked bodies, and the binding between them.

use std::collections::BTreeMap;
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spatial::{
    self, ActivationState, ColumnAssignment, ColumnTracker, FloorPoint, Region, RoomSpec,
    ScreenPixel, Wall,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("unknown side token {0:?}")]
    UnknownSideToken(String),
    #[error("side {0} already has the maximum number of sessions")]
    SideFull(Side),
    #[error("unknown or expired resume token")]
    UnknownToken,
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn wall(self) -> Wall {
        match self {
            Side::Left => Wall::Left,
            Side::Right => Wall::Right,
        }
    }

    pub fn region(self) -> Region {
        match self {
            Side::Left => Region::LeftSide,
            Side::Right => Region::RightSide,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    /// Accepts `left`, `side=left`, or a full pad URL such as `http://host/pad?side=left`.
    pub fn from_token(token: &str) -> Result<Side, RegistryError> {
        let unknown = || RegistryError::UnknownSideToken(token.to_string());
        let value = if token.contains('=') {
            let query = token.rsplit_once('?').map_or(token, |(_, q)| q);
            query
                .split('&')
                .filter_map(|kv| kv.split_once('='))
                .find(|(k, _)| *k == "side")
                .map(|(_, v)| v)
                .ok_or_else(unknown)?
        } else {
            token
        };
        match value {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl SessionId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SessionId {
    fn from(s: &str) -> Self {
        SessionId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct TrackId(pub u64);

// Also accepts the string form JSON uses for map keys, which buffered
// (internally tagged) decoding hands over as-is.
impl<'de> Deserialize<'de> for TrackId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = TrackId;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a track id")
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<TrackId, E> {
                Ok(TrackId(v))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<TrackId, E> {
                u64::try_from(v).map(TrackId).map_err(E::custom)
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<TrackId, E> {
                v.parse().map(TrackId).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistryConfig {
    pub max_sessions_per_side: usize,
    pub max_tracks: usize,
    pub grace_ms: u64,
    pub session_ttl_ms: u64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self { max_sessions_per_side: 1, max_tracks: 6, grace_ms: 3000, session_ttl_ms: 600_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: TrackId,
    pub pos: FloorPoint,
    pub updated_at: u64,
    pub claimed_by: Option<SessionId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: SessionId,
    pub side: Side,
    pub bound_track: Option<TrackId>,
    pub phone_seq: u64,
    pub activation: ActivationState,
    pub resume_token: String,
    /// Index of this session's personal strip among same-side sessions.
    pub front_slot: u32,
    pub disconnected_at: Option<u64>,
    pub columns: ColumnTracker,
    last_update: Option<SessionUpdate>,
}

/// Positions captured by the tracking node at one instant. Coordinates may be garbage;
/// ingestion filters them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSnapshot {
    pub entries: Vec<(TrackId, f64, f64)>,
    pub captured_at: u64,
}

/// Spatial status of a session after a tracking update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionUpdate {
    pub session_id: SessionId,
    pub bound_track: Option<TrackId>,
    pub active: bool,
    /// Dead-banded column assignment of the projection.
    pub assignment: Option<ColumnAssignment>,
    pub anchor: Option<ScreenPixel>,
    /// Arc length of the projection.
    pub arc_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub updates: Vec<SessionUpdate>,
    pub skipped: usize,
    pub bound: Vec<(SessionId, TrackId)>,
    pub unbound: Vec<SessionId>,
}

#[derive(Debug, Clone)]
pub struct Registry {
    room: RoomSpec,
    config: RegistryConfig,
    sessions: BTreeMap<SessionId, Session>,
    tracks: BTreeMap<TrackId, Track>,
    next_session: u64,
    rng: ChaCha8Rng,
}

impl Registry {
    pub fn new(room: RoomSpec, config: RegistryConfig, seed: u64) -> Self {
        Self {
            room,
            config,
            sessions: BTreeMap::new(),
            tracks: BTreeMap::new(),
            next_session: 1,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn room(&self) -> &RoomSpec {
        &self.room
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn session(&self, sid: &SessionId) -> Option<&Session> {
        self.sessions.get(sid)
    }

    pub fn tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.values()
    }

    fn expired(&self, s: &Session, now: u64) -> bool {
        s.disconnected_at.is_some_and(|d| now.saturating_sub(d) > self.config.session_ttl_ms)
    }

    /// Drops sessions whose pad has been gone for longer than the TTL.
    pub fn expire_sessions(&mut self, now: u64) -> Vec<SessionId> {
        let dead: Vec<SessionId> = self
            .sessions
            .values()
            .filter(|s| self.expired(s, now))
            .map(|s| s.session_id.clone())
            .collect();
        for sid in &dead {
            self.sessions.remove(sid);
            for t in self.tracks.values_mut() {
                if t.claimed_by.as_ref() == Some(sid) {
                    t.claimed_by = None;
                }
            }
        }
        dead
    }

    pub fn register_session(&mut self, side_token: &str, now: u64) -> Result<Session, RegistryError> {
        let side = Side::from_token(side_token)?;
        let same_side: Vec<u32> = self
            .sessions
            .values()
            .filter(|s| s.side == side && !self.expired(s, now))
            .map(|s| s.front_slot)
            .collect();
        if same_side.len() >= self.config.max_sessions_per_side {
            return Err(RegistryError::SideFull(side));
        }
        let front_slot = (0..).find(|k| !same_side.contains(k)).expect("free slot");
        let mut token = [0u8; 16];
        self.rng.fill_bytes(&mut token);
        let session = Session {
            session_id: SessionId(format!("s{}", self.next_session)),
            side,
            bound_track: None,
            phone_seq: 0,
            activation: ActivationState::default(),
            resume_token: token.iter().map(|b| format!("{b:02x}")).collect(),
            front_slot,
            disconnected_at: None,
            columns: ColumnTracker::default(),
            last_update: None,
        };
        self.next_session += 1;
        self.sessions.insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    pub fn resume_session(&mut self, token: &str, now: u64) -> Result<Session, RegistryError> {
        let sid = self
            .sessions
            .values()
            .find(|s| s.resume_token == token)
            .map(|s| s.session_id.clone())
            .ok_or(RegistryError::UnknownToken)?;
        if self.expired(&self.sessions[&sid], now) {
            self.expire_sessions(now);
            return Err(RegistryError::UnknownToken);
        }
        let s = self.sessions.get_mut(&sid).expect("present");
        s.disconnected_at = None;
        Ok(s.clone())
    }

    pub fn mark_disconnected(&mut self, sid: &SessionId, now: u64) {
        if let Some(s) = self.sessions.get_mut(sid) {
            s.disconnected_at.get_or_insert(now);
        }
    }

    /// Records `seq` for the session's pad; false if it was already applied.
    pub fn accept_phone_seq(&mut self, sid: &SessionId, seq: u64) -> Result<bool, RegistryError> {
        let s = self
            .sessions
            .get_mut(sid)
            .ok_or_else(|| RegistryError::UnknownSession(sid.clone()))?;
        if seq <= s.phone_seq {
            return Ok(false);
        }
        s.phone_seq = seq;
        Ok(true)
    }

    pub fn ingest_snapshot(&mut self, snap: &TrackSnapshot) -> IngestReport {
        let now = snap.captured_at;
        let mut report = IngestReport::default();
        for &(id, x, y) in &snap.entries {
            if !(x.is_finite() && y.is_finite()) {
                report.skipped += 1;
                continue;
            }
            let pos = self.room.clamp(x, y);
            let full = self.tracks.len() >= self.config.max_tracks;
            match self.tracks.get_mut(&id) {
                Some(t) if t.updated_at > now => report.skipped += 1,
                Some(t) => {
                    t.pos = pos;
                    t.updated_at = now;
                }
                None if full => report.skipped += 1,
                None => {
                    self.tracks
                        .insert(id, Track { track_id: id, pos, updated_at: now, claimed_by: None });
                }
            }
        }

        let lost: Vec<TrackId> = self
            .tracks
            .values()
            .filter(|t| now.saturating_sub(t.updated_at) > self.config.grace_ms)
            .map(|t| t.track_id)
            .collect();
        for id in lost {
            if let Some(t) = self.tracks.remove(&id) {
                if let Some(sid) = t.claimed_by {
                    if let Some(s) = self.sessions.get_mut(&sid) {
                        s.bound_track = None;
                        s.activation = ActivationState::default();
                        s.columns.reset();
                        report.unbound.push(sid);
                    }
                }
            }
        }

        report.bound = self.bind_sessions();

        let room = self.room;
        for s in self.sessions.values_mut() {
            let update = match s.bound_track.and_then(|id| self.tracks.get(&id)) {
                Some(track) => {
                    let (pp, clearance) =
                        spatial::project_to_perimeter(track.pos, &room).expect("clamped point");
                    s.activation = spatial::update_activation(s.activation, clearance, &room);
                    s.columns.update(&pp, &room);
                    SessionUpdate {
                        session_id: s.session_id.clone(),
                        bound_track: Some(track.track_id),
                        active: s.activation.active,
                        assignment: s.columns.current(),
                        anchor: Some(ScreenPixel {
                            u: spatial::arc_to_pixel(pp.s, &room).expect("valid arc"),
                            v: room.px_h - 1,
                        }),
                        arc_s: Some(pp.s),
                    }
                }
                None => SessionUpdate {
                    session_id: s.session_id.clone(),
                    bound_track: None,
                    active: false,
                    assignment: None,
                    anchor: None,
                    arc_s: None,
                },
            };
            let changed = match &s.last_update {
                None => update.bound_track.is_some(),
                Some(prev) => {
                    prev.bound_track != update.bound_track
                        || prev.active != update.active
                        || prev.assignment != update.assignment
                        || prev.anchor != update.anchor
                }
            };
            if changed {
                s.last_update = Some(update.clone());
                report.updates.push(update);
            }
        }
        report
    }

    /// Greedy nearest binding of unbound sessions to unclaimed tracks on their side wall.
    pub fn bind_sessions(&mut self) -> Vec<(SessionId, TrackId)> {
        let room = self.room;
        let mut candidates: Vec<(f64, TrackId, SessionId)> = Vec::new();
        for s in self.sessions.values().filter(|s| s.bound_track.is_none()) {
            for t in self.tracks.values().filter(|t| t.claimed_by.is_none()) {
                let Ok((pp, clearance)) = spatial::project_to_perimeter(t.pos, &room) else {
                    continue;
                };
                if pp.wall == s.side.wall() && clearance <= room.active_enter_m {
                    candidates.push((clearance, t.track_id, s.session_id.clone()));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut bound = Vec::new();
        for (_, tid, sid) in candidates {
            let track_free = self.tracks[&tid].claimed_by.is_none();
            let session_free = self.sessions[&sid].bound_track.is_none();
            if track_free && session_free {
                self.tracks.get_mut(&tid).expect("track").claimed_by = Some(sid.clone());
                self.sessions.get_mut(&sid).expect("session").bound_track = Some(tid);
                bound.push((sid, tid));
            }
        }
        bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> Registry {
        Registry::new(RoomSpec::default(), RegistryConfig::default(), 1)
    }

    fn snap(at: u64, entries: &[(u64, f64, f64)]) -> TrackSnapshot {
        TrackSnapshot {
            entries: entries.iter().map(|&(id, x, y)| (TrackId(id), x, y)).collect(),
            captured_at: at,
        }
    }

    #[test]
    fn side_tokens() {
        assert_eq!(Side::from_token("side=left").unwrap(), Side::Left);
        assert_eq!(Side::from_token("right").unwrap(), Side::Right);
        assert_eq!(Side::from_token("http://h:8080/pad?x=1&side=right").unwrap(), Side::Right);
        assert!(matches!(Side::from_token("side=top"), Err(RegistryError::UnknownSideToken(_))));
        assert!(Side::from_token("flavor=left").is_err());
    }

    #[test]
    fn register_examples() {
        let mut r = registry();
        let s = r.register_session("side=left", 0).unwrap();
        assert_eq!(s.side, Side::Left);
        assert_eq!(s.bound_track, None);
        assert_eq!(r.register_session("side=left", 0), Err(RegistryError::SideFull(Side::Left)));
        assert!(matches!(
            r.register_session("side=top", 0),
            Err(RegistryError::UnknownSideToken(_))
        ));
        let other = r.register_session("side=right", 0).unwrap();
        assert_ne!(other.session_id, s.session_id);
        assert_ne!(other.resume_token, s.resume_token);
        assert_eq!(other.resume_token.len(), 32);
    }

    #[test]
    fn activation_follows_tracking() {
        let mut r = registry();
        let s = r.register_session("side=left", 0).unwrap();
        // Bind near the wall first, then step back out and in again.
        r.ingest_snapshot(&snap(0, &[(1, 1.0, 5.0)]));
        let rep = r.ingest_snapshot(&snap(33, &[(1, 2.5, 5.0)]));
        assert!(!rep.updates.last().unwrap().active);
        let rep = r.ingest_snapshot(&snap(66, &[(1, 1.5, 5.0)]));
        let u = rep.updates.iter().find(|u| u.session_id == s.session_id).unwrap();
        assert!(u.active);
        assert_eq!(u.bound_track, Some(TrackId(1)));
    }

    #[test]
    fn lost_track_unbinds_after_grace() {
        let mut r = registry();
        let s = r.register_session("side=left", 0).unwrap();
        r.ingest_snapshot(&snap(0, &[(1, 1.0, 5.0)]));
        assert_eq!(r.session(&s.session_id).unwrap().bound_track, Some(TrackId(1)));
        // Three missed ticks are inside the grace window.
        let rep = r.ingest_snapshot(&snap(100, &[]));
        assert!(rep.unbound.is_empty());
        assert_eq!(r.session(&s.session_id).unwrap().bound_track, Some(TrackId(1)));
        let rep = r.ingest_snapshot(&snap(3001, &[]));
        assert_eq!(rep.unbound, vec![s.session_id.clone()]);
        let sess = r.session(&s.session_id).unwrap();
        assert_eq!(sess.bound_track, None);
        assert!(!sess.activation.active);
        assert!(!rep.updates.last().unwrap().active);
    }

    #[test]
    fn nan_entries_skipped() {
        let mut r = registry();
        r.register_session("side=left", 0).unwrap();
        let rep = r.ingest_snapshot(&snap(0, &[(1, f64::NAN, 5.0), (2, 1.0, 5.0)]));
        assert_eq!(rep.skipped, 1);
        assert_eq!(r.tracks().count(), 1);
        assert_eq!(rep.bound.len(), 1);
    }

    #[test]
    fn out_of_room_coordinates_clamped() {
        let mut r = registry();
        r.ingest_snapshot(&snap(0, &[(1, -0.3, 11.0)]));
        let t = r.tracks().next().unwrap();
        assert_eq!(t.pos, FloorPoint::new(0.0, 10.0));
    }

    #[test]
    fn track_cap_enforced() {
        let mut r = registry();
        let entries: Vec<(u64, f64, f64)> = (0..8).map(|i| (i, 5.0, 1.0 + i as f64)).collect();
        let rep = r.ingest_snapshot(&snap(0, &entries));
        assert_eq!(r.tracks().count(), 6);
        assert_eq!(rep.skipped, 2);
    }

    #[test]
    fn binding_examples() {
        let mut r = registry();
        r.register_session("side=left", 0).unwrap();
        r.ingest_snapshot(&snap(0, &[(1, 11.0, 5.0)]));
        assert!(r.sessions().all(|s| s.bound_track.is_none()), "right wall track");
        r.ingest_snapshot(&snap(10, &[(1, 11.0, 5.0), (2, 1.0, 5.0)]));
        let s = r.sessions().next().unwrap();
        assert_eq!(s.bound_track, Some(TrackId(2)));

        let mut r = registry();
        r.register_session("side=left", 0).unwrap();
        r.ingest_snapshot(&snap(0, &[(9, 1.0, 4.0), (3, 1.0, 6.0)]));
        assert_eq!(r.sessions().next().unwrap().bound_track, Some(TrackId(3)));
    }

    #[test]
    fn binding_is_stable() {
        let mut r = registry();
        r.register_session("side=left", 0).unwrap();
        let points = [(1, 1.0, 4.0), (2, 0.5, 6.0)];
        let first = r.ingest_snapshot(&snap(0, &points));
        assert_eq!(first.bound.len(), 1);
        let second = r.ingest_snapshot(&snap(33, &points));
        assert!(second.bound.is_empty());
        assert!(second.updates.is_empty());
    }

    #[test]
    fn resume_and_expiry() {
        let mut r = registry();
        let s = r.register_session("side=left", 0).unwrap();
        r.ingest_snapshot(&snap(0, &[(1, 1.0, 5.0)]));
        assert!(r.accept_phone_seq(&s.session_id, 17).unwrap());
        r.mark_disconnected(&s.session_id, 1000);
        let back = r.resume_session(&s.resume_token, 1000 + 60_000).unwrap();
        assert_eq!(back.session_id, s.session_id);
        assert_eq!(back.bound_track, Some(TrackId(1)));
        assert!(!r.accept_phone_seq(&s.session_id, 17).unwrap());
        assert!(r.accept_phone_seq(&s.session_id, 18).unwrap());

        r.mark_disconnected(&s.session_id, 2000);
        assert_eq!(r.resume_session(&s.resume_token, 2000 + 600_001), Err(RegistryError::UnknownToken));
        assert!(r.session(&s.session_id).is_none());
        assert!(r.tracks().all(|t| t.claimed_by.is_none()));
        assert_eq!(r.resume_session("nope", 0), Err(RegistryError::UnknownToken));
    }

    #[test]
    fn expired_sessions_free_their_side() {
        let mut r = registry();
        let s = r.register_session("side=left", 0).unwrap();
        r.mark_disconnected(&s.session_id, 0);
        assert!(r.register_session("side=left", 5000).is_err());
        assert!(r.register_session("side=left", 600_001).is_ok());
    }
}
