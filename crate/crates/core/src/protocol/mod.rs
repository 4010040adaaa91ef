//! Wire protocol shared by pads, voice feeds, the tracker, displays and the hub.
//!
//! Every frame is one UTF-8 JSON object:
//!
//! ```text
//! {"v":1,"kind":"gesture","seq":5,"sid":"s1","ts":1234,"body":{"gesture":"tap"}}
//! ```
//!
//! `seq` increases per sender, `ts` is the sender's clock in integer milliseconds, and
//! `body` depends on `kind`.

mod heartbeat;
mod hub;

pub use heartbeat::{Heartbeat, HeartbeatVerdict};
pub use hub::{ConnId, ConnectOutcome, ConnectRequest, Hub, HubConfig, HubEvent, Outbound, Role, HUB_SID};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::interaction::{Change, GestureKind, InteractionError, Prompt, WallState};
use crate::registry::{RegistryError, SessionId, Side};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    DecodeError,
    OutOfRange,
    UnknownKind,
    UnsupportedVersion,
    UnexpectedKind,
    UnknownSession,
    StaleEpoch,
    InactiveSession,
    NoSurface,
    NoColumn,
    NoSelection,
    NotInPersonalColumn,
    UnparseableUtterance,
    CorpusUnavailable,
    SideFull,
    UnknownSideToken,
    UnknownToken,
    BadRequest,
}

impl From<&InteractionError> for ErrorCode {
    fn from(e: &InteractionError) -> Self {
        match e {
            InteractionError::UnknownSession(_) => ErrorCode::UnknownSession,
            InteractionError::InactiveSession => ErrorCode::InactiveSession,
            InteractionError::NoSurface => ErrorCode::NoSurface,
            InteractionError::NoColumn => ErrorCode::NoColumn,
            InteractionError::NoSelection => ErrorCode::NoSelection,
            InteractionError::NotInPersonalColumn(_) => ErrorCode::NotInPersonalColumn,
            InteractionError::UnparseableUtterance(_) => ErrorCode::UnparseableUtterance,
            InteractionError::Content(_) => ErrorCode::CorpusUnavailable,
        }
    }
}

impl From<&RegistryError> for ErrorCode {
    fn from(e: &RegistryError) -> Self {
        match e {
            RegistryError::UnknownSideToken(_) => ErrorCode::UnknownSideToken,
            RegistryError::SideFull(_) => ErrorCode::SideFull,
            RegistryError::UnknownToken => ErrorCode::UnknownToken,
            RegistryError::UnknownSession(_) => ErrorCode::UnknownSession,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureMsg {
    pub gesture: GestureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl GestureMsg {
    pub fn new(gesture: GestureKind) -> Self {
        Self { gesture, dx: None, dy: None, scale: None }
    }

    pub fn movement(dx: f64, dy: f64) -> Self {
        Self { gesture: GestureKind::Move, dx: Some(dx), dy: Some(dy), scale: None }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        let is_move = self.gesture == GestureKind::Move;
        for (field, value) in [("dx", self.dx), ("dy", self.dy)] {
            match value {
                Some(_) if !is_move => {
                    return Err(DecodeError::invalid("gesture", format!("{field} only allowed on move")))
                }
                Some(d) if !(d.is_finite() && (-1.0..=1.0).contains(&d)) => {
                    return Err(DecodeError::Range { field, value: d })
                }
                _ => {}
            }
        }
        match self.scale {
            Some(_) if !matches!(self.gesture, GestureKind::Pinch | GestureKind::Zoom) => {
                Err(DecodeError::invalid("gesture", "scale only allowed on pinch/zoom"))
            }
            Some(s) if !(s.is_finite() && s > 0.0) => Err(DecodeError::Range { field: "scale", value: s }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoiceMsg {
    pub transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

fn nan_for_null<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One tracked body. Non-finite coordinates travel as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub id: u64,
    #[serde(deserialize_with = "nan_for_null")]
    pub x: f64,
    #[serde(deserialize_with = "nan_for_null")]
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMsg {
    pub tracks: Vec<TrackEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterOk {
    pub session_id: SessionId,
    pub side: Side,
    pub resume_token: String,
    pub revision: u64,
    #[serde(default)]
    pub resumed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMsg {
    pub state: WallState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDiff {
    pub revision: u64,
    pub changes: Vec<Change>,
}

/// Posts (or with `prompt: null`, clears) an on-screen prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptMsg {
    pub prompt_id: String,
    pub prompt: Option<Prompt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckMsg {
    pub ack_seq: u64,
    pub applied: bool,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    RegisterOk(RegisterOk),
    Gesture(GestureMsg),
    Voice(VoiceMsg),
    Tracks(TrackMsg),
    StateSnapshot(SnapshotMsg),
    StateDiff(StateDiff),
    Prompt(PromptMsg),
    Ack(AckMsg),
    Error(ErrorMsg),
    Ping,
    Pong,
}

impl Message {
    pub const KINDS: [&'static str; 11] = [
        "register_ok",
        "gesture",
        "voice",
        "tracks",
        "state_snapshot",
        "state_diff",
        "prompt",
        "ack",
        "error",
        "ping",
        "pong",
    ];

    pub fn kind(&self) -> &'static str {
        match self {
            Message::RegisterOk(_) => "register_ok",
            Message::Gesture(_) => "gesture",
            Message::Voice(_) => "voice",
            Message::Tracks(_) => "tracks",
            Message::StateSnapshot(_) => "state_snapshot",
            Message::StateDiff(_) => "state_diff",
            Message::Prompt(_) => "prompt",
            Message::Ack(_) => "ack",
            Message::Error(_) => "error",
            Message::Ping => "ping",
            Message::Pong => "pong",
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>, ref_seq: Option<u64>) -> Self {
        Message::Error(ErrorMsg { code, message: message.into(), ref_seq })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub v: u32,
    pub seq: u64,
    pub sid: String,
    pub ts: u64,
    pub msg: Message,
}

impl Envelope {
    pub fn new(seq: u64, sid: impl Into<String>, ts: u64, msg: Message) -> Self {
        Self { v: PROTOCOL_VERSION, seq, sid: sid.into(), ts, msg }
    }

    pub fn kind(&self) -> &'static str {
        self.msg.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown message kind {0:?}")]
    UnknownKind(String),
    #[error("invalid {kind} body: {message}")]
    InvalidBody { kind: String, message: String },
    #[error("{field} = {value} out of range")]
    Range { field: &'static str, value: f64 },
}

impl DecodeError {
    fn invalid(kind: &str, message: impl Into<String>) -> Self {
        DecodeError::InvalidBody { kind: kind.to_string(), message: message.into() }
    }

    pub fn code(&self) -> ErrorCode {
        match self {
            DecodeError::Syntax { .. } | DecodeError::InvalidBody { .. } => ErrorCode::DecodeError,
            DecodeError::UnsupportedVersion(_) => ErrorCode::UnsupportedVersion,
            DecodeError::UnknownKind(_) => ErrorCode::UnknownKind,
            DecodeError::Range { .. } => ErrorCode::OutOfRange,
        }
    }
}

struct Body<'a>(&'a Message);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Empty {}

impl Serialize for Body<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Message::RegisterOk(b) => b.serialize(s),
            Message::Gesture(b) => b.serialize(s),
            Message::Voice(b) => b.serialize(s),
            Message::Tracks(b) => b.serialize(s),
            Message::StateSnapshot(b) => b.serialize(s),
            Message::StateDiff(b) => b.serialize(s),
            Message::Prompt(b) => b.serialize(s),
            Message::Ack(b) => b.serialize(s),
            Message::Error(b) => b.serialize(s),
            Message::Ping | Message::Pong => Empty {}.serialize(s),
        }
    }
}

#[derive(Serialize)]
struct WireOut<'a> {
    v: u32,
    kind: &'static str,
    seq: u64,
    sid: &'a str,
    ts: u64,
    body: Body<'a>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireIn {
    v: u32,
    kind: String,
    seq: u64,
    sid: String,
    ts: u64,
    #[serde(default)]
    body: serde_json::Value,
}

pub fn encode(env: &Envelope) -> String {
    let wire = WireOut {
        v: env.v,
        kind: env.kind(),
        seq: env.seq,
        sid: &env.sid,
        ts: env.ts,
        body: Body(&env.msg),
    };
    serde_json::to_string(&wire).expect("envelopes always serialize")
}

fn body<T: for<'de> Deserialize<'de>>(kind: &str, value: serde_json::Value) -> Result<T, DecodeError> {
    let value = if value.is_null() { serde_json::Value::Object(Default::default()) } else { value };
    serde_json::from_value(value).map_err(|e| DecodeError::invalid(kind, e.to_string()))
}

pub fn decode(bytes: &[u8]) -> Result<Envelope, DecodeError> {
    let wire: WireIn = serde_json::from_slice(bytes).map_err(|e| DecodeError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if wire.v != PROTOCOL_VERSION {
        return Err(DecodeError::UnsupportedVersion(wire.v));
    }
    let kind = wire.kind.as_str();
    let b = wire.body;
    let msg = match kind {
        "register_ok" => Message::RegisterOk(body(kind, b)?),
        "gesture" => {
            let g: GestureMsg = body(kind, b)?;
            g.validate()?;
            Message::Gesture(g)
        }
        "voice" => {
            let v: VoiceMsg = body(kind, b)?;
            if let Some(c) = v.confidence {
                if !(0.0..=1.0).contains(&c) {
                    return Err(DecodeError::Range { field: "confidence", value: c });
                }
            }
            Message::Voice(v)
        }
        "tracks" => Message::Tracks(body(kind, b)?),
        "state_snapshot" => Message::StateSnapshot(body(kind, b)?),
        "state_diff" => Message::StateDiff(body(kind, b)?),
        "prompt" => {
            let p: PromptMsg = body(kind, b)?;
            if p.prompt.as_ref().is_some_and(|inner| inner.prompt_id != p.prompt_id) {
                return Err(DecodeError::invalid(kind, "prompt_id mismatch"));
            }
            Message::Prompt(p)
        }
        "ack" => Message::Ack(body(kind, b)?),
        "error" => Message::Error(body(kind, b)?),
        "ping" => {
            body::<Empty>(kind, b)?;
            Message::Ping
        }
        "pong" => {
            body::<Empty>(kind, b)?;
            Message::Pong
        }
        other => return Err(DecodeError::UnknownKind(other.to_string())),
    };
    Ok(Envelope { v: wire.v, seq: wire.seq, sid: wire.sid, ts: wire.ts, msg })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(msg: Message) -> Envelope {
        Envelope::new(3, "s1", 1000, msg)
    }

    #[test]
    fn canonical_field_order() {
        let e = env(Message::Gesture(GestureMsg::new(GestureKind::Tap)));
        assert_eq!(
            encode(&e),
            r#"{"v":1,"kind":"gesture","seq":3,"sid":"s1","ts":1000,"body":{"gesture":"tap"}}"#
        );
        let e = env(Message::Ping);
        assert_eq!(encode(&e), r#"{"v":1,"kind":"ping","seq":3,"sid":"s1","ts":1000,"body":{}}"#);
    }

    #[test]
    fn unknown_kind_rejected() {
        let raw = br#"{"v":1,"kind":"nope","seq":1,"sid":"x","ts":0,"body":{}}"#;
        let err = decode(raw).unwrap_err();
        assert_eq!(err, DecodeError::UnknownKind("nope".into()));
        assert_eq!(err.code(), ErrorCode::UnknownKind);
    }

    #[test]
    fn move_out_of_range() {
        let raw = br#"{"v":1,"kind":"gesture","seq":1,"sid":"s1","ts":0,"body":{"gesture":"move","dx":2.0,"dy":0.0}}"#;
        let err = decode(raw).unwrap_err();
        assert!(matches!(err, DecodeError::Range { field: "dx", .. }));
        assert_eq!(err.code(), ErrorCode::OutOfRange);
    }

    #[test]
    fn gesture_field_rules() {
        let bad = [
            r#"{"gesture":"tap","dx":0.1}"#,
            r#"{"gesture":"move","scale":1.2}"#,
            r#"{"gesture":"zoom","scale":-1}"#,
            r#"{"gesture":"wave"}"#,
        ];
        for b in bad {
            let raw = format!(r#"{{"v":1,"kind":"gesture","seq":1,"sid":"s1","ts":0,"body":{b}}}"#);
            assert!(decode(raw.as_bytes()).is_err(), "{b}");
        }
        let ok = br#"{"v":1,"kind":"gesture","seq":1,"sid":"s1","ts":0,"body":{"gesture":"zoom","scale":1.4}}"#;
        assert!(decode(ok).is_ok());
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = decode(b"{\"v\":1,\n\"kind\":}").unwrap_err();
        match err {
            DecodeError::Syntax { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_and_unknown_fields() {
        let raw = br#"{"v":2,"kind":"ping","seq":1,"sid":"x","ts":0,"body":{}}"#;
        assert_eq!(decode(raw).unwrap_err(), DecodeError::UnsupportedVersion(2));
        let raw = br#"{"v":1,"kind":"ping","seq":1,"sid":"x","ts":0,"body":{},"extra":1}"#;
        assert!(matches!(decode(raw).unwrap_err(), DecodeError::Syntax { .. }));
    }

    #[test]
    fn null_track_coordinates_become_nan() {
        let raw = br#"{"v":1,"kind":"tracks","seq":1,"sid":"tracker","ts":0,"body":{"tracks":[{"id":1,"x":null,"y":2.0}]}}"#;
        let e = decode(raw).unwrap();
        let Message::Tracks(t) = e.msg else { panic!() };
        assert!(t.tracks[0].x.is_nan());
        assert!(encode(&Envelope::new(1, "tracker", 0, Message::Tracks(t))).contains(r#""x":null"#));
    }

    #[test]
    fn missing_body_for_ping() {
        let raw = br#"{"v":1,"kind":"pong","seq":4,"sid":"s1","ts":9}"#;
        assert_eq!(decode(raw).unwrap().msg, Message::Pong);
    }
}
