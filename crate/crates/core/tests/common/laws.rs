//! Protocol laws shared by the protocol tests and the acceptance gate.

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use wallspace_core::content::ContentProvider;
use wallspace_core::interaction::{initial_state, ColumnRef, GestureKind, Prompt, PromptTone, WallModel};
use wallspace_core::protocol::{
    decode, encode, AckMsg, ConnectRequest, Envelope, ErrorCode, ErrorMsg, GestureMsg, Hub, HubConfig, Message,
    Outbound, PromptMsg, RegisterOk, Role, SnapshotMsg, StateDiff, TrackEntry, TrackMsg, VoiceMsg,
};
use wallspace_core::registry::{SessionId, Side};
use wallspace_core::sim::column_stand;
use wallspace_core::spatial::RoomSpec;
use wallspace_core::tasks::TaskKind;

const CODES: [&str; 18] = [
    "decode_error",
    "out_of_range",
    "unknown_kind",
    "unsupported_version",
    "unexpected_kind",
    "unknown_session",
    "stale_epoch",
    "inactive_session",
    "no_surface",
    "no_column",
    "no_selection",
    "not_in_personal_column",
    "unparseable_utterance",
    "corpus_unavailable",
    "side_full",
    "unknown_side_token",
    "unknown_token",
    "bad_request",
];

fn small_model() -> WallModel {
    HubConfig { room: RoomSpec { columns_per_side: 2, ..RoomSpec::default() }, ..HubConfig::default() }.model()
}

fn side() -> impl Strategy<Value = Side> {
    prop_oneof![Just(Side::Left), Just(Side::Right)]
}

fn text() -> impl Strategy<Value = String> {
    "[a-z \"\\\\é{}]{0,16}"
}

fn prompt_msg() -> impl Strategy<Value = PromptMsg> {
    let topic = prop_oneof![Just("dogs".to_string()), text()];
    (text(), side(), 0u32..2, any::<bool>(), topic).prop_map(|(t, side, index, clear, topic)| {
        let id = "task:s1".to_string();
        let prompt = (!clear).then(|| Prompt {
            prompt_id: id.clone(),
            session_id: Some(SessionId::from("s1")),
            text: t,
            tone: PromptTone::Task,
            target: Some(ColumnRef::new(side, index)),
            task: Some(TaskKind::VoicePopulate(topic)),
            task_id: Some("s1-t1".into()),
        });
        PromptMsg { prompt_id: id, prompt }
    })
}

pub fn message() -> impl Strategy<Value = Message> {
    let unit = -1.0f64..=1.0;
    let gesture = (0usize..GestureKind::ALL.len(), unit.clone(), unit, 0.01f64..10.0).prop_map(|(i, dx, dy, s)| {
        let g = GestureKind::ALL[i];
        match g {
            GestureKind::Move => GestureMsg::movement(dx, dy),
            GestureKind::Pinch | GestureKind::Zoom => GestureMsg { scale: Some(s), ..GestureMsg::new(g) },
            _ => GestureMsg::new(g),
        }
    });
    let tracks = prop::collection::vec((0u64..50, 0.0f64..12.0, 0.0f64..10.0), 0..6)
        .prop_map(|v| TrackMsg { tracks: v.into_iter().map(|(id, x, y)| TrackEntry { id, x, y }).collect() });
    let snapshot = any::<u64>().prop_map(|seed| {
        let model = small_model();
        let provider = ContentProvider::new(super::demo_manifest(), seed);
        SnapshotMsg { state: initial_state(&model, &provider, seed).unwrap() }
    });
    let diff = (any::<u64>(), any::<u64>()).prop_map(|(a, b)| {
        let model = small_model();
        let provider = ContentProvider::new(super::demo_manifest(), a);
        let s0 = initial_state(&model, &provider, a).unwrap();
        let s1 = initial_state(&model, &provider, b).unwrap();
        StateDiff { revision: 1, changes: s0.diff(&s1) }
    });
    prop_oneof![
        (text(), side(), text(), any::<u64>(), any::<bool>()).prop_map(|(sid, side, token, revision, resumed)| {
            Message::RegisterOk(RegisterOk { session_id: SessionId(sid), side, resume_token: token, revision, resumed })
        }),
        gesture.prop_map(Message::Gesture),
        (text(), prop::option::of(0.0f64..=1.0))
            .prop_map(|(transcript, confidence)| Message::Voice(VoiceMsg { transcript, confidence })),
        tracks.prop_map(Message::Tracks),
        snapshot.prop_map(Message::StateSnapshot),
        diff.prop_map(Message::StateDiff),
        prompt_msg().prop_map(Message::Prompt),
        (any::<u64>(), any::<bool>(), any::<u64>())
            .prop_map(|(ack_seq, applied, revision)| Message::Ack(AckMsg { ack_seq, applied, revision })),
        (0usize..CODES.len(), text(), prop::option::of(any::<u64>())).prop_map(|(i, message, ref_seq)| {
            let code: ErrorCode = serde_json::from_value(serde_json::json!(CODES[i])).unwrap();
            Message::Error(ErrorMsg { code, message, ref_seq })
        }),
        Just(Message::Ping),
        Just(Message::Pong),
    ]
}

pub struct Rig {
    pub hub: Hub,
    pub sid: SessionId,
    pub token: String,
}

pub fn rig() -> Rig {
    let cfg = HubConfig { room: RoomSpec { columns_per_side: 2, ..RoomSpec::default() }, ..HubConfig::default() };
    let mut hub = Hub::with_random_fill(cfg, ContentProvider::new(super::demo_manifest(), 5)).unwrap();
    hub.connect(1, &ConnectRequest::new(Role::Tracker), 0);
    let out = hub.connect(10, &ConnectRequest::pad("left"), 0);
    let Some(Message::RegisterOk(ok)) = out.outbound.iter().map(|o| o.envelope.msg.clone()).find(|m| m.kind() == "register_ok") else {
        panic!("no register_ok");
    };
    let p = column_stand(hub.model(), ColumnRef::new(Side::Left, 0));
    let frame = Envelope::new(1, "tracker", 10, Message::Tracks(TrackMsg { tracks: vec![TrackEntry { id: 1, x: p.x, y: p.y }] }));
    hub.dispatch(1, &frame, 10);
    assert!(hub.state().sessions[&ok.session_id].active);
    Rig { hub, sid: ok.session_id, token: ok.resume_token }
}

pub fn only(out: &[Outbound], conn: u64) -> Message {
    let mine: Vec<_> = out.iter().filter(|o| o.to == conn).collect();
    assert_eq!(mine.len(), 1, "{out:?}");
    mine[0].envelope.msg.clone()
}

pub fn round_trip(env: &Envelope) -> Result<(), TestCaseError> {
    let wire = encode(env);
    let back = decode(wire.as_bytes()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(&back, env);
    prop_assert_eq!(encode(&back), wire);
    Ok(())
}

/// Randomized envelopes of every kind survive encode and decode unchanged.
pub fn codec_round_trips_every_kind() -> bool {
    let mut runner = TestRunner::new_with_rng(Config::with_cases(400), proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha));
    let envelopes = (message(), 1u64.., "[a-z0-9]{0,8}", any::<u64>())
        .prop_map(|(msg, seq, sid, ts)| Envelope::new(seq, sid, ts, msg));
    let mut kinds = std::collections::BTreeSet::new();
    for _ in 0..500 {
        kinds.insert(message().new_tree(&mut runner).expect("tree").current().kind());
    }
    kinds.len() == Message::KINDS.len() && runner.run(&envelopes, |env| round_trip(&env)).is_ok()
}

/// Re-delivering a frame acks it as not applied and leaves the state alone.
pub fn duplicate_applies_once() -> bool {
    let mut r = rig();
    let swipe = encode(&Envelope::new(1, r.sid.as_str(), 20, Message::Gesture(GestureMsg::new(GestureKind::SwipeUp))));
    let first = r.hub.dispatch_bytes(10, swipe.as_bytes(), 20);
    let (rev, state) = (r.hub.revision(), r.hub.state().clone());
    let applied = matches!(only(&first, 10), Message::Ack(AckMsg { applied: true, .. }));
    let repeats = (0..3).all(|i| {
        let again = r.hub.dispatch_bytes(10, swipe.as_bytes(), 30 + i);
        only(&again, 10) == Message::Ack(AckMsg { ack_seq: 1, applied: false, revision: rev })
    });
    applied && repeats && r.hub.state() == &state
}
