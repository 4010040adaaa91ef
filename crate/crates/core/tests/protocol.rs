mod common;

use proptest::prelude::*;
use proptest::strategy::ValueTree;

use common::laws::{message, only, rig};
use wallspace_core::interaction::GestureKind;
use wallspace_core::protocol::{encode, AckMsg, ConnectRequest, Envelope, ErrorCode, GestureMsg, Message};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn codec_round_trips(msg in message(), seq in 1u64.., sid in "[a-z \"\\\\é{}]{0,16}", ts in any::<u64>()) {
        common::laws::round_trip(&Envelope::new(seq, sid, ts, msg))?;
    }
}

#[test]
fn every_kind_is_covered() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = message();
    let mut kinds = std::collections::BTreeSet::new();
    for _ in 0..500 {
        kinds.insert(strategy.new_tree(&mut runner).unwrap().current().kind());
    }
    assert_eq!(kinds.len(), Message::KINDS.len());
}

#[test]
fn duplicate_sequence_numbers_apply_once() {
    let mut r = rig();
    let tap = encode(&Envelope::new(1, r.sid.as_str(), 20, Message::Gesture(GestureMsg::new(GestureKind::SwipeUp))));
    let first = r.hub.dispatch_bytes(10, tap.as_bytes(), 20);
    let rev = r.hub.revision();
    let state = r.hub.state().clone();
    assert!(matches!(only(&first, 10), Message::Ack(AckMsg { applied: true, .. })));
    for _ in 0..3 {
        let again = r.hub.dispatch_bytes(10, tap.as_bytes(), 30);
        assert_eq!(only(&again, 10), Message::Ack(AckMsg { ack_seq: 1, applied: false, revision: rev }));
    }
    assert_eq!(r.hub.state(), &state);
    // An older sequence number is a duplicate as well.
    let stale = encode(&Envelope::new(1, r.sid.as_str(), 40, Message::Gesture(GestureMsg::new(GestureKind::SwipeDown))));
    assert!(matches!(only(&r.hub.dispatch_bytes(10, stale.as_bytes(), 40), 10), Message::Ack(AckMsg { applied: false, .. })));
}

fn error_code(m: Message) -> ErrorCode {
    match m {
        Message::Error(e) => e.code,
        other => panic!("expected an error, got {other:?}"),
    }
}

#[test]
fn unknown_session_is_rejected() {
    let mut r = rig();
    let env = Envelope::new(1, "s99", 20, Message::Gesture(GestureMsg::new(GestureKind::Tap)));
    let out = r.hub.dispatch(10, &env, 20);
    assert_eq!(error_code(only(&out, 10)), ErrorCode::UnknownSession);
}

#[test]
fn resumed_pad_supersedes_the_old_connection() {
    let mut r = rig();
    let out = r.hub.connect(11, &ConnectRequest::resume(&r.token), 20);
    assert!(out.accepted);
    let old = Envelope::new(1, r.sid.as_str(), 30, Message::Gesture(GestureMsg::new(GestureKind::Tap)));
    assert_eq!(error_code(only(&r.hub.dispatch(10, &old, 30), 10)), ErrorCode::StaleEpoch);
    assert!(matches!(only(&r.hub.dispatch(11, &old, 30), 11), Message::Ack(AckMsg { applied: true, .. })));
}

#[test]
fn roles_are_enforced() {
    let mut r = rig();
    let env = Envelope::new(2, "tracker", 20, Message::Gesture(GestureMsg::new(GestureKind::Tap)));
    assert_eq!(error_code(only(&r.hub.dispatch(1, &env, 20), 1)), ErrorCode::UnexpectedKind);
    assert_eq!(error_code(only(&r.hub.dispatch_bytes(1, b"{not json", 20), 1)), ErrorCode::DecodeError);
}

#[test]
fn snapshot_plus_diffs_equals_snapshot() {
    for seed in 0..1000 {
        if let Err(e) = common::random_protocol_run(seed, 40) {
            panic!("seed {seed}: {e}");
        }
    }
}
