mod common;

use wallspace_core::protocol::Message;
use wallspace_core::sim::{run_scenario, LogRecord, RunStatus};
use wallspace_core::tasks::recipe::GameMode;

#[test]
fn voice_required_is_unwinnable_without_voice() {
    let r = common::exhaustive_search(GameMode::VoiceRequired, 200_000);
    assert!(r.exhausted, "{r:?}");
    assert!(!r.answer_reachable && !r.completed && r.ids_conserved, "{r:?}");
}

#[test]
fn one_utterance_brings_the_answer() {
    assert!(common::voice_witness());
}

#[test]
fn miniature_pre_populated_completes_without_voice() {
    let out = run_scenario(&common::mini_scenario(GameMode::PrePopulated, false)).unwrap();
    assert_eq!(out.status, RunStatus::Completed);
    let spoke = out.log.iter().any(|l| {
        matches!(serde_json::from_str(l), Ok(LogRecord::In { raw, .. })
            if matches!(wallspace_core::protocol::decode(raw.as_bytes()).map(|e| e.msg), Ok(Message::Voice(_))))
    });
    assert!(!spoke);
}

#[test]
fn miniature_voice_required_completes_with_voice() {
    let out = run_scenario(&common::mini_scenario(GameMode::VoiceRequired, true)).unwrap();
    assert_eq!(out.status, RunStatus::Completed);
}
