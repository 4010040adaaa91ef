#![allow(dead_code)]

pub mod laws;

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use wallspace_core::content::{ContentProvider, CorpusEntry, CorpusManifest};
use wallspace_core::interaction::{GestureKind, InteractionConfig, Surface, WallModel, WallState};
use wallspace_core::protocol::{
    decode, encode, ConnId, ConnectRequest, Envelope, GestureMsg, Hub, HubConfig, Message, Outbound,
    PromptMsg, Role, TrackEntry, TrackMsg, VoiceMsg,
};
use wallspace_core::interaction::{Prompt, PromptTone};
use wallspace_core::registry::{RegistryConfig, SessionId, Side};
use wallspace_core::sim::{column_stand, personal_stand, shared_stand, AgentScript, CorpusSource, Experiment, ScenarioConfig};
use wallspace_core::spatial::{FloorPoint, RoomSpec};
use wallspace_core::tasks::recipe::{GameConfig, GameMode, RecipeCard, RecipeGame};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn scenario(name: &str) -> ScenarioConfig {
    let dir = repo_root().join("scenarios");
    let text = std::fs::read_to_string(dir.join(name)).expect("scenario file");
    ScenarioConfig::from_json(&text).expect("scenario parses").resolve_paths(&dir)
}

pub fn demo_manifest() -> CorpusManifest {
    CorpusManifest::load(&repo_root().join("corpus")).expect("demo corpus")
}

/// Sends hub output to the display mirrors through the codec.
fn deliver(out: Vec<Outbound>, mirrors: &mut BTreeMap<ConnId, WallState>, last_rev: &mut BTreeMap<ConnId, u64>) -> Result<(), String> {
    for o in out {
        let Some(m) = mirrors.get_mut(&o.to) else { continue };
        let env = decode(encode(&o.envelope).as_bytes()).map_err(|e| e.to_string())?;
        match env.msg {
            Message::StateSnapshot(s) => {
                last_rev.insert(o.to, s.state.revision);
                *m = s.state;
            }
            Message::StateDiff(d) => {
                let prev = last_rev.get(&o.to).copied().unwrap_or(0);
                if d.revision != prev + 1 {
                    return Err(format!("display {} got revision {} after {}", o.to, d.revision, prev));
                }
                last_rev.insert(o.to, d.revision);
                m.apply(d.revision, &d.changes);
            }
            _ => {}
        }
    }
    Ok(())
}

/// One randomized session against the hub. A display joins at a random step and
/// must end up, from its snapshot plus the diffs after it, equal to the hub.
pub fn random_protocol_run(seed: u64, steps: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room = RoomSpec { columns_per_side: 3, ..RoomSpec::default() };
    let interaction = InteractionConfig { cards_per_column: 6, ..InteractionConfig::default() };
    let registry = RegistryConfig { max_sessions_per_side: 2, ..RegistryConfig::default() };
    let cfg = HubConfig { room, interaction, registry, seed };
    let model = cfg.model();
    let mut hub = Hub::with_random_fill(cfg, ContentProvider::new(demo_manifest(), seed)).map_err(|e| e.to_string())?;

    let mut mirrors = BTreeMap::new();
    let mut last_rev = BTreeMap::new();
    let (display_a, display_b, tracker, engine) = (1, 2, 3, 4);
    mirrors.insert(display_a, WallState::default());
    deliver(hub.connect(display_a, &ConnectRequest::new(Role::Display), 0).outbound, &mut mirrors, &mut last_rev)?;
    hub.connect(tracker, &ConnectRequest::new(Role::Tracker), 0);
    hub.connect(engine, &ConnectRequest::new(Role::Engine), 0);

    struct Pad {
        conn: ConnId,
        sid: SessionId,
        token: String,
        seq: u64,
        last: Option<String>,
    }
    let mut pads: Vec<Pad> = Vec::new();
    let mut next_conn = 10;
    for side in ["left", "left", "right"] {
        let out = hub.connect(next_conn, &ConnectRequest::pad(side), 0);
        let mut pad = None;
        for o in &out.outbound {
            if let Message::RegisterOk(ok) = &o.envelope.msg {
                pad = Some(Pad { conn: next_conn, sid: ok.session_id.clone(), token: ok.resume_token.clone(), seq: 0, last: None });
            }
        }
        deliver(out.outbound, &mut mirrors, &mut last_rev)?;
        pads.push(pad.ok_or("registration failed")?);
        next_conn += 1;
    }

    let stands = |rng: &mut ChaCha8Rng, side: Side| -> FloorPoint {
        match rng.random_range(0..5) {
            0 | 1 => column_stand(&model, wallspace_core::interaction::ColumnRef::new(side, rng.random_range(0..3))),
            2 => personal_stand(&model, side, rng.random_range(0..2)),
            3 => shared_stand(&model, rng.random_range(4000.0..10000.0)),
            _ => FloorPoint::new(rng.random_range(0.1..11.9), rng.random_range(0.1..9.9)),
        }
    };
    let sides = [Side::Left, Side::Left, Side::Right];
    let mut bodies: Vec<FloorPoint> = sides.iter().map(|&s| stands(&mut rng, s)).collect();
    let (mut tracker_seq, mut engine_seq) = (0, 0);
    let join_at = rng.random_range(0..steps);
    let mut now = 0;

    for step in 0..steps {
        now += rng.random_range(10..400);
        if step == join_at {
            mirrors.insert(display_b, WallState::default());
            deliver(hub.connect(display_b, &ConnectRequest::new(Role::Display), now).outbound, &mut mirrors, &mut last_rev)?;
        }
        let out = match rng.random_range(0..100) {
            0..30 => {
                for (i, b) in bodies.iter_mut().enumerate() {
                    if rng.random_bool(0.5) {
                        *b = stands(&mut rng, sides[i]);
                    }
                }
                tracker_seq += 1;
                let tracks = bodies.iter().enumerate().map(|(i, b)| TrackEntry { id: i as u64 + 1, x: b.x, y: b.y }).collect();
                let env = Envelope::new(tracker_seq, "tracker", now, Message::Tracks(TrackMsg { tracks }));
                hub.dispatch_bytes(tracker, encode(&env).as_bytes(), now)
            }
            30..75 => {
                let p = &mut pads[rng.random_range(0..3)];
                let g = *GestureKind::ALL.choose(&mut rng).unwrap();
                let msg = if g == GestureKind::Move {
                    GestureMsg::movement(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
                } else {
                    GestureMsg::new(g)
                };
                p.seq += 1;
                let raw = encode(&Envelope::new(p.seq, p.sid.as_str(), now, Message::Gesture(msg)));
                p.last = Some(raw.clone());
                hub.dispatch_bytes(p.conn, raw.as_bytes(), now)
            }
            75..83 => {
                let p = &mut pads[rng.random_range(0..3)];
                let text = *["show me pictures of cats", "dogs", "pictures of banana", "unicorns", ""].choose(&mut rng).unwrap();
                p.seq += 1;
                let voice = VoiceMsg { transcript: text.into(), confidence: None };
                let raw = encode(&Envelope::new(p.seq, p.sid.as_str(), now, Message::Voice(voice)));
                p.last = Some(raw.clone());
                hub.dispatch_bytes(p.conn, raw.as_bytes(), now)
            }
            83..88 => {
                let i = rng.random_range(0..3);
                hub.disconnect(pads[i].conn, now);
                pads[i].conn = next_conn;
                next_conn += 1;
                hub.connect(pads[i].conn, &ConnectRequest::resume(&pads[i].token), now).outbound
            }
            88..93 => {
                let p = &pads[rng.random_range(0..3)];
                match &p.last {
                    Some(raw) => hub.dispatch_bytes(p.conn, raw.as_bytes(), now),
                    None => Vec::new(),
                }
            }
            93..97 => {
                engine_seq += 1;
                let p = &pads[rng.random_range(0..3)];
                let id = format!("task:{}", p.sid);
                let prompt = rng.random_bool(0.7).then(|| Prompt {
                    prompt_id: id.clone(),
                    session_id: Some(p.sid.clone()),
                    text: format!("step {step}"),
                    tone: PromptTone::Task,
                    target: None,
                    task: None,
                    task_id: None,
                });
                let env = Envelope::new(engine_seq, "engine", now, Message::Prompt(PromptMsg { prompt_id: id, prompt }));
                hub.dispatch_bytes(engine, encode(&env).as_bytes(), now)
            }
            _ => {
                now += rng.random_range(0..5000);
                hub.tick(now)
            }
        };
        hub.drain_events();
        deliver(out, &mut mirrors, &mut last_rev)?;
    }
    for (conn, m) in &mirrors {
        if m != hub.state() {
            return Err(format!("display {conn} diverged: {} changes", m.diff(hub.state()).len()));
        }
    }
    Ok(hub.revision() as usize)
}

// Miniature recipe game for exhaustive search.

pub fn mini_corpus() -> CorpusManifest {
    let mut entries: Vec<CorpusEntry> = (0..4).map(|i| CorpusEntry::new(&format!("pebble{i}.svg"), &["pebble"])).collect();
    entries.push(CorpusEntry::new("avocado.svg", &["avocado"]));
    entries.push(CorpusEntry::new("lemon.svg", &["lemon"]));
    CorpusManifest::new(entries).unwrap()
}

fn mini_recipes() -> Vec<RecipeCard> {
    vec![
        RecipeCard::new("Guacamole", "Mash it with lime.", &["avocado"]),
        RecipeCard::new("Lemonade", "Squeeze and stir.", &["lemon"]),
    ]
}

#[derive(Clone)]
struct Node {
    hub: Hub,
    game: RecipeGame,
    pos: [FloorPoint; 2],
    seq: [u64; 2],
    tracker_seq: u64,
    engine_seq: u64,
    now: u64,
    voice_used: bool,
}

const TRACKER: ConnId = 2;
const ENGINE: ConnId = 3;
const PADS: [ConnId; 2] = [10, 11];

impl Node {
    fn sid(&self, i: usize) -> SessionId {
        let side = if i == 0 { Side::Left } else { Side::Right };
        self.hub.state().sessions.iter().find(|(_, v)| v.side == side).map(|(s, _)| s.clone()).expect("session")
    }

    fn pump(&mut self) {
        loop {
            let events = self.hub.drain_events();
            if events.is_empty() {
                return;
            }
            let mut prompts = Vec::new();
            for ev in &events {
                prompts.extend(self.game.on_event(ev, self.hub.state()));
            }
            for p in prompts {
                self.engine_seq += 1;
                let env = Envelope::new(self.engine_seq, "engine", self.now, Message::Prompt(p));
                self.hub.dispatch_bytes(ENGINE, encode(&env).as_bytes(), self.now);
            }
        }
    }

    fn frame(&mut self) {
        self.tracker_seq += 1;
        let tracks = self.pos.iter().enumerate().map(|(i, p)| TrackEntry { id: i as u64 + 1, x: p.x, y: p.y }).collect();
        let env = Envelope::new(self.tracker_seq, "tracker", self.now, Message::Tracks(TrackMsg { tracks }));
        self.hub.dispatch_bytes(TRACKER, encode(&env).as_bytes(), self.now);
        self.pump();
    }

    fn pad(&mut self, i: usize, msg: Message) {
        if matches!(msg, Message::Voice(_)) {
            self.voice_used = true;
        }
        self.seq[i] += 1;
        let env = Envelope::new(self.seq[i], self.sid(i).as_str(), self.now, msg);
        self.hub.dispatch_bytes(PADS[i], encode(&env).as_bytes(), self.now);
        self.pump();
    }

    fn key(&self) -> String {
        let mut s = self.hub.state().clone();
        s.revision = 0;
        s.prompts.clear();
        let phases = [Side::Left, Side::Right].map(|side| format!("{:?}", self.game.phase(side)));
        format!("{}|{}", serde_json::to_string(&s).unwrap(), phases.join(","))
    }

    fn image_ids(&self) -> std::collections::BTreeSet<String> {
        let s = self.hub.state();
        s.all_cards().map(|c| c.image_id.clone()).chain(s.shared.placed.iter().map(|p| p.card.image_id.clone())).collect()
    }

    fn has_answer(&self) -> bool {
        let answers: Vec<_> = self.game.blocks.iter().flat_map(|b| b.recipe.answer_tags.iter().cloned()).collect();
        let s = self.hub.state();
        let hit = |tags: &std::collections::BTreeSet<String>| answers.iter().any(|a| tags.contains(a));
        s.all_cards().any(|c| hit(&c.tags)) || s.shared.placed.iter().any(|p| hit(&p.card.tags))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    Stand(u8),
    Gesture(GestureKind),
    Toward(u8),
    Say,
}

fn mini_setup(mode: GameMode) -> (Node, WallModel) {
    let room = RoomSpec { columns_per_side: 1, ..RoomSpec::default() };
    let interaction = InteractionConfig {
        cards_per_column: 1,
        visible_cards: 1,
        // Power-of-two gains larger than the screen: every aimed move lands exactly in
        // one step, so the reachable set stays finite and small.
        pad_gain_u: 4096.0,
        pad_gain_v: Some(2048.0),
        ..InteractionConfig::default()
    };
    let cfg = HubConfig { room, interaction, registry: RegistryConfig::default(), seed: 3 };
    let model = cfg.model();
    let provider = ContentProvider::new(mini_corpus(), 3);
    let game_cfg = GameConfig { mode, recipes: mini_recipes(), ..GameConfig::default() };
    let (game, state) = RecipeGame::prepare("mini", &game_cfg, 3, &model, &provider).unwrap();
    let mut hub = Hub::new(cfg, provider, state);
    hub.connect(TRACKER, &ConnectRequest::new(Role::Tracker), 0);
    hub.connect(ENGINE, &ConnectRequest::new(Role::Engine), 0);
    hub.connect(PADS[0], &ConnectRequest::pad("left"), 0);
    hub.connect(PADS[1], &ConnectRequest::pad("right"), 0);
    let centre = FloorPoint::new(6.0, 5.0);
    let mut node = Node { hub, game, pos: [centre; 2], seq: [0; 2], tracker_seq: 0, engine_seq: 0, now: 0, voice_used: false };
    node.pump();
    node.frame();
    (node, model)
}

fn step(node: &Node, model: &WallModel, i: usize, act: Act) -> Option<Node> {
    let side = if i == 0 { Side::Left } else { Side::Right };
    let mut n = node.clone();
    n.now += 100;
    let sid = n.sid(i);
    let target = n.game.block(side).target_rect.center();
    match act {
        Act::Stand(k) => {
            let p = match k {
                0 => column_stand(model, wallspace_core::interaction::ColumnRef::new(side, 0)),
                1 => personal_stand(model, side, 0),
                2 => shared_stand(model, target.0),
                _ => FloorPoint::new(6.0, 5.0),
            };
            if n.pos[i] == p {
                return None;
            }
            n.pos[i] = p;
            n.frame();
        }
        Act::Gesture(g) => n.pad(i, Message::Gesture(GestureMsg::new(g))),
        Act::Toward(k) => {
            let c = n.hub.state().cursors.get(&sid)?.clone();
            let (u, v) = match (k, c.surface) {
                (0, Surface::Column(_) | Surface::Personal) => (c.u, (k as f64 + 0.5) * model.slot_height()),
                (2, Surface::Shared) => target,
                (3.., Surface::Shared) => {
                    let p = n.hub.state().shared.placed.get(k as usize - 3)?;
                    (p.u, p.v)
                }
                _ => return None,
            };
            let dx = ((u - c.u) / model.cfg.pad_gain_u).clamp(-1.0, 1.0);
            let dy = ((v - c.v) / model.pad_gain_v()).clamp(-1.0, 1.0);
            if dx == 0.0 && dy == 0.0 {
                return None;
            }
            n.pad(i, Message::Gesture(GestureMsg::movement(dx, dy)));
        }
        Act::Say => {
            let topic = n.game.block(side).recipe.answer_tags.iter().next().cloned().unwrap();
            let text = format!("show me pictures of {topic}");
            n.pad(i, Message::Voice(VoiceMsg { transcript: text, confidence: None }));
        }
    }
    Some(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchReport {
    pub states: usize,
    /// The frontier emptied before the state cap.
    pub exhausted: bool,
    pub answer_reachable: bool,
    pub completed: bool,
    /// Every explored transition kept the same set of image ids.
    pub ids_conserved: bool,
    pub depth: usize,
}

/// Breadth-first search over every pad and movement action of both players. Scale-only
/// gestures (pinch, zoom, double tap) are left out; they never move a card between containers.
pub fn exhaustive_search(mode: GameMode, max_states: usize) -> SearchReport {
    let (root, model) = mini_setup(mode);
    let mut acts: Vec<Act> = (0..4).map(Act::Stand).collect();
    acts.extend(
        [GestureKind::Tap, GestureKind::LongTap, GestureKind::SwipeUp, GestureKind::SwipeDown, GestureKind::SwipeLeft, GestureKind::SwipeRight]
            .map(Act::Gesture),
    );
    acts.extend([0, 2, 3, 4, 5].map(Act::Toward));
    let mut seen = HashSet::new();
    seen.insert(root.key());
    let mut report = SearchReport { states: 1, exhausted: false, answer_reachable: root.has_answer(), completed: false, ids_conserved: true, depth: 0 };
    let mut queue = VecDeque::from([(0usize, root)]);
    while let Some((depth, node)) = queue.pop_front() {
        report.depth = report.depth.max(depth);
        for i in 0..2 {
            for &a in &acts {
                let Some(next) = step(&node, &model, i, a) else { continue };
                report.ids_conserved &= next.image_ids() == node.image_ids();
                if !seen.insert(next.key()) {
                    continue;
                }
                report.states += 1;
                report.answer_reachable |= next.has_answer();
                if next.game.is_done() {
                    report.completed = true;
                    return report;
                }
                if report.states >= max_states {
                    return report;
                }
                queue.push_back((depth + 1, next));
            }
        }
    }
    report.exhausted = true;
    report
}

/// A player at their column who says the recipe's answer gets it onto the wall.
pub fn voice_witness() -> bool {
    let (root, model) = mini_setup(GameMode::VoiceRequired);
    let at_column = step(&root, &model, 0, Act::Stand(0)).expect("walk to column");
    let spoken = step(&at_column, &model, 0, Act::Say).expect("utterance");
    !root.has_answer() && spoken.has_answer() && spoken.voice_used
}

/// The miniature game as a scenario, for autopilot runs.
pub fn mini_scenario(mode: GameMode, use_voice: bool) -> ScenarioConfig {
    let (_, model) = mini_setup(mode);
    let agents = [Side::Left, Side::Right]
        .map(|side| AgentScript { use_voice, ..AgentScript::autopilot(side.as_str(), side) })
        .to_vec();
    ScenarioConfig {
        seed: 3,
        room: model.room,
        interaction: model.cfg,
        corpus: CorpusSource::Inline { entries: mini_corpus().entries },
        experiment: Experiment::Exp2 { agents, game: GameConfig { mode, recipes: mini_recipes(), ..GameConfig::default() } },
        max_duration_ms: 5 * 60 * 1000,
        ..ScenarioConfig::default()
    }
}
