use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::agent::{Agent, Plan};
use super::config::{ClockMode, CorpusSource, Experiment, ScenarioConfig};
use super::log::{LogFinal, LogHeader, LogRecord, LOG_FORMAT};
use super::SimError;
use crate::content::{ContentProvider, CorpusManifest};
use crate::interaction::{WallModel, WallState};
use crate::protocol::{
    decode, encode, ConnId, ConnectRequest, Envelope, ErrorMsg, Hub, HubConfig, Message, Outbound, PromptMsg,
    Role, TrackEntry, TrackMsg,
};
use crate::tasks::exp1::{Exp1Config, Exp1Runner};
use crate::tasks::metrics::MetricsReport;
use crate::tasks::recipe::{GameMode, RecipeGame};

const DISPLAY_CONN: ConnId = 1;
const TRACKER_CONN: ConnId = 2;
const ENGINE_CONN: ConnId = 3;
const FIRST_PAD_CONN: ConnId = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Every task or game finished successfully.
    Completed,
    /// The run ended, but with abandoned tasks or an abandoned game.
    Incomplete,
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: Vec<String>,
    pub report: MetricsReport,
    pub status: RunStatus,
    pub ended_at: u64,
    pub final_state: WallState,
    /// The wall as rebuilt from the snapshot and diffs the display received.
    pub mirror: WallState,
    pub agents: Vec<Agent>,
    /// Errors the hub sent to pads, by agent id.
    pub errors: Vec<(String, ErrorMsg)>,
    pub tasks_total: Option<usize>,
}

impl RunOutput {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn log_text(&self) -> String {
        let mut s = self.log.join("\n");
        s.push('\n');
        s
    }

    /// Writes `events.jsonl`, `report.json` and `report.csv`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("events.jsonl"), self.log_text())?;
        std::fs::write(dir.join("report.json"), self.report.to_json())?;
        std::fs::write(dir.join("report.csv"), self.report.to_csv())
    }
}

struct Sim {
    cfg: ScenarioConfig,
    model: WallModel,
    hub: Hub,
    mirror: WallState,
    agents: Vec<Agent>,
    reconnect_at: Vec<Option<u64>>,
    log: Vec<String>,
    errors: Vec<(String, ErrorMsg)>,
    exp1: Option<Exp1Runner>,
    exp1_cfg: Option<Exp1Config>,
    game: Option<RecipeGame>,
    next_conn: ConnId,
    tracker_seq: u64,
    engine_seq: u64,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl Sim {
    fn record(&mut self, rec: LogRecord) {
        self.log.push(rec.to_line());
    }

    fn connect(&mut self, conn: ConnId, req: ConnectRequest, now: u64) -> bool {
        let outcome = self.hub.connect(conn, &req, now);
        self.record(LogRecord::Connect { at: now, conn, request: req, accepted: outcome.accepted });
        self.deliver(outcome.outbound, now);
        self.pump(now);
        outcome.accepted
    }

    fn send(&mut self, conn: ConnId, raw: String, now: u64) {
        let out = self.hub.dispatch_bytes(conn, raw.as_bytes(), now);
        self.record(LogRecord::In { at: now, conn, raw });
        self.deliver(out, now);
        self.pump(now);
    }

    fn deliver(&mut self, out: Vec<Outbound>, now: u64) {
        for o in out {
            let raw = encode(&o.envelope);
            let env = decode(raw.as_bytes()).expect("hub frames decode");
            if o.to == DISPLAY_CONN {
                match env.msg {
                    Message::StateSnapshot(s) => self.mirror = s.state,
                    Message::StateDiff(d) => self.mirror.apply(d.revision, &d.changes),
                    _ => {}
                }
                continue;
            }
            let keep = matches!(env.msg, Message::RegisterOk(_) | Message::Error(_));
            if keep {
                self.record(LogRecord::Out { at: now, conn: o.to, raw });
            }
            let Some(i) = self.agents.iter().position(|a| a.conn == Some(o.to)) else {
                continue;
            };
            match env.msg {
                Message::RegisterOk(ok) => {
                    self.agents[i].session = Some(ok.session_id.clone());
                    self.agents[i].resume_token = Some(ok.resume_token);
                    if let (Some(cfg), None) = (&self.exp1_cfg, &self.exp1) {
                        let cols = self.model.room.columns_per_side;
                        self.exp1 = Some(Exp1Runner::new(cfg.clone(), self.cfg.seed, ok.session_id, ok.side, cols));
                    }
                }
                Message::Error(e) => self.errors.push((self.agents[i].script.agent_id.clone(), e)),
                _ => {}
            }
        }
    }

    /// Feeds hub events to the engine until it has nothing more to say.
    fn pump(&mut self, now: u64) {
        loop {
            let events = self.hub.drain_events();
            if events.is_empty() {
                return;
            }
            let mut prompts = Vec::new();
            for ev in events {
                if let Some(r) = &mut self.exp1 {
                    prompts.extend(r.on_event(&ev, self.hub.state()));
                }
                if let Some(g) = &mut self.game {
                    prompts.extend(g.on_event(&ev, self.hub.state()));
                }
                self.record(LogRecord::Event { event: ev });
                self.flush_engine_records();
            }
            for p in prompts {
                self.post(p, now);
            }
        }
    }

    fn flush_engine_records(&mut self) {
        let tasks = self.exp1.as_mut().map(|r| r.drain_records()).unwrap_or_default();
        let games = self.game.as_mut().map(|g| g.drain_records()).unwrap_or_default();
        for record in tasks {
            self.record(LogRecord::Task { record });
        }
        for record in games {
            self.record(LogRecord::Game { record });
        }
    }

    fn post(&mut self, p: PromptMsg, now: u64) {
        self.engine_seq += 1;
        let raw = encode(&Envelope::new(self.engine_seq, "engine", now, Message::Prompt(p)));
        let out = self.hub.dispatch_bytes(ENGINE_CONN, raw.as_bytes(), now);
        self.record(LogRecord::In { at: now, conn: ENGINE_CONN, raw });
        self.deliver(out, now);
    }

    fn send_pad(&mut self, i: usize, msg: Message, now: u64) {
        let a = &mut self.agents[i];
        let (Some(conn), Some(sid)) = (a.conn, a.session.clone()) else {
            return;
        };
        a.seq += 1;
        let raw = encode(&Envelope::new(a.seq, sid.as_str(), now, msg));
        a.last_sent = Some(raw.clone());
        self.send(conn, raw, now);
    }

    fn fresh_conn(&mut self) -> ConnId {
        let c = self.next_conn;
        self.next_conn += 1;
        c
    }

    fn faults_and_joins(&mut self, now: u64) {
        for i in 0..self.agents.len() {
            if !self.agents[i].joined && now >= self.agents[i].script.join_at_ms {
                self.agents[i].joined = true;
                let conn = self.fresh_conn();
                self.agents[i].conn = Some(conn);
                let side = self.agents[i].script.side.as_str();
                if !self.connect(conn, ConnectRequest::pad(side), now) {
                    self.agents[i].conn = None;
                }
            }
            if let Some(at) = self.reconnect_at[i] {
                if now >= at {
                    self.reconnect_at[i] = None;
                    let fault = self.agents[i].script.faults[self.agents[i].next_fault];
                    self.agents[i].next_fault += 1;
                    let token = self.agents[i].resume_token.clone().unwrap_or_default();
                    let conn = self.fresh_conn();
                    self.agents[i].conn = Some(conn);
                    if !self.connect(conn, ConnectRequest::resume(&token), now) {
                        self.agents[i].conn = None;
                    } else if let Some(raw) = self.agents[i].last_sent.clone().filter(|_| fault.resend_last) {
                        self.send(conn, raw, now);
                    }
                }
                continue;
            }
            let a = &self.agents[i];
            if let Some(f) = a.script.faults.get(a.next_fault).copied() {
                if now >= f.at_ms && a.joined {
                    if let Some(conn) = a.conn {
                        self.hub.disconnect(conn, now);
                        self.record(LogRecord::Disconnect { at: now, conn });
                    }
                    self.agents[i].conn = None;
                    self.reconnect_at[i] = Some(f.at_ms + f.down_ms);
                }
            }
        }
    }

    fn tracker_frame(&mut self, now: u64) {
        let room = self.model.room;
        let mut tracks = Vec::with_capacity(self.agents.len());
        for a in &mut self.agents {
            a.advance(now);
            let (mut x, mut y) = (a.pos.x, a.pos.y);
            if let Some((rng, normal)) = &mut self.noise {
                x += normal.sample(rng);
                y += normal.sample(rng);
                let p = room.clamp(x, y);
                (x, y) = (p.x, p.y);
            }
            tracks.push(TrackEntry { id: a.track_id, x, y });
        }
        self.tracker_seq += 1;
        let raw = encode(&Envelope::new(self.tracker_seq, "tracker", now, Message::Tracks(TrackMsg { tracks })));
        self.send(TRACKER_CONN, raw, now);
    }

    fn engine_poll(&mut self, now: u64) {
        let prompts = match &mut self.exp1 {
            Some(r) => r.poll(now, self.hub.state()),
            None => Vec::new(),
        };
        if let Some(g) = &mut self.game {
            g.poll(now);
        }
        self.flush_engine_records();
        for p in prompts {
            self.post(p, now);
        }
        self.pump(now);
    }

    fn status(&self) -> Option<RunStatus> {
        let done = |ok: bool| Some(if ok { RunStatus::Completed } else { RunStatus::Incomplete });
        match &self.cfg.experiment {
            Experiment::Exp1 { .. } => match &self.exp1 {
                Some(r) if r.is_finished() => done(r.abandoned() == 0),
                _ => None,
            },
            Experiment::Exp2 { .. } => match &self.game {
                Some(g) if g.is_over() => done(g.outcome().completed),
                _ => None,
            },
            Experiment::Free { .. } => self.agents.iter().all(|a| a.script_finished() && a.joined).then_some(RunStatus::Completed),
        }
    }
}

fn load_manifest(cfg: &ScenarioConfig) -> Result<CorpusManifest, SimError> {
    Ok(match &cfg.corpus {
        CorpusSource::Inline { entries } => CorpusManifest::new(entries.clone())?,
        CorpusSource::Dir { path } => CorpusManifest::load(path)?,
    })
}

/// Runs one scenario to completion or timeout.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    let manifest = load_manifest(cfg)?;
    let hub_cfg = HubConfig { room: cfg.room, interaction: cfg.interaction, registry: cfg.registry, seed: cfg.seed };
    let model = hub_cfg.model();
    model.validate().map_err(SimError::Config)?;
    let provider = ContentProvider::new(manifest.clone(), cfg.seed);

    let (game, initial) = match &cfg.experiment {
        Experiment::Exp2 { game, .. } => {
            let game_id = format!("game-{}", cfg.seed);
            let (g, state) = RecipeGame::prepare(&game_id, game, cfg.seed, &model, &provider)?;
            (Some(g), state)
        }
        _ => (None, crate::interaction::initial_state(&model, &provider, cfg.seed)?),
    };
    let mut header_cfg = cfg.clone();
    header_cfg.inline_corpus(&manifest);
    let header = LogHeader {
        format: LOG_FORMAT,
        scenario: header_cfg,
        hub: hub_cfg,
        provider_seed: provider.seed(),
        initial_state: initial.clone(),
    };

    let agents: Vec<Agent> = cfg
        .experiment
        .agents()
        .into_iter()
        .enumerate()
        .map(|(i, script)| {
            let mut a = Agent::new(script.clone(), i as u64 + 1, &model);
            if script.autopilot {
                a.plan = match (&cfg.experiment, &game) {
                    (Experiment::Exp1 { .. }, _) => Plan::Tasks { last_task: None },
                    (Experiment::Exp2 { .. }, Some(g)) => Plan::Recipe {
                        answers: script.answer_tags.clone().unwrap_or_else(|| g.block(script.side).recipe.answer_tags.clone()),
                        prefer_voice: script.use_voice && g.mode == GameMode::VoiceRequired,
                        search_column: 0,
                    },
                    _ => Plan::Scripted,
                };
            }
            a
        })
        .collect();
    let noise = (cfg.tracker_noise_m > 0.0).then(|| {
        let normal = Normal::new(0.0, cfg.tracker_noise_m).expect("validated sigma");
        (ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0074_7261_636b_6572), normal)
    });
    let exp1_cfg = match &cfg.experiment {
        Experiment::Exp1 { tasks, .. } => Some(tasks.clone()),
        _ => None,
    };

    let mut sim = Sim {
        cfg: cfg.clone(),
        model,
        hub: Hub::new(hub_cfg, provider, initial),
        mirror: WallState::default(),
        reconnect_at: vec![None; agents.len()],
        agents,
        log: Vec::new(),
        errors: Vec::new(),
        exp1: None,
        exp1_cfg,
        game,
        next_conn: FIRST_PAD_CONN,
        tracker_seq: 0,
        engine_seq: 0,
        noise,
    };
    sim.record(LogRecord::Header(Box::new(header)));
    sim.connect(DISPLAY_CONN, ConnectRequest::new(Role::Display), 0);
    sim.connect(TRACKER_CONN, ConnectRequest::new(Role::Tracker), 0);
    sim.connect(ENGINE_CONN, ConnectRequest::new(Role::Engine), 0);

    let started = Instant::now();
    let hz = u64::from(cfg.tracker_hz);
    let mut now;
    let status = 'run: {
        for k in 0u64.. {
            now = k * 1000 / hz;
            if now > cfg.max_duration_ms {
                break 'run RunStatus::TimedOut;
            }
            if cfg.clock == ClockMode::Realtime {
                let due = Duration::from_millis(now);
                if let Some(wait) = due.checked_sub(started.elapsed()) {
                    std::thread::sleep(wait);
                }
            }
            let rev = sim.hub.revision();
            let out = sim.hub.tick(now);
            if sim.hub.revision() != rev {
                sim.record(LogRecord::Tick { at: now });
            }
            sim.deliver(out, now);
            sim.pump(now);
            sim.faults_and_joins(now);
            sim.tracker_frame(now);
            sim.engine_poll(now);
            for i in 0..sim.agents.len() {
                let msg = sim.agents[i].tick(now, &sim.mirror, &sim.model);
                if let Some(msg) = msg {
                    sim.send_pad(i, msg, now);
                }
            }
            if let Some(s) = sim.status() {
                break 'run s;
            }
        }
        unreachable!("tick loop only exits through a status")
    };

    if status == RunStatus::TimedOut {
        if let Some(r) = &mut sim.exp1 {
            r.close(now);
        }
        if let Some(g) = &mut sim.game {
            g.close(now);
        }
        sim.flush_engine_records();
    }
    let timings = sim.exp1.as_ref().map(|r| r.timings().to_vec()).unwrap_or_default();
    let games: Vec<_> = sim.game.iter().map(|g| g.outcome()).collect();
    let report = MetricsReport::from_records(&timings, &games);
    let final_state = sim.hub.state().clone();
    sim.record(LogRecord::Final(Box::new(LogFinal { at: now, status, state: final_state.clone(), report: report.clone() })));

    Ok(RunOutput {
        log: sim.log,
        report,
        status,
        ended_at: now,
        final_state,
        mirror: sim.mirror,
        agents: sim.agents,
        errors: sim.errors,
        tasks_total: sim.exp1.as_ref().map(|r| r.total()),
    })
}

