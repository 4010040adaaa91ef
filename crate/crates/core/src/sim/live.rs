use super::config::{CorpusSource, Experiment, ScenarioConfig};
use super::harness::RunStatus;
use super::log::{LogFinal, LogHeader, LogRecord, LOG_FORMAT};
use super::SimError;
use crate::content::{ContentProvider, CorpusManifest};
use crate::interaction::initial_state;
use crate::protocol::{
    encode, ConnId, ConnectOutcome, ConnectRequest, Envelope, Hub, HubConfig, Message, Outbound, PromptMsg, Role,
};
use crate::tasks::exp1::{Exp1Config, Exp1Runner};
use crate::tasks::metrics::MetricsReport;
use crate::tasks::recipe::RecipeGame;

/// Connection ids below this are reserved for in-process peers.
pub const FIRST_CLIENT_CONN: ConnId = 100;
const ENGINE_CONN: ConnId = 3;

/// The hub plus its experiment engine, for real clients instead of scripted agents.
///
/// Every call appends to the same JSONL log format as [`super::run_scenario`], so a live
/// session can be replayed and reported on afterwards.
pub struct LiveHub {
    hub: Hub,
    experiment: Experiment,
    exp1_cfg: Option<Exp1Config>,
    exp1: Option<Exp1Runner>,
    game: Option<RecipeGame>,
    seed: u64,
    engine_seq: u64,
    log: Vec<String>,
}

impl LiveHub {
    /// Scripted agents in `cfg.experiment` are ignored; real pads take their place.
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        let manifest = match &cfg.corpus {
            CorpusSource::Inline { entries } => CorpusManifest::new(entries.clone())?,
            CorpusSource::Dir { path } => CorpusManifest::load(path)?,
        };
        let hub_cfg = HubConfig { room: cfg.room, interaction: cfg.interaction, registry: cfg.registry, seed: cfg.seed };
        let model = hub_cfg.model();
        model.validate().map_err(SimError::Config)?;
        let provider = ContentProvider::new(manifest.clone(), cfg.seed);
        let (game, initial) = match &cfg.experiment {
            Experiment::Exp2 { game, .. } => {
                let (g, s) = RecipeGame::prepare(&format!("game-{}", cfg.seed), game, cfg.seed, &model, &provider)?;
                (Some(g), s)
            }
            _ => (None, initial_state(&model, &provider, cfg.seed)?),
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
        let exp1_cfg = match &cfg.experiment {
            Experiment::Exp1 { tasks, .. } => Some(tasks.clone()),
            _ => None,
        };
        let mut live = Self {
            hub: Hub::new(hub_cfg, provider, initial),
            experiment: cfg.experiment.clone(),
            exp1_cfg,
            exp1: None,
            game,
            seed: cfg.seed,
            engine_seq: 0,
            log: Vec::new(),
        };
        live.record(LogRecord::Header(Box::new(header)));
        live.connect(ENGINE_CONN, &ConnectRequest::new(Role::Engine), 0);
        Ok(live)
    }

    pub fn hub(&self) -> &Hub {
        &self.hub
    }

    fn record(&mut self, rec: LogRecord) {
        self.log.push(rec.to_line());
    }

    /// Log lines written since the last call.
    pub fn take_log(&mut self) -> Vec<String> {
        std::mem::take(&mut self.log)
    }

    pub fn connect(&mut self, conn: ConnId, req: &ConnectRequest, now: u64) -> ConnectOutcome {
        let mut outcome = self.hub.connect(conn, req, now);
        self.record(LogRecord::Connect { at: now, conn, request: req.clone(), accepted: outcome.accepted });
        for o in &outcome.outbound {
            if let (Message::RegisterOk(ok), Some(cfg), None) = (&o.envelope.msg, &self.exp1_cfg, &self.exp1) {
                let cols = self.hub.model().room.columns_per_side;
                self.exp1 = Some(Exp1Runner::new(cfg.clone(), self.seed, ok.session_id.clone(), ok.side, cols));
            }
        }
        self.log_replies(&outcome.outbound, now);
        outcome.outbound.extend(self.pump(now));
        outcome
    }

    pub fn disconnect(&mut self, conn: ConnId, now: u64) {
        if self.hub.is_connected(conn) {
            self.hub.disconnect(conn, now);
            self.record(LogRecord::Disconnect { at: now, conn });
        }
    }

    /// One inbound text frame.
    pub fn receive(&mut self, conn: ConnId, raw: &str, now: u64) -> Vec<Outbound> {
        let mut out = self.hub.dispatch_bytes(conn, raw.as_bytes(), now);
        self.record(LogRecord::In { at: now, conn, raw: raw.to_string() });
        self.log_replies(&out, now);
        out.extend(self.pump(now));
        out
    }

    /// Session expiry and task timeouts.
    pub fn tick(&mut self, now: u64) -> Vec<Outbound> {
        let rev = self.hub.revision();
        let mut out = self.hub.tick(now);
        if self.hub.revision() != rev {
            self.record(LogRecord::Tick { at: now });
        }
        out.extend(self.pump(now));
        let prompts = match &mut self.exp1 {
            Some(r) => r.poll(now, self.hub.state()),
            None => Vec::new(),
        };
        if let Some(g) = &mut self.game {
            g.poll(now);
        }
        self.flush_engine_records();
        for p in prompts {
            out.extend(self.post(p, now));
        }
        out.extend(self.pump(now));
        out
    }

    pub fn ping(&mut self, conn: ConnId, now: u64) -> Option<Outbound> {
        self.hub.ping(conn, now)
    }

    pub fn status(&self) -> Option<RunStatus> {
        let done = |ok: bool| Some(if ok { RunStatus::Completed } else { RunStatus::Incomplete });
        match &self.experiment {
            Experiment::Exp1 { .. } => self.exp1.as_ref().filter(|r| r.is_finished()).and_then(|r| done(r.abandoned() == 0)),
            Experiment::Exp2 { .. } => self.game.as_ref().filter(|g| g.is_over()).and_then(|g| done(g.outcome().completed)),
            Experiment::Free { .. } => None,
        }
    }

    /// Closes open tasks and games and writes the final record.
    pub fn finish(&mut self, now: u64) -> LogFinal {
        let status = self.status().unwrap_or(RunStatus::Incomplete);
        if let Some(r) = &mut self.exp1 {
            r.close(now);
        }
        if let Some(g) = &mut self.game {
            g.close(now);
        }
        self.flush_engine_records();
        let timings = self.exp1.as_ref().map(|r| r.timings().to_vec()).unwrap_or_default();
        let games: Vec<_> = self.game.iter().map(|g| g.outcome()).collect();
        let report = MetricsReport::from_records(&timings, &games);
        let fin = LogFinal { at: now, status, state: self.hub.state().clone(), report };
        self.record(LogRecord::Final(Box::new(fin.clone())));
        fin
    }

    fn log_replies(&mut self, out: &[Outbound], now: u64) {
        for o in out {
            if matches!(o.envelope.msg, Message::RegisterOk(_) | Message::Error(_)) {
                self.record(LogRecord::Out { at: now, conn: o.to, raw: encode(&o.envelope) });
            }
        }
    }

    fn pump(&mut self, now: u64) -> Vec<Outbound> {
        let mut out = Vec::new();
        loop {
            let events = self.hub.drain_events();
            if events.is_empty() {
                return out;
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
                out.extend(self.post(p, now));
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

    fn post(&mut self, p: PromptMsg, now: u64) -> Vec<Outbound> {
        self.engine_seq += 1;
        let raw = encode(&Envelope::new(self.engine_seq, "engine", now, Message::Prompt(p)));
        let out = self.hub.dispatch_bytes(ENGINE_CONN, raw.as_bytes(), now);
        self.record(LogRecord::In { at: now, conn: ENGINE_CONN, raw });
        out.into_iter().filter(|o| o.to != ENGINE_CONN).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::GestureMsg;
    use crate::interaction::GestureKind;
    use crate::sim::replay;

    fn cfg() -> ScenarioConfig {
        let manifest = CorpusManifest::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")).unwrap();
        let mut cfg = ScenarioConfig { experiment: Experiment::Free { agents: vec![] }, ..ScenarioConfig::default() };
        cfg.inline_corpus(&manifest);
        cfg
    }

    #[test]
    fn live_log_replays() {
        let mut live = LiveHub::new(&cfg()).unwrap();
        let display = live.connect(FIRST_CLIENT_CONN, &ConnectRequest::new(Role::Display), 5);
        assert!(display.outbound.iter().any(|o| o.envelope.kind() == "state_snapshot"));
        let pad = live.connect(FIRST_CLIENT_CONN + 1, &ConnectRequest::pad("left"), 10);
        let sid = pad.session.unwrap();
        let frame = encode(&Envelope::new(1, sid.as_str(), 20, Message::Gesture(GestureMsg::new(GestureKind::Tap))));
        let out = live.receive(FIRST_CLIENT_CONN + 1, &frame, 20);
        assert!(out.iter().any(|o| o.envelope.kind() == "error"), "an unbound pad is inactive");
        live.disconnect(FIRST_CLIENT_CONN + 1, 30);
        live.tick(40);
        let fin = live.finish(50);
        let text = live.take_log().join("\n");
        let outcome = replay(&text).unwrap();
        assert_eq!(outcome.state, fin.state);
        assert_eq!(outcome.frames, 1);
    }
}
