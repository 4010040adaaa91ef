//! `wallspace serve`: the hub behind websockets.
//!
//! One task owns the [`LiveHub`] and applies frames in arrival order; each socket has a
//! writer task fed through its own channel, so fan-out is concurrent but FIFO per client.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{RawQuery, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use qrcode::render::{svg, unicode};
use qrcode::QrCode;
use tokio::sync::{mpsc, oneshot};
use tower_http::services::ServeDir;

use wallspace_core::content::CorpusManifest;
use wallspace_core::protocol::{
    decode, encode, ConnId, ConnectRequest, Heartbeat, HeartbeatVerdict, Message, Outbound,
};
use wallspace_core::sim::{AgentScript, Experiment, LiveHub, ScenarioConfig, FIRST_CLIENT_CONN};
use wallspace_core::tasks::exp1::Exp1Config;
use wallspace_core::tasks::recipe::{GameConfig, GameMode};

use crate::{ExperimentArg, ServeArgs};

const TICK: Duration = Duration::from_millis(100);

enum Cmd {
    Open { req: ConnectRequest, out: mpsc::UnboundedSender<String>, reply: oneshot::Sender<Option<ConnId>> },
    Frame { conn: ConnId, text: String },
    Close { conn: ConnId },
    Shutdown { done: oneshot::Sender<()> },
}

#[derive(Clone)]
struct AppState {
    hub: mpsc::UnboundedSender<Cmd>,
    qr_page: String,
}

struct HubLoop {
    live: LiveHub,
    clients: BTreeMap<ConnId, mpsc::UnboundedSender<String>>,
    heartbeats: BTreeMap<ConnId, Heartbeat>,
    next_conn: ConnId,
    log: Option<BufWriter<File>>,
    started: Instant,
    announced: bool,
}

impl HubLoop {
    fn now(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    fn route(&self, out: Vec<Outbound>) {
        for o in out {
            if let Some(tx) = self.clients.get(&o.to) {
                let _ = tx.send(encode(&o.envelope));
            }
        }
    }

    fn flush_log(&mut self) {
        let lines = self.live.take_log();
        if let Some(w) = &mut self.log {
            for line in lines {
                if let Err(e) = writeln!(w, "{line}") {
                    tracing::error!("event log write failed: {e}");
                }
            }
            let _ = w.flush();
        }
    }

    fn handle(&mut self, cmd: Cmd) -> Option<oneshot::Sender<()>> {
        let now = self.now();
        match cmd {
            Cmd::Open { req, out, reply } => {
                let conn = self.next_conn;
                self.next_conn += 1;
                let outcome = self.live.connect(conn, &req, now);
                if outcome.accepted {
                    tracing::info!(conn, role = ?req.role, session = ?outcome.session, "connected");
                    self.clients.insert(conn, out);
                    self.heartbeats.insert(conn, Heartbeat::new(now));
                    self.route(outcome.outbound);
                    let _ = reply.send(Some(conn));
                } else {
                    for o in outcome.outbound {
                        match o.to {
                            c if c == conn => drop(out.send(encode(&o.envelope))),
                            c => drop(self.clients.get(&c).map(|tx| tx.send(encode(&o.envelope)))),
                        }
                    }
                    tracing::info!(role = ?req.role, "connection refused");
                    let _ = reply.send(None);
                }
            }
            Cmd::Frame { conn, text } => {
                if matches!(decode(text.as_bytes()).map(|e| e.msg), Ok(Message::Pong)) {
                    if let Some(hb) = self.heartbeats.get_mut(&conn) {
                        hb.on_pong();
                    }
                }
                let out = self.live.receive(conn, &text, now);
                self.route(out);
            }
            Cmd::Close { conn } => self.drop_client(conn, now),
            Cmd::Shutdown { done } => return Some(done),
        }
        None
    }

    fn drop_client(&mut self, conn: ConnId, now: u64) {
        if self.clients.remove(&conn).is_some() {
            self.heartbeats.remove(&conn);
            self.live.disconnect(conn, now);
            tracing::info!(conn, "disconnected");
        }
    }

    fn tick(&mut self) {
        let now = self.now();
        let out = self.live.tick(now);
        self.route(out);
        let verdicts: Vec<(ConnId, HeartbeatVerdict)> =
            self.heartbeats.iter_mut().map(|(c, hb)| (*c, hb.poll(now))).collect();
        for (conn, verdict) in verdicts {
            match verdict {
                HeartbeatVerdict::Idle => {}
                HeartbeatVerdict::SendPing => {
                    if let Some(o) = self.live.ping(conn, now) {
                        self.route(vec![o]);
                    }
                }
                HeartbeatVerdict::Dead => {
                    tracing::warn!(conn, "no pong, closing");
                    self.drop_client(conn, now);
                }
            }
        }
        if let (Some(status), false) = (self.live.status(), self.announced) {
            self.announced = true;
            tracing::info!(?status, "experiment over");
        }
    }

    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Cmd>) {
        let mut interval = tokio::time::interval(TICK);
        let done = loop {
            tokio::select! {
                cmd = rx.recv() => match cmd {
                    Some(cmd) => {
                        if let Some(done) = self.handle(cmd) {
                            break Some(done);
                        }
                    }
                    None => break None,
                },
                _ = interval.tick() => self.tick(),
            }
            self.flush_log();
        };
        let fin = self.live.finish(self.now());
        self.flush_log();
        tracing::info!(status = ?fin.status, revision = fin.state.revision, "hub stopped");
        if let Some(done) = done {
            let _ = done.send(());
        }
    }
}

fn experiment(arg: ExperimentArg) -> Experiment {
    let game = |mode| Experiment::Exp2 { agents: Vec::new(), game: GameConfig { mode, ..GameConfig::default() } };
    match arg {
        ExperimentArg::Free => Experiment::Free { agents: Vec::new() },
        ExperimentArg::Exp1 => Experiment::Exp1 { user: AgentScript::default(), tasks: Exp1Config::default() },
        ExperimentArg::Exp2Prepopulated => game(GameMode::PrePopulated),
        ExperimentArg::Exp2Voice => game(GameMode::VoiceRequired),
    }
}

fn pad_url(base: &str, side: &str) -> String {
    format!("{}/pad?side={side}", base.trim_end_matches('/'))
}

fn qr_page(base: &str) -> Result<String> {
    let mut cells = String::new();
    for side in ["left", "right"] {
        let url = pad_url(base, side);
        let code = QrCode::new(url.as_bytes())?;
        let image = code.render::<svg::Color>().min_dimensions(280, 280).build();
        cells.push_str(&format!("<figure>{image}<figcaption>{side} side<br><code>{url}</code></figcaption></figure>"));
    }
    Ok(format!(
        "<!doctype html><meta charset=utf-8><title>wallspace pads</title>\
         <style>body{{font-family:sans-serif;display:flex;gap:4em;justify-content:center}}figure{{text-align:center}}</style>\
         {cells}"
    ))
}

fn print_terminal_qr(base: &str) -> Result<()> {
    for side in ["left", "right"] {
        let url = pad_url(base, side);
        let code = QrCode::new(url.as_bytes())?;
        let art = code.render::<unicode::Dense1x2>().quiet_zone(true).build();
        println!("{side} side pad: {url}\n{art}");
    }
    Ok(())
}

fn placeholder(client: &str) -> Html<String> {
    Html(format!(
        "<!doctype html><meta charset=utf-8><title>wallspace {client}</title>\
         <p>The {client} client is not installed. Start the server with <code>--web &lt;dir&gt;</code> \
         pointing at the built web clients, or connect your own to <code>/ws?role={client}</code>.</p>"
    ))
}

fn web_client(router: Router<AppState>, web: Option<&Path>, client: &'static str) -> Router<AppState> {
    let path = format!("/{client}");
    match web.map(|w| w.join(client)).filter(|d| d.is_dir()) {
        Some(dir) => router.nest_service(&path, ServeDir::new(dir).append_index_html_on_directories(true)),
        None => router.route(&path, get(move || async move { placeholder(client) })),
    }
}

async fn ws_handler(ws: WebSocketUpgrade, RawQuery(query): RawQuery, State(app): State<AppState>) -> Response {
    match ConnectRequest::from_query(query.as_deref().unwrap_or("")) {
        Ok(req) => ws.on_upgrade(move |socket| client(socket, req, app.hub)),
        Err(e) => (StatusCode::BAD_REQUEST, e).into_response(),
    }
}

async fn client(socket: WebSocket, req: ConnectRequest, hub: mpsc::UnboundedSender<Cmd>) {
    let (mut sink, mut stream) = socket.split();
    let (out, mut outbox) = mpsc::unbounded_channel::<String>();
    let (reply, accepted) = oneshot::channel();
    if hub.send(Cmd::Open { req, out, reply }).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(text) = outbox.recv().await {
            if sink.send(WsMessage::Text(text.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    if let Ok(Some(conn)) = accepted.await {
        while let Some(Ok(msg)) = stream.next().await {
            match msg {
                WsMessage::Text(t) => {
                    if hub.send(Cmd::Frame { conn, text: t.to_string() }).is_err() {
                        break;
                    }
                }
                WsMessage::Binary(b) => {
                    let text = String::from_utf8_lossy(&b).into_owned();
                    if hub.send(Cmd::Frame { conn, text }).is_err() {
                        break;
                    }
                }
                WsMessage::Close(_) => break,
                WsMessage::Ping(_) | WsMessage::Pong(_) => {}
            }
        }
        let _ = hub.send(Cmd::Close { conn });
    }
    let _ = writer.await;
}

pub async fn serve(args: ServeArgs) -> Result<()> {
    let manifest = CorpusManifest::load(&args.corpus).with_context(|| format!("loading corpus {}", args.corpus.display()))?;
    let mut cfg = ScenarioConfig { seed: args.seed, room: args.room, experiment: experiment(args.experiment), ..ScenarioConfig::default() };
    cfg.inline_corpus(&manifest);
    let live = LiveHub::new(&cfg)?;
    let log = match &args.log {
        Some(path) => {
            let f = OpenOptions::new().create(true).truncate(true).write(true).open(path)
                .with_context(|| format!("opening {}", path.display()))?;
            Some(BufWriter::new(f))
        }
        None => None,
    };

    let public = args.public_url.clone().unwrap_or_else(|| {
        let host = if args.host == "0.0.0.0" { "localhost" } else { args.host.as_str() };
        format!("http://{host}:{}", args.port)
    });
    if args.public_url.is_none() {
        tracing::warn!("pads will be pointed at {public}; pass --public-url with this machine's LAN address for phones");
    }

    let (tx, rx) = mpsc::unbounded_channel();
    let hub = HubLoop {
        live,
        clients: BTreeMap::new(),
        heartbeats: BTreeMap::new(),
        next_conn: FIRST_CLIENT_CONN,
        log,
        started: Instant::now(),
        announced: false,
    };
    let hub_task = tokio::spawn(hub.run(rx));

    let state = AppState { hub: tx.clone(), qr_page: qr_page(&public)? };
    let mut router = Router::new()
        .route("/ws", get(ws_handler))
        .route("/qr", get(|State(app): State<AppState>| async move { Html(app.qr_page) }))
        .nest_service("/img", ServeDir::new(&args.corpus));
    router = web_client(router, args.web.as_deref(), "display");
    router = web_client(router, args.web.as_deref(), "pad");

    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse().context("bad --host/--port")?;
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on {addr}; display at {public}/display, pad codes at {public}/qr");
    print_terminal_qr(&public)?;

    axum::serve(listener, router.with_state(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;

    let (done, stopped) = oneshot::channel();
    let _ = tx.send(Cmd::Shutdown { done });
    let _ = stopped.await;
    drop(tx);
    let _ = hub_task.await;
    Ok(())
}
