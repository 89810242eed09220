//! Headless protocol client and a checking model of what one client should
//! observe: contiguous sequence numbers, replies to every request, room
//! traffic only for the room it is in, and deltas that fold onto snapshots.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use raise_core::engine::activity::ActivityConfig;
use raise_core::engine::PlayerInput;
use raise_core::play::random_activity_result;
use raise_core::scenario::{ActivityKind, ActivityRef, NodeKind};
use raise_core::windfarm::{apply_action, Cell, FarmLayout, LayoutAction, WindFarmChallenge};
use raise_core::world::apply_delta;
use raise_core::world::protocol::{
    ClientEnvelope, ClientMessage, NodeView, ServerEnvelope, ServerMessage,
};
use raise_core::world::room::RoomSnapshot;
use raise_core::world::topology::WorldTopology;

#[derive(Debug, Error)]
pub enum BotError {
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("server closed the connection")]
    Closed,
    #[error("no reply to seq {0} in time")]
    Timeout(u64),
    #[error("undecodable server frame: {0}")]
    Decode(String),
}

pub struct BotClient {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    next_seq: u64,
}

impl BotClient {
    pub async fn connect(addr: SocketAddr) -> Result<Self, BotError> {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}")).await?;
        Ok(BotClient { ws, next_seq: 1 })
    }

    /// Sends a message under the next sequence number and returns that number.
    pub async fn send(&mut self, message: ClientMessage) -> Result<u64, BotError> {
        let seq = self.next_seq;
        self.next_seq += 1;
        let env = ClientEnvelope { seq, message };
        self.ws.send(Message::text(env.to_text())).await?;
        Ok(seq)
    }

    pub async fn send_raw(&mut self, text: &str) -> Result<(), BotError> {
        self.ws.send(Message::text(text.to_string())).await?;
        Ok(())
    }

    /// Next server frame; `None` once the server has closed the connection.
    pub async fn recv(&mut self, timeout: Duration) -> Result<Option<ServerEnvelope>, BotError> {
        loop {
            let frame = tokio::time::timeout(timeout, self.ws.next())
                .await
                .map_err(|_| BotError::Timeout(self.next_seq - 1))?;
            match frame {
                None | Some(Ok(Message::Close(_))) => return Ok(None),
                Some(Ok(Message::Text(t))) => {
                    return ServerEnvelope::from_text(t.as_str())
                        .map(Some)
                        .map_err(|e| BotError::Decode(format!("{e}: {t}")))
                }
                Some(Ok(_)) => continue,
                Some(Err(e)) => return Err(e.into()),
            }
        }
    }

    /// Sends `message`, feeding every frame to `view` until the first reply
    /// carrying `re = seq` has been observed.
    pub async fn request(
        &mut self,
        view: &mut BotView,
        message: ClientMessage,
        timeout: Duration,
    ) -> Result<u64, BotError> {
        let kind = message.type_name();
        let seq = self.send(message).await?;
        view.sent(seq, kind);
        loop {
            let env = tokio::time::timeout(timeout, self.recv(timeout))
                .await
                .map_err(|_| BotError::Timeout(seq))??
                .ok_or(BotError::Closed)?;
            view.observe(&env);
            if env.re == Some(seq) {
                return Ok(seq);
            }
        }
    }

    pub async fn close(mut self) {
        let _ = self.ws.close(None).await;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionView {
    pub session_id: String,
    pub scenario_id: String,
    pub view: NodeView,
}

/// What one client has been told, plus every inconsistency spotted so far.
#[derive(Debug, Default)]
pub struct BotView {
    pub player_id: Option<String>,
    pub locale: Option<String>,
    pub topology: Option<WorldTopology>,
    /// Current room, folded from its snapshot and every delta since.
    pub room: Option<RoomSnapshot>,
    pub session: Option<SessionView>,
    pub layout: FarmLayout,
    pub frames: usize,
    pub checkpoints: usize,
    pub sessions_started: usize,
    pub sessions_finished: usize,
    pub errors: BTreeMap<String, usize>,
    pub problems: Vec<String>,
    /// Error codes a correct client can still receive.
    pub tolerated: Vec<&'static str>,
    last_seq: u64,
    sent_max: u64,
    pending: BTreeMap<u64, &'static str>,
    checkpoint: Option<u64>,
}

impl BotView {
    pub fn new() -> Self {
        BotView {
            tolerated: vec!["RateLimited"],
            ..BotView::default()
        }
    }

    pub fn sent(&mut self, seq: u64, kind: &'static str) {
        self.sent_max = self.sent_max.max(seq);
        self.pending.insert(seq, kind);
    }

    /// Marks `seq` as a checkpoint: its snapshot reply must equal the fold.
    pub fn expect_checkpoint(&mut self, seq: u64) {
        self.checkpoint = Some(seq);
    }

    pub fn unanswered(&self) -> Vec<u64> {
        self.pending.keys().copied().collect()
    }

    fn problem(&mut self, text: String) {
        self.problems.push(text);
    }

    pub fn observe(&mut self, env: &ServerEnvelope) {
        self.frames += 1;
        if env.seq != self.last_seq + 1 {
            self.problem(format!("server seq {} after {}", env.seq, self.last_seq));
        }
        self.last_seq = env.seq;
        let request = match env.re {
            Some(re) if re > self.sent_max => {
                self.problem(format!("reply to unsent seq {re}"));
                None
            }
            Some(re) => Some((re, self.pending.remove(&re))),
            None => None,
        };
        let is_reply = request.is_some();
        match &env.message {
            ServerMessage::Welcome {
                player_id,
                locale,
                topology,
                ..
            } => {
                if !is_reply {
                    self.problem("unsolicited welcome".into());
                }
                if self.player_id.as_ref().is_some_and(|p| p != player_id) {
                    self.problem(format!("welcome for {player_id}"));
                }
                self.player_id = Some(player_id.clone());
                self.locale = Some(locale.clone());
                self.topology = Some(topology.clone());
            }
            ServerMessage::RoomSnapshot(s) => {
                if !is_reply {
                    self.problem(format!("unsolicited snapshot of {}", s.room_id));
                }
                if let (Some(cp), Some((re, _))) = (self.checkpoint, request) {
                    if cp == re {
                        self.checkpoint = None;
                        self.checkpoints += 1;
                        if self.room.as_ref() != Some(s) {
                            self.problem(format!(
                                "fold {:?} differs from snapshot {:?}",
                                self.room, s
                            ));
                        }
                    }
                }
                self.room = Some(s.clone());
            }
            ServerMessage::RoomDelta(d) => match &self.room {
                Some(r) if r.room_id != d.room_id => {
                    let here = r.room_id.clone();
                    self.problem(format!("delta for {} while in {here}", d.room_id));
                }
                None => self.problem(format!("delta for {} outside any room", d.room_id)),
                Some(r) if d.seq != r.seq + 1 => {
                    let at = r.seq;
                    self.problem(format!("room {} delta {} after {at}", d.room_id, d.seq));
                }
                Some(r) => match apply_delta(r, d) {
                    Ok(next) => self.room = Some(next),
                    Err(e) => self.problem(format!("delta does not apply: {e}")),
                },
            },
            ServerMessage::ChatEvent {
                room_id, player_id, ..
            } => {
                if self.room.as_ref().map(|r| &r.room_id) != Some(room_id) {
                    self.problem(format!("chat for {room_id} while in {:?}", self.room.as_ref().map(|r| &r.room_id)));
                }
                if is_reply && self.player_id.as_ref() != Some(player_id) {
                    self.problem(format!("chat echo carries {player_id}"));
                }
            }
            ServerMessage::EngineEvents {
                session_id,
                scenario_id,
                view,
                ..
            } => {
                let asked = request.and_then(|(_, k)| k);
                if !is_reply {
                    self.problem(format!("unsolicited engine_events for {session_id}"));
                }
                let fresh = asked == Some("start_scenario");
                if fresh {
                    self.sessions_started += 1;
                    self.layout = FarmLayout::default();
                } else if self.session.as_ref().map(|s| &s.session_id) != Some(session_id) {
                    self.problem(format!("engine_events for foreign session {session_id}"));
                }
                if let Some(prev) = &self.session {
                    if !fresh && prev.view.node_id != view.node_id {
                        self.layout = FarmLayout::default();
                    }
                    if !prev.view.finished && view.finished && !fresh {
                        self.sessions_finished += 1;
                    }
                }
                self.session = Some(SessionView {
                    session_id: session_id.clone(),
                    scenario_id: scenario_id.clone(),
                    view: view.clone(),
                });
            }
            ServerMessage::ProfileUpdate(p) => {
                if self.player_id.as_ref() != Some(&p.player_id) {
                    self.problem(format!("profile of {}", p.player_id));
                }
            }
            ServerMessage::ActivityState { node_id, layout, .. } => {
                match &self.session {
                    Some(s) if &s.view.node_id == node_id => self.layout = layout.clone(),
                    _ => self.problem(format!("activity_state for node {node_id}")),
                }
            }
            ServerMessage::Error { code, detail } => {
                *self.errors.entry(code.clone()).or_insert(0) += 1;
                if !self.tolerated.contains(&code.as_str()) {
                    let asked = request.and_then(|(_, k)| k).unwrap_or("?");
                    self.problem(format!("error {code} for {asked}: {detail}"));
                }
            }
        }
    }

    pub fn room_id(&self) -> Option<&str> {
        self.room.as_ref().map(|r| r.room_id.as_str())
    }

    /// The scenario hosted by the current room, if any.
    pub fn hosted_scenario(&self) -> Option<&str> {
        let topo = self.topology.as_ref()?;
        topo.room(self.room_id()?)?.scenario_id.as_deref()
    }

    pub fn active_view(&self) -> Option<&NodeView> {
        self.session
            .as_ref()
            .map(|s| &s.view)
            .filter(|v| !v.finished)
    }
}

fn wind_farm_challenge(view: &NodeView) -> Option<WindFarmChallenge> {
    let act = view.activity.as_ref().filter(|a| a.kind == ActivityKind::WindFarm)?;
    serde_json::from_value(act.params.get("challenge")?.clone()).ok()
}

/// A legal input for the current node, or `None` if there is none.
pub fn random_legal_input(view: &BotView, rng: &mut ChaCha8Rng) -> Option<PlayerInput> {
    let v = view.active_view()?;
    match v.kind {
        NodeKind::Dialogue | NodeKind::Info => {
            let enabled: Vec<_> = v.choices.iter().filter(|c| c.enabled).collect();
            let c = enabled.choose(rng)?;
            Some(PlayerInput::Choose {
                node_id: v.node_id.clone(),
                choice_id: c.choice_id.clone(),
            })
        }
        NodeKind::Quiz => {
            let open: Vec<_> = v.questions.iter().filter(|q| !q.solved).collect();
            let q = open.choose(rng)?;
            let o = q.options.choose(rng)?;
            Some(PlayerInput::Answer {
                question_id: q.question_id.clone(),
                option_id: o.option_id.clone(),
            })
        }
        NodeKind::Activity => {
            let act = v.activity.as_ref()?;
            let result = match act.kind {
                ActivityKind::WindFarm => serde_json::json!({
                    "placements": view.layout.placements.iter().collect::<Vec<&Cell>>()
                }),
                ActivityKind::CarbonDay => {
                    let config = ActivityConfig::parse(&ActivityRef {
                        kind: act.kind,
                        params: act.params.clone(),
                        exits: BTreeMap::new(),
                    })
                    .ok()?;
                    random_activity_result(&config, rng)
                }
            };
            Some(PlayerInput::ActivityResult {
                node_id: v.node_id.clone(),
                result,
            })
        }
        NodeKind::Terminal => None,
    }
}

/// A grid edit the server will accept, if the session is at a wind-farm node.
pub fn random_legal_edit(view: &BotView, rng: &mut ChaCha8Rng) -> Option<LayoutAction> {
    let ch = wind_farm_challenge(view.active_view()?)?;
    for _ in 0..16 {
        let (x, y) = (rng.random_range(0..ch.width), rng.random_range(0..ch.height));
        let action = if rng.random_bool(0.7) {
            LayoutAction::Place { x, y }
        } else {
            LayoutAction::Remove { x, y }
        };
        if apply_action(&ch, &view.layout, action).is_ok() {
            return Some(action);
        }
    }
    None
}

/// One random action a correct client could take next.
pub fn random_action(view: &BotView, locales: &[String], rng: &mut ChaCha8Rng) -> ClientMessage {
    let mut options: Vec<(u32, ClientMessage)> = Vec::new();
    let Some(room_id) = view.room_id() else {
        let welcome = view
            .topology
            .as_ref()
            .map(|t| t.welcome_room().to_string())
            .unwrap_or_else(|| "welcome".into());
        return ClientMessage::EnterRoom { room_id: welcome };
    };
    options.push((
        1,
        ClientMessage::Chat {
            text: format!("hello #{}", rng.random_range(0..1000)),
        },
    ));
    options.push((
        2,
        ClientMessage::Move {
            x: rng.random_range(-100..=100) as f64 / 10.0,
            y: rng.random_range(-100..=100) as f64 / 10.0,
        },
    ));
    if let Some(spec) = view.topology.as_ref().and_then(|t| t.room(room_id)) {
        if let Some(target) = spec.portals.choose(rng) {
            options.push((2, ClientMessage::EnterRoom { room_id: target.clone() }));
        }
    }
    if let Some(sid) = view.hosted_scenario() {
        let weight = if view.active_view().is_some() { 1 } else { 6 };
        options.push((
            weight,
            ClientMessage::StartScenario {
                scenario_id: sid.to_string(),
                seed: rng.random_bool(0.5).then(|| rng.random_range(0..1_000_000)),
            },
        ));
    }
    if let Some(input) = random_legal_input(view, rng) {
        options.push((8, ClientMessage::Input(input)));
    }
    if let Some(action) = random_legal_edit(view, rng) {
        options.push((4, ClientMessage::ActivityEdit { action }));
    }
    if let Some(locale) = locales.choose(rng) {
        options.push((1, ClientMessage::SetLocale { locale: locale.clone() }));
    }
    let total: u32 = options.iter().map(|(w, _)| w).sum();
    let mut pick = rng.random_range(0..total);
    for (w, msg) in options {
        if pick < w {
            return msg;
        }
        pick -= w;
    }
    unreachable!("pick is below the weight total")
}
