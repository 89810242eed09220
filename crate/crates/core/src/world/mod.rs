//! Authoritative world state: connections, rooms, chat, scenario sessions
//! and persistence. Transport-agnostic; a transport feeds frames into
//! [`World::handle`] and receives outbound frames through [`Outbound`].
//!
//! Locking: a connection's state lock is taken first, then at most one room
//! lock, then recipients' outbound locks. Room broadcasts are delivered while
//! the room lock is held, so every occupant sees deltas in room order.

pub mod protocol;
pub mod room;
pub mod store;
pub mod topology;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::activity::ActivityConfig;
use crate::engine::{
    advance, start_session, summarize, EngineError, EngineEvent, EngineState, OutcomeSummary,
};
use crate::scenario::{resolve_text, ActivityKind, ContentPack, NodeKind, ScenarioDocument};
use crate::windfarm::{apply_action, evaluate_layout, FarmLayout, LayoutActionError};
use protocol::{
    decode_client, ActivityView, ChoiceView, ClientMessage, NodeView, NpcView, OptionView,
    QuestionView, RoomName, ServerEnvelope, ServerMessage,
};
use room::{Occupant, RoomSnapshot, RoomState};
use store::{rfc3339, DataStore, PlayerProfile, SessionHeader, SessionStatusTag, SessionWriter, StoreError};
use topology::WorldTopology;

pub use room::{apply_delta, RoomDelta};

pub type ConnId = u64;

pub trait Clock: Send + Sync {
    fn now_millis(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_millis(&self) -> u64 {
        chrono::Utc::now().timestamp_millis().max(0) as u64
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        ManualClock(AtomicU64::new(start))
    }

    pub fn advance(&self, millis: u64) {
        self.0.fetch_add(millis, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_millis(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Sink for one connection's outbound frames, called in send order.
pub trait Outbound: Send + Sync {
    fn send(&self, envelope: &ServerEnvelope);
}

/// Keeps every frame; for tests and harnesses.
#[derive(Debug, Default)]
pub struct RecordingOutbound {
    frames: Mutex<Vec<ServerEnvelope>>,
}

impl RecordingOutbound {
    pub fn take(&self) -> Vec<ServerEnvelope> {
        std::mem::take(&mut *self.frames.lock())
    }

    pub fn frames(&self) -> Vec<ServerEnvelope> {
        self.frames.lock().clone()
    }
}

impl Outbound for RecordingOutbound {
    fn send(&self, envelope: &ServerEnvelope) {
        self.frames.lock().push(envelope.clone());
    }
}

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub chat_limit: usize,
    pub chat_window_millis: u64,
    pub max_chat_len: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            chat_limit: 5,
            chat_window_millis: 1000,
            max_chat_len: 500,
        }
    }
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("send hello first")]
    NotAuthenticated,
    #[error("hello was already sent")]
    AlreadyAuthenticated,
    #[error("player `{0}` is already connected")]
    PlayerOnline(String),
    #[error("unknown room `{0}`")]
    UnknownRoom(String),
    #[error("room `{0}` is not reachable from here")]
    NotAdjacent(String),
    #[error("not in a room")]
    NotInRoom,
    #[error("scenario `{0}` is not hosted in this room")]
    NotHere(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("no active scenario session")]
    NoActiveSession,
    #[error("{code}: {0}", code = .0.code())]
    Engine(EngineError),
    #[error("more than {0} chat messages per second")]
    RateLimited(usize),
    #[error("locale `{0}` is not supported")]
    UnsupportedLocale(String),
    #[error("position must be finite")]
    InvalidPosition,
    #[error("chat text must be 1..={0} characters")]
    InvalidChat(usize),
    #[error("the current node is not a wind-farm activity")]
    NotInActivity,
    #[error("{0}")]
    Layout(LayoutActionError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl WorldError {
    pub fn code(&self) -> &'static str {
        match self {
            WorldError::NotAuthenticated => "NotAuthenticated",
            WorldError::AlreadyAuthenticated => "AlreadyAuthenticated",
            WorldError::PlayerOnline(_) => "PlayerOnline",
            WorldError::UnknownRoom(_) => "UnknownRoom",
            WorldError::NotAdjacent(_) => "NotAdjacent",
            WorldError::NotInRoom => "NotInRoom",
            WorldError::NotHere(_) => "NotHere",
            WorldError::UnknownScenario(_) => "UnknownScenario",
            WorldError::NoActiveSession => "NoActiveSession",
            WorldError::Engine(_) => "EngineError",
            WorldError::RateLimited(_) => "RateLimited",
            WorldError::UnsupportedLocale(_) => "UnsupportedLocale",
            WorldError::InvalidPosition => "InvalidPosition",
            WorldError::InvalidChat(_) => "InvalidChat",
            WorldError::NotInActivity => "NotInActivity",
            WorldError::Layout(e) => e.code(),
            WorldError::Store(e) => e.code(),
        }
    }
}

struct PeerOut {
    next_seq: u64,
    sink: Arc<dyn Outbound>,
}

struct Player {
    player_id: String,
    display_name: String,
    locale: String,
    room: Option<String>,
    x: f64,
    y: f64,
    profile: PlayerProfile,
}

struct ActiveSession {
    session_id: String,
    doc: Arc<ScenarioDocument>,
    state: EngineState,
    log: Vec<EngineEvent>,
    writer: Option<SessionWriter>,
    layout: FarmLayout,
    layout_node: String,
    outcome: Option<OutcomeSummary>,
}

#[derive(Default)]
struct ConnState {
    player: Option<Player>,
    last_client_seq: u64,
    chat_times: VecDeque<u64>,
    session: Option<ActiveSession>,
    closed: bool,
}

struct Peer {
    out: Mutex<PeerOut>,
    state: Mutex<ConnState>,
}

impl Peer {
    fn send(&self, re: Option<u64>, message: ServerMessage) {
        let mut out = self.out.lock();
        out.next_seq += 1;
        let env = ServerEnvelope {
            seq: out.next_seq,
            re,
            message,
        };
        out.sink.send(&env);
    }
}

pub struct World {
    pack: Arc<ContentPack>,
    docs: BTreeMap<String, Arc<ScenarioDocument>>,
    topology: WorldTopology,
    rooms: BTreeMap<String, Mutex<RoomState>>,
    peers: RwLock<HashMap<ConnId, Arc<Peer>>>,
    by_player: RwLock<HashMap<String, Arc<Peer>>>,
    online: Mutex<HashSet<String>>,
    store: DataStore,
    rng: Mutex<ChaCha8Rng>,
    clock: Arc<dyn Clock>,
    next_conn: AtomicU64,
    config: WorldConfig,
}

/// Lowercase ASCII slug of a display name, used as the player id.
pub fn player_id_for(display_name: &str) -> String {
    let mut out = String::new();
    for c in display_name.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    let out = out.trim_end_matches('-').to_string();
    if out.is_empty() {
        "player".to_string()
    } else {
        out
    }
}

impl World {
    /// `boot_seed` seeds the generator that draws session seeds and ids.
    pub fn new(
        pack: ContentPack,
        topology: WorldTopology,
        store: DataStore,
        boot_seed: u64,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, topology::TopologyError> {
        topology.check(&pack)?;
        let rooms = topology
            .rooms
            .keys()
            .map(|id| (id.clone(), Mutex::new(RoomState::new(id.clone()))))
            .collect();
        let docs = pack
            .scenarios
            .iter()
            .map(|d| (d.id.clone(), Arc::new(d.clone())))
            .collect();
        Ok(World {
            pack: Arc::new(pack),
            docs,
            topology,
            rooms,
            peers: RwLock::new(HashMap::new()),
            by_player: RwLock::new(HashMap::new()),
            online: Mutex::new(HashSet::new()),
            store,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(boot_seed)),
            clock,
            next_conn: AtomicU64::new(1),
            config: WorldConfig::default(),
        })
    }

    pub fn with_config(mut self, config: WorldConfig) -> Self {
        self.config = config;
        self
    }

    pub fn pack(&self) -> &ContentPack {
        &self.pack
    }

    pub fn topology(&self) -> &WorldTopology {
        &self.topology
    }

    pub fn store(&self) -> &DataStore {
        &self.store
    }

    pub fn connect(&self, sink: Arc<dyn Outbound>) -> ConnId {
        let id = self.next_conn.fetch_add(1, Ordering::SeqCst);
        let peer = Arc::new(Peer {
            out: Mutex::new(PeerOut { next_seq: 0, sink }),
            state: Mutex::new(ConnState::default()),
        });
        self.peers.write().insert(id, peer);
        id
    }

    pub fn connection_count(&self) -> usize {
        self.peers.read().len()
    }

    pub fn room_snapshot(&self, room_id: &str) -> Result<RoomSnapshot, WorldError> {
        self.rooms
            .get(room_id)
            .map(|r| r.lock().snapshot())
            .ok_or_else(|| WorldError::UnknownRoom(room_id.to_string()))
    }

    /// Processes one client frame. Replies go out through the connection's sink.
    pub fn handle(&self, conn: ConnId, text: &str) {
        let Some(peer) = self.peers.read().get(&conn).cloned() else {
            return;
        };
        let mut st = peer.state.lock();
        if st.closed {
            return;
        }
        let env = match decode_client(text) {
            Ok(env) => env,
            Err(e) => {
                peer.send(e.seq, ServerMessage::error("BadMessage", e.detail));
                return;
            }
        };
        if env.seq <= st.last_client_seq {
            peer.send(
                Some(env.seq),
                ServerMessage::error(
                    "BadSeq",
                    format!("seq {} is not above {}", env.seq, st.last_client_seq),
                ),
            );
            return;
        }
        st.last_client_seq = env.seq;
        let re = env.seq;
        if let Err(e) = self.dispatch(&peer, &mut st, re, env.message) {
            peer.send(Some(re), ServerMessage::error(e.code(), e.to_string()));
        }
    }

    fn dispatch(
        &self,
        peer: &Arc<Peer>,
        st: &mut ConnState,
        re: u64,
        msg: ClientMessage,
    ) -> Result<(), WorldError> {
        if st.player.is_none() && !matches!(msg, ClientMessage::Hello { .. }) {
            return Err(WorldError::NotAuthenticated);
        }
        match msg {
            ClientMessage::Hello {
                display_name,
                locale,
            } => self.hello(peer, st, re, &display_name, &locale),
            ClientMessage::EnterRoom { room_id } => self.enter_room(peer, st, re, &room_id),
            ClientMessage::StartScenario { scenario_id, seed } => {
                self.start_scenario(peer, st, re, &scenario_id, seed)
            }
            ClientMessage::Input(input) => self.input(peer, st, re, &input),
            ClientMessage::Chat { text } => self.chat(st, re, &text),
            ClientMessage::Move { x, y } => self.move_to(st, re, x, y),
            ClientMessage::ActivityEdit { action } => {
                let session = active(st)?;
                let node = session
                    .doc
                    .node(&session.state.current_node)
                    .ok_or(WorldError::NotInActivity)?;
                let config = match (&node.kind, &node.activity) {
                    (NodeKind::Activity, Some(a)) if a.kind == ActivityKind::WindFarm => {
                        ActivityConfig::parse(a).map_err(|_| WorldError::NotInActivity)?
                    }
                    _ => return Err(WorldError::NotInActivity),
                };
                let ActivityConfig::WindFarm(params) = config else {
                    return Err(WorldError::NotInActivity);
                };
                if session.layout_node != session.state.current_node {
                    session.layout = FarmLayout::default();
                    session.layout_node = session.state.current_node.clone();
                }
                let layout = apply_action(&params.challenge, &session.layout, action)
                    .map_err(WorldError::Layout)?;
                let evaluation = evaluate_layout(&params.challenge, &layout)
                    .expect("checked challenges always evaluate");
                session.layout = layout.clone();
                peer.send(
                    Some(re),
                    ServerMessage::ActivityState {
                        node_id: session.state.current_node.clone(),
                        layout,
                        evaluation,
                    },
                );
                Ok(())
            }
            ClientMessage::SetLocale { locale } => {
                if !self.pack.supports_locale(&locale) {
                    return Err(WorldError::UnsupportedLocale(locale));
                }
                let player = st.player.as_mut().expect("authenticated");
                player.locale = locale.clone();
                player.profile.locale = locale;
                self.store.persist_profile(&player.profile)?;
                peer.send(Some(re), self.welcome(player));
                if let Some(s) = &st.session {
                    let locale = &st.player.as_ref().expect("authenticated").locale;
                    peer.send(Some(re), self.engine_message(s, &[], locale));
                }
                Ok(())
            }
        }
    }

    fn welcome(&self, player: &Player) -> ServerMessage {
        let locale = &player.locale;
        ServerMessage::Welcome {
            player_id: player.player_id.clone(),
            locale: locale.clone(),
            topology: self.topology.clone(),
            room_names: self
                .topology
                .rooms
                .iter()
                .map(|(id, r)| RoomName {
                    room_id: id.clone(),
                    name: self.text(&r.name_key, locale),
                })
                .collect(),
            npcs: self
                .pack
                .manifest
                .npcs
                .keys()
                .filter_map(|id| self.npc_view(id, locale))
                .collect(),
            profile: player.profile.clone(),
        }
    }

    fn text(&self, key: &str, locale: &str) -> String {
        resolve_text(&self.pack, key, locale)
            .map(str::to_string)
            .unwrap_or_else(|_| key.to_string())
    }

    fn npc_view(&self, npc_id: &str, locale: &str) -> Option<NpcView> {
        let npc = self.pack.npc(npc_id)?;
        Some(NpcView {
            npc_id: npc_id.to_string(),
            name: self.text(&npc.name_key, locale),
            role: self.text(&npc.role_key, locale),
        })
    }

    fn hello(
        &self,
        peer: &Arc<Peer>,
        st: &mut ConnState,
        re: u64,
        display_name: &str,
        locale: &str,
    ) -> Result<(), WorldError> {
        if st.player.is_some() {
            return Err(WorldError::AlreadyAuthenticated);
        }
        if !self.pack.supports_locale(locale) {
            return Err(WorldError::UnsupportedLocale(locale.to_string()));
        }
        let display_name = display_name.trim();
        let player_id = player_id_for(display_name);
        if !self.online.lock().insert(player_id.clone()) {
            return Err(WorldError::PlayerOnline(player_id));
        }
        let profile = match self.store.load_profile(&player_id) {
            Ok(mut p) => {
                p.display_name = display_name.to_string();
                p.locale = locale.to_string();
                p
            }
            Err(StoreError::UnknownPlayer(_)) => PlayerProfile::new(&player_id, display_name, locale),
            Err(e) => {
                self.online.lock().remove(&player_id);
                return Err(e.into());
            }
        };
        if let Err(e) = self.store.persist_profile(&profile) {
            self.online.lock().remove(&player_id);
            return Err(e.into());
        }
        self.by_player.write().insert(player_id.clone(), peer.clone());
        let player = Player {
            player_id,
            display_name: display_name.to_string(),
            locale: locale.to_string(),
            room: None,
            x: 0.0,
            y: 0.0,
            profile,
        };
        peer.send(Some(re), self.welcome(&player));
        st.player = Some(player);
        Ok(())
    }

    fn room(&self, id: &str) -> Result<&Mutex<RoomState>, WorldError> {
        self.rooms
            .get(id)
            .ok_or_else(|| WorldError::UnknownRoom(id.to_string()))
    }

    /// Sends `message` to every occupant; `origin` gets it with `re` set.
    fn broadcast(&self, room: &RoomState, origin: Option<(&str, u64)>, message: ServerMessage) {
        let peers = self.by_player.read();
        for id in room.occupants.keys() {
            if let Some(p) = peers.get(id) {
                let re = origin.and_then(|(o, re)| (o == id).then_some(re));
                p.send(re, message.clone());
            }
        }
    }

    fn enter_room(
        &self,
        peer: &Arc<Peer>,
        st: &mut ConnState,
        re: u64,
        room_id: &str,
    ) -> Result<(), WorldError> {
        let target = self.room(room_id)?;
        let player = st.player.as_mut().expect("authenticated");
        match &player.room {
            Some(current) if current == room_id => {
                peer.send(Some(re), ServerMessage::RoomSnapshot(target.lock().snapshot()));
                return Ok(());
            }
            Some(current) => {
                let spec = self.topology.room(current).expect("rooms come from the topology");
                if !spec.portals.iter().any(|p| p == room_id) {
                    return Err(WorldError::NotAdjacent(room_id.to_string()));
                }
            }
            None if room_id != self.topology.welcome_room() => {
                return Err(WorldError::NotAdjacent(room_id.to_string()));
            }
            None => {}
        }
        if let Some(current) = player.room.take() {
            let mut old = self.room(&current)?.lock();
            if let Some(d) = old.leave(&player.player_id) {
                self.broadcast(&old, None, ServerMessage::RoomDelta(d));
            }
        }
        player.x = 0.0;
        player.y = 0.0;
        let mut room = target.lock();
        let delta = room.join(Occupant {
            player_id: player.player_id.clone(),
            display_name: player.display_name.clone(),
            x: player.x,
            y: player.y,
        });
        let peers = self.by_player.read();
        for id in room.occupants.keys().filter(|id| **id != player.player_id) {
            if let Some(p) = peers.get(id) {
                p.send(None, ServerMessage::RoomDelta(delta.clone()));
            }
        }
        peer.send(Some(re), ServerMessage::RoomSnapshot(room.snapshot()));
        player.room = Some(room_id.to_string());
        Ok(())
    }

    fn chat(&self, st: &mut ConnState, re: u64, text: &str) -> Result<(), WorldError> {
        let player = st.player.as_ref().expect("authenticated");
        let room_id = player.room.clone().ok_or(WorldError::NotInRoom)?;
        let text = text.trim();
        if text.is_empty() || text.chars().count() > self.config.max_chat_len {
            return Err(WorldError::InvalidChat(self.config.max_chat_len));
        }
        let now = self.clock.now_millis();
        while st
            .chat_times
            .front()
            .is_some_and(|t| now.saturating_sub(*t) >= self.config.chat_window_millis)
        {
            st.chat_times.pop_front();
        }
        if st.chat_times.len() >= self.config.chat_limit {
            return Err(WorldError::RateLimited(self.config.chat_limit));
        }
        st.chat_times.push_back(now);
        let room = self.room(&room_id)?.lock();
        self.broadcast(
            &room,
            Some((&player.player_id, re)),
            ServerMessage::ChatEvent {
                room_id: room_id.clone(),
                player_id: player.player_id.clone(),
                display_name: player.display_name.clone(),
                text: text.to_string(),
            },
        );
        Ok(())
    }

    fn move_to(&self, st: &mut ConnState, re: u64, x: f64, y: f64) -> Result<(), WorldError> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(WorldError::InvalidPosition);
        }
        let player = st.player.as_mut().expect("authenticated");
        let room_id = player.room.clone().ok_or(WorldError::NotInRoom)?;
        let mut room = self.room(&room_id)?.lock();
        let delta = room
            .move_to(&player.player_id, x, y)
            .ok_or(WorldError::NotInRoom)?;
        player.x = x;
        player.y = y;
        self.broadcast(
            &room,
            Some((&player.player_id, re)),
            ServerMessage::RoomDelta(delta),
        );
        Ok(())
    }

    fn next_id(&self) -> (u64, String) {
        let mut rng = self.rng.lock();
        (rng.next_u64(), format!("{:016x}", rng.next_u64()))
    }

    fn close_session(
        &self,
        session: &mut ActiveSession,
        status: SessionStatusTag,
    ) -> Result<(), StoreError> {
        match session.writer.take() {
            Some(w) => {
                let ended = rfc3339(self.clock.now_millis());
                w.close(ended, status, session.outcome.clone()).map(drop)
            }
            None => Ok(()),
        }
    }

    fn start_scenario(
        &self,
        peer: &Arc<Peer>,
        st: &mut ConnState,
        re: u64,
        scenario_id: &str,
        seed: Option<u64>,
    ) -> Result<(), WorldError> {
        let doc = self
            .docs
            .get(scenario_id)
            .cloned()
            .ok_or_else(|| WorldError::UnknownScenario(scenario_id.to_string()))?;
        let player = st.player.as_ref().expect("authenticated");
        let here = player
            .room
            .as_deref()
            .and_then(|r| self.topology.room(r))
            .and_then(|r| r.scenario_id.as_deref());
        if here != Some(scenario_id) {
            return Err(WorldError::NotHere(scenario_id.to_string()));
        }
        let (drawn, session_id) = self.next_id();
        let seed = seed.unwrap_or(drawn);
        let (state, events) =
            start_session(&doc, seed, &player.locale).map_err(WorldError::Engine)?;
        let now = self.clock.now_millis();
        let mut writer = self.store.create_session(
            SessionHeader {
                session_id: session_id.clone(),
                player_id: player.player_id.clone(),
                scenario_id: scenario_id.to_string(),
                seed,
                locale: player.locale.clone(),
                started_at: rfc3339(now),
            },
            now,
        )?;
        writer.write_events(&events)?;
        if let Some(mut old) = st.session.take() {
            self.close_session(&mut old, SessionStatusTag::Abandoned)?;
        }
        let session = ActiveSession {
            session_id,
            doc,
            state,
            log: events.clone(),
            writer: Some(writer),
            layout: FarmLayout::default(),
            layout_node: String::new(),
            outcome: None,
        };
        let locale = &st.player.as_ref().expect("authenticated").locale;
        peer.send(Some(re), self.engine_message(&session, &events, locale));
        st.session = Some(session);
        Ok(())
    }

    fn input(
        &self,
        peer: &Arc<Peer>,
        st: &mut ConnState,
        re: u64,
        input: &crate::engine::PlayerInput,
    ) -> Result<(), WorldError> {
        let session = active(st)?;
        let (next, events) =
            advance(&session.state, &session.doc, input).map_err(WorldError::Engine)?;
        if let Some(w) = session.writer.as_mut() {
            w.write_input(input)?;
            w.write_events(&events)?;
        }
        session.state = next;
        session.log.extend(events.iter().cloned());
        let finished = session.state.is_finished();
        if finished {
            let outcome = summarize(&session.state, &session.log).map_err(WorldError::Engine)?;
            session.outcome = Some(outcome);
            self.close_session(session, SessionStatusTag::Finished)?;
        }
        let session = st.session.as_ref().expect("checked above");
        let player = st.player.as_mut().expect("authenticated");
        peer.send(Some(re), self.engine_message(session, &events, &player.locale));
        if let Some(outcome) = session.outcome.as_ref().filter(|_| finished) {
            player
                .profile
                .record_outcome(&session.doc.id, outcome);
            self.store.persist_profile(&player.profile)?;
            peer.send(Some(re), ServerMessage::ProfileUpdate(player.profile.clone()));
        }
        Ok(())
    }

    fn engine_message(
        &self,
        session: &ActiveSession,
        events: &[EngineEvent],
        locale: &str,
    ) -> ServerMessage {
        let texts = events
            .iter()
            .filter_map(|e| e.payload.text_key.as_ref())
            .map(|k| (k.clone(), self.text(k, locale)))
            .collect();
        ServerMessage::EngineEvents {
            session_id: session.session_id.clone(),
            scenario_id: session.doc.id.clone(),
            events: events.to_vec(),
            texts,
            view: self.node_view(session, locale),
        }
    }

    fn node_view(&self, session: &ActiveSession, locale: &str) -> NodeView {
        let state = &session.state;
        let node = session
            .doc
            .node(&state.current_node)
            .expect("engine only enters declared nodes");
        let t = |k: &str| self.text(k, locale);
        NodeView {
            node_id: state.current_node.clone(),
            kind: node.kind,
            speaker: node
                .speaker
                .as_deref()
                .and_then(|s| self.npc_view(s, locale)),
            text: t(&node.text_key),
            choices: node
                .choices
                .iter()
                .map(|c| ChoiceView {
                    choice_id: c.id.clone(),
                    text: t(&c.text_key),
                    enabled: c.is_enabled(&state.variables),
                })
                .collect(),
            questions: node
                .questions
                .iter()
                .map(|q| QuestionView {
                    question_id: q.id.clone(),
                    text: t(&q.text_key),
                    options: q
                        .options
                        .iter()
                        .map(|o| OptionView {
                            option_id: o.option_id.clone(),
                            text: t(&o.text_key),
                        })
                        .collect(),
                    solved: state.quiz_solved.contains(&q.id),
                    attempts: state.quiz_attempts.get(&q.id).copied().unwrap_or(0),
                })
                .collect(),
            activity: node.activity.as_ref().map(|a| ActivityView {
                kind: a.kind,
                params: a.params.clone(),
            }),
            score: state.score(),
            carbon_total: state.carbon_ledger_total,
            finished: state.is_finished(),
            outcome: session.outcome.clone(),
        }
    }

    /// Leaves the room, closes any open session and forgets the connection.
    pub fn disconnect(&self, conn: ConnId) {
        let Some(peer) = self.peers.write().remove(&conn) else {
            return;
        };
        let mut st = peer.state.lock();
        st.closed = true;
        if let Some(mut s) = st.session.take() {
            // Nothing to report to on a closed connection.
            let _ = self.close_session(&mut s, SessionStatusTag::Abandoned);
        }
        if let Some(player) = st.player.take() {
            if let Some(room_id) = &player.room {
                if let Ok(room) = self.room(room_id) {
                    let mut room = room.lock();
                    if let Some(d) = room.leave(&player.player_id) {
                        self.broadcast(&room, None, ServerMessage::RoomDelta(d));
                    }
                }
            }
            self.by_player.write().remove(&player.player_id);
            self.online.lock().remove(&player.player_id);
        }
    }

    /// Closes every open session record. Returns how many were flushed and
    /// the errors of those that could not be.
    pub fn shutdown(&self) -> (usize, Vec<StoreError>) {
        let peers: Vec<Arc<Peer>> = self.peers.read().values().cloned().collect();
        let mut flushed = 0;
        let mut errors = Vec::new();
        for peer in peers {
            let mut st = peer.state.lock();
            if let Some(s) = st.session.as_mut().filter(|s| s.writer.is_some()) {
                match self.close_session(s, SessionStatusTag::Interrupted) {
                    Ok(()) => flushed += 1,
                    Err(e) => errors.push(e),
                }
            }
        }
        (flushed, errors)
    }
}

fn active(st: &mut ConnState) -> Result<&mut ActiveSession, WorldError> {
    st.session
        .as_mut()
        .filter(|s| !s.state.is_finished())
        .ok_or(WorldError::NoActiveSession)
}

#[cfg(test)]
mod tests;
