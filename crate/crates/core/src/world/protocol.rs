//! Wire protocol: JSON text frames `{seq, type, body}`. Server frames that
//! answer a client frame also carry `re`, the client frame's `seq`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::room::{RoomDelta, RoomSnapshot};
use super::store::PlayerProfile;
use super::topology::WorldTopology;
use crate::engine::{EngineEvent, OutcomeSummary, PlayerInput};
use crate::scenario::NodeKind;
use crate::windfarm::{FarmLayout, LayoutAction, LayoutEvaluation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        display_name: String,
        locale: String,
    },
    EnterRoom {
        room_id: String,
    },
    StartScenario {
        scenario_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Input(PlayerInput),
    Chat {
        text: String,
    },
    Move {
        x: f64,
        y: f64,
    },
    /// Wind-farm grid edit; answered with `activity_state`.
    ActivityEdit {
        action: LayoutAction,
    },
    SetLocale {
        locale: String,
    },
}

impl ClientMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            ClientMessage::Hello { .. } => "hello",
            ClientMessage::EnterRoom { .. } => "enter_room",
            ClientMessage::StartScenario { .. } => "start_scenario",
            ClientMessage::Input(_) => "input",
            ClientMessage::Chat { .. } => "chat",
            ClientMessage::Move { .. } => "move",
            ClientMessage::ActivityEdit { .. } => "activity_edit",
            ClientMessage::SetLocale { .. } => "set_locale",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEnvelope {
    pub seq: u64,
    #[serde(flatten)]
    pub message: ClientMessage,
}

impl ClientEnvelope {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("client messages always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomName {
    pub room_id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpcView {
    pub npc_id: String,
    pub name: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceView {
    pub choice_id: String,
    pub text: String,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionView {
    pub option_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub question_id: String,
    pub text: String,
    pub options: Vec<OptionView>,
    pub solved: bool,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityView {
    pub kind: crate::scenario::ActivityKind,
    pub params: Json,
}

/// The current node, texts resolved in the player's locale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub node_id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<NpcView>,
    pub text: String,
    #[serde(default)]
    pub choices: Vec<ChoiceView>,
    #[serde(default)]
    pub questions: Vec<QuestionView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<ActivityView>,
    pub score: i64,
    pub carbon_total: f64,
    pub finished: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        player_id: String,
        locale: String,
        topology: WorldTopology,
        room_names: Vec<RoomName>,
        npcs: Vec<NpcView>,
        profile: PlayerProfile,
    },
    RoomSnapshot(RoomSnapshot),
    RoomDelta(RoomDelta),
    ChatEvent {
        room_id: String,
        player_id: String,
        display_name: String,
        text: String,
    },
    EngineEvents {
        session_id: String,
        scenario_id: String,
        events: Vec<EngineEvent>,
        /// Every text key named by `events`, resolved.
        texts: BTreeMap<String, String>,
        view: NodeView,
    },
    ProfileUpdate(PlayerProfile),
    ActivityState {
        node_id: String,
        layout: FarmLayout,
        evaluation: LayoutEvaluation,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl ServerMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            ServerMessage::Welcome { .. } => "welcome",
            ServerMessage::RoomSnapshot(_) => "room_snapshot",
            ServerMessage::RoomDelta(_) => "room_delta",
            ServerMessage::ChatEvent { .. } => "chat_event",
            ServerMessage::EngineEvents { .. } => "engine_events",
            ServerMessage::ProfileUpdate(_) => "profile_update",
            ServerMessage::ActivityState { .. } => "activity_state",
            ServerMessage::Error { .. } => "error",
        }
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        ServerMessage::Error {
            code: code.to_string(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerEnvelope {
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re: Option<u64>,
    #[serde(flatten)]
    pub message: ServerMessage,
}

impl ServerEnvelope {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }

    pub fn from_text(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// A client frame that failed to decode. `seq` is kept when it was readable
/// so the error reply can reference it.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeError {
    pub seq: Option<u64>,
    pub detail: String,
}

#[derive(Deserialize)]
struct RawEnvelope {
    seq: u64,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    body: Json,
}

pub fn decode_client(text: &str) -> Result<ClientEnvelope, DecodeError> {
    let raw: RawEnvelope = serde_json::from_str(text).map_err(|e| DecodeError {
        seq: serde_json::from_str::<Json>(text)
            .ok()
            .and_then(|v| v.get("seq").and_then(Json::as_u64)),
        detail: e.to_string(),
    })?;
    let message = serde_json::from_value(serde_json::json!({"type": raw.kind, "body": raw.body}))
        .map_err(|e| DecodeError {
            seq: Some(raw.seq),
            detail: format!("`{}`: {e}", raw.kind),
        })?;
    Ok(ClientEnvelope {
        seq: raw.seq,
        message,
    })
}
