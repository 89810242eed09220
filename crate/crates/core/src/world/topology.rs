//! Room layout of the world, loaded from `world.json`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::ContentPack;

pub const TOPOLOGY_FILE: &str = "world.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomKind {
    Welcome,
    Tutorial,
    ScenarioRoom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub name_key: String,
    pub kind: RoomKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_id: Option<String>,
    #[serde(default)]
    pub portals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldTopology {
    pub rooms: BTreeMap<String, RoomSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("world.json: {0}")]
    Format(String),
    #[error("expected exactly one {kind:?} room, found {found}")]
    RoomCount { kind: RoomKind, found: usize },
    #[error("scenario room `{0}` names no scenario")]
    MissingScenario(String),
    #[error("room `{room}` references unknown scenario `{scenario}`")]
    UnknownScenario { room: String, scenario: String },
    #[error("room `{room}` has a portal to unknown room `{target}`")]
    UnknownPortal { room: String, target: String },
    #[error("room `{room}` uses text key `{key}` missing from the default bundle")]
    UnknownTextKey { room: String, key: String },
}

impl WorldTopology {
    pub fn from_json(bytes: &[u8]) -> Result<Self, TopologyError> {
        serde_json::from_slice(bytes).map_err(|e| TopologyError::Format(e.to_string()))
    }

    pub fn room(&self, id: &str) -> Option<&RoomSpec> {
        self.rooms.get(id)
    }

    fn single(&self, kind: RoomKind) -> Result<&str, TopologyError> {
        let found: Vec<&String> = self
            .rooms
            .iter()
            .filter(|(_, r)| r.kind == kind)
            .map(|(id, _)| id)
            .collect();
        match found.as_slice() {
            [one] => Ok(one.as_str()),
            _ => Err(TopologyError::RoomCount {
                kind,
                found: found.len(),
            }),
        }
    }

    pub fn welcome_room(&self) -> &str {
        self.single(RoomKind::Welcome)
            .expect("checked topologies have one welcome room")
    }

    pub fn tutorial_room(&self) -> &str {
        self.single(RoomKind::Tutorial)
            .expect("checked topologies have one tutorial room")
    }

    pub fn check(&self, pack: &ContentPack) -> Result<(), TopologyError> {
        self.single(RoomKind::Welcome)?;
        self.single(RoomKind::Tutorial)?;
        let default = pack.bundles.get(pack.default_locale());
        for (id, room) in &self.rooms {
            if room.kind == RoomKind::ScenarioRoom && room.scenario_id.is_none() {
                return Err(TopologyError::MissingScenario(id.clone()));
            }
            if let Some(s) = &room.scenario_id {
                if pack.scenario(s).is_none() {
                    return Err(TopologyError::UnknownScenario {
                        room: id.clone(),
                        scenario: s.clone(),
                    });
                }
            }
            if let Some(target) = room.portals.iter().find(|p| !self.rooms.contains_key(*p)) {
                return Err(TopologyError::UnknownPortal {
                    room: id.clone(),
                    target: target.clone(),
                });
            }
            if !default.is_some_and(|b| b.contains_key(&room.name_key)) {
                return Err(TopologyError::UnknownTextKey {
                    room: id.clone(),
                    key: room.name_key.clone(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn topo(v: serde_json::Value) -> WorldTopology {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn counts_single_rooms() {
        let t = topo(json!({"rooms": {
            "a": {"name_key": "r.a", "kind": "welcome", "portals": ["b"]},
            "b": {"name_key": "r.b", "kind": "welcome"}
        }}));
        assert_eq!(
            t.single(RoomKind::Welcome),
            Err(TopologyError::RoomCount {
                kind: RoomKind::Welcome,
                found: 2
            })
        );
        assert_eq!(
            t.single(RoomKind::Tutorial),
            Err(TopologyError::RoomCount {
                kind: RoomKind::Tutorial,
                found: 0
            })
        );
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(WorldTopology::from_json(br#"{"rooms": {}, "extra": 1}"#).is_err());
    }
}
