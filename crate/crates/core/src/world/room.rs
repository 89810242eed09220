//! Room presence state, snapshots and deltas.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occupant {
    pub player_id: String,
    pub display_name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub player_id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSnapshot {
    pub room_id: String,
    pub seq: u64,
    /// Sorted by player id.
    pub occupants: Vec<Occupant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomDelta {
    pub room_id: String,
    pub seq: u64,
    #[serde(default)]
    pub joins: Vec<Occupant>,
    #[serde(default)]
    pub leaves: Vec<String>,
    #[serde(default)]
    pub moves: Vec<Position>,
}

impl RoomDelta {
    pub fn is_empty(&self) -> bool {
        self.joins.is_empty() && self.leaves.is_empty() && self.moves.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeltaError {
    #[error("delta {delta} is not newer than snapshot {snapshot}")]
    StaleDelta { snapshot: u64, delta: u64 },
    #[error("delta for room `{delta}` applied to snapshot of `{snapshot}`")]
    WrongRoom { snapshot: String, delta: String },
}

/// Authoritative presence state of one room. `seq` counts applied deltas.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoomState {
    pub room_id: String,
    pub seq: u64,
    pub occupants: BTreeMap<String, Occupant>,
}

impl RoomState {
    pub fn new(room_id: impl Into<String>) -> Self {
        RoomState {
            room_id: room_id.into(),
            ..RoomState::default()
        }
    }

    pub fn snapshot(&self) -> RoomSnapshot {
        RoomSnapshot {
            room_id: self.room_id.clone(),
            seq: self.seq,
            occupants: self.occupants.values().cloned().collect(),
        }
    }

    pub fn member_ids(&self) -> BTreeSet<String> {
        self.occupants.keys().cloned().collect()
    }

    fn next(&mut self) -> RoomDelta {
        self.seq += 1;
        RoomDelta {
            room_id: self.room_id.clone(),
            seq: self.seq,
            joins: Vec::new(),
            leaves: Vec::new(),
            moves: Vec::new(),
        }
    }

    pub fn join(&mut self, occupant: Occupant) -> RoomDelta {
        let mut d = self.next();
        self.occupants
            .insert(occupant.player_id.clone(), occupant.clone());
        d.joins.push(occupant);
        d
    }

    /// `None` when the player is not here.
    pub fn leave(&mut self, player_id: &str) -> Option<RoomDelta> {
        self.occupants.remove(player_id)?;
        let mut d = self.next();
        d.leaves.push(player_id.to_string());
        Some(d)
    }

    pub fn move_to(&mut self, player_id: &str, x: f64, y: f64) -> Option<RoomDelta> {
        let o = self.occupants.get_mut(player_id)?;
        o.x = x;
        o.y = y;
        let mut d = self.next();
        d.moves.push(Position {
            player_id: player_id.to_string(),
            x,
            y,
        });
        Some(d)
    }
}

/// Folds a delta into a snapshot: joins, then moves, then leaves. An empty
/// delta is the identity.
pub fn apply_delta(snapshot: &RoomSnapshot, delta: &RoomDelta) -> Result<RoomSnapshot, DeltaError> {
    if delta.is_empty() {
        return Ok(snapshot.clone());
    }
    if delta.room_id != snapshot.room_id {
        return Err(DeltaError::WrongRoom {
            snapshot: snapshot.room_id.clone(),
            delta: delta.room_id.clone(),
        });
    }
    if delta.seq <= snapshot.seq {
        return Err(DeltaError::StaleDelta {
            snapshot: snapshot.seq,
            delta: delta.seq,
        });
    }
    let mut map: BTreeMap<String, Occupant> = snapshot
        .occupants
        .iter()
        .map(|o| (o.player_id.clone(), o.clone()))
        .collect();
    for j in &delta.joins {
        map.insert(j.player_id.clone(), j.clone());
    }
    for m in &delta.moves {
        if let Some(o) = map.get_mut(&m.player_id) {
            o.x = m.x;
            o.y = m.y;
        }
    }
    for l in &delta.leaves {
        map.remove(l);
    }
    Ok(RoomSnapshot {
        room_id: snapshot.room_id.clone(),
        seq: delta.seq,
        occupants: map.into_values().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn occ(id: &str) -> Occupant {
        Occupant {
            player_id: id.into(),
            display_name: id.to_uppercase(),
            x: 0.0,
            y: 0.0,
        }
    }

    #[test]
    fn empty_room_snapshot() {
        let r = RoomState::new("hall");
        assert!(r.snapshot().occupants.is_empty());
    }

    #[test]
    fn empty_delta_is_identity() {
        let mut r = RoomState::new("hall");
        r.join(occ("a"));
        let s = r.snapshot();
        let d = RoomDelta {
            room_id: "hall".into(),
            seq: 0,
            joins: vec![],
            leaves: vec![],
            moves: vec![],
        };
        assert_eq!(apply_delta(&s, &d).unwrap(), s);
    }

    #[test]
    fn join_then_leave_restores_occupants() {
        let mut r = RoomState::new("hall");
        r.join(occ("a"));
        let before = r.snapshot();
        let d1 = r.join(occ("b"));
        let d2 = r.leave("b").unwrap();
        let after = apply_delta(&apply_delta(&before, &d1).unwrap(), &d2).unwrap();
        assert_eq!(after.occupants, before.occupants);
        assert_eq!(after, r.snapshot());
    }

    #[test]
    fn join_move_leave_from_empty() {
        let mut r = RoomState::new("hall");
        let mut s = r.snapshot();
        let deltas = [
            r.join(occ("a")),
            r.join(occ("b")),
            r.move_to("a", 2.0, 3.5).unwrap(),
            r.leave("b").unwrap(),
        ];
        for d in &deltas {
            s = apply_delta(&s, d).unwrap();
        }
        assert_eq!(s, r.snapshot());
        assert_eq!(s.occupants[0].x, 2.0);
    }

    #[test]
    fn stale_delta_rejected() {
        let mut r = RoomState::new("hall");
        let d = r.join(occ("a"));
        let s = r.snapshot();
        assert_eq!(
            apply_delta(&s, &d),
            Err(DeltaError::StaleDelta {
                snapshot: 1,
                delta: 1
            })
        );
    }

    #[test]
    fn fifty_occupants_are_unique() {
        let mut r = RoomState::new("hall");
        for i in 0..50 {
            r.join(occ(&format!("p{i:02}")));
        }
        let s = r.snapshot();
        assert_eq!(s.occupants.len(), 50);
        let ids: BTreeSet<_> = s.occupants.iter().map(|o| &o.player_id).collect();
        assert_eq!(ids.len(), 50);
    }

    fn random_ops(seed: u64, len: usize) -> (RoomState, Vec<(RoomSnapshot, RoomDelta)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = RoomState::new("hall");
        let mut out = Vec::new();
        for _ in 0..len {
            let before = r.snapshot();
            let id = format!("p{}", rng.random_range(0..6));
            let d = match rng.random_range(0..3) {
                0 => Some(r.join(occ(&id))),
                1 => r.move_to(&id, rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
                _ => r.leave(&id),
            };
            if let Some(d) = d {
                out.push((before, d));
            }
        }
        (r, out)
    }

    #[test]
    fn thousand_random_sequences_fold_to_snapshot() {
        for seed in 0..1000 {
            let (r, ops) = random_ops(seed, 30);
            let mut s = RoomState::new("hall").snapshot();
            for (before, d) in &ops {
                assert_eq!(&s, before, "seed {seed}");
                s = apply_delta(&s, d).unwrap();
            }
            assert_eq!(s, r.snapshot(), "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn fold_from_any_checkpoint(seed in any::<u64>(), cut in 0usize..40) {
            let (r, ops) = random_ops(seed, 40);
            let cut = cut.min(ops.len());
            let mut s = if cut == ops.len() { r.snapshot() } else { ops[cut].0.clone() };
            for (_, d) in &ops[cut..] {
                s = apply_delta(&s, d).unwrap();
            }
            prop_assert_eq!(s, r.snapshot());
        }
    }
}
