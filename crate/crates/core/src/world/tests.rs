use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;

use super::protocol::{ClientEnvelope, ClientMessage, ServerEnvelope, ServerMessage};
use super::store::{load_session_record, verify_replay, SessionStatusTag};
use super::*;
use crate::engine::PlayerInput;
use crate::scenario::{fixtures, parse_scenario, PackManifest};
use crate::windfarm::LayoutAction;

fn farm_doc() -> ScenarioDocument {
    let open = |v: f64| json!({"wind_speed": v, "zone": "open"});
    let v = json!({
        "schema_version": 1, "id": "farm", "default_locale": "en",
        "supported_locales": ["en", "pt"], "title_key": "farm.title",
        "entry_node": "site",
        "nodes": {
            "site": {"kind": "activity", "text_key": "farm.site", "activity": {
                "kind": "wind_farm",
                "params": {"challenge": {
                    "width": 2, "height": 1,
                    "cells": [[open(12.0), {"wind_speed": 6.0, "zone": "protected"}]],
                    "budget": 100.0, "turbine_cost": 40.0, "max_turbines": 2
                }, "points": 10},
                "exits": {"pass": "won", "fail": "lost"}
            }},
            "won": {"kind": "terminal", "text_key": "farm.won", "outcome_key": "farm.o.won"},
            "lost": {"kind": "terminal", "text_key": "farm.lost", "outcome_key": "farm.o.lost"}
        }
    });
    parse_scenario(&serde_json::to_vec(&v).unwrap()).unwrap()
}

fn pack() -> ContentPack {
    let mut mini = fixtures::two_node();
    mini.supported_locales.push("pt".into());
    let en: BTreeMap<String, String> = [
        ("room.welcome", "Welcome Area"),
        ("room.tutorial", "Tutorial"),
        ("room.mini", "Mini room"),
        ("room.farm", "Farm room"),
        ("mini.start", "Hello there"),
        ("mini.c1", "Go on"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    let pt: BTreeMap<String, String> = [("room.welcome", "Área de boas-vindas")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    ContentPack {
        manifest: PackManifest {
            schema_version: 1,
            id: "test".into(),
            default_locale: "en".into(),
            locales: vec!["en".into(), "pt".into()],
            scenarios: vec![],
            npcs: BTreeMap::new(),
        },
        scenarios: vec![mini, farm_doc()],
        bundles: BTreeMap::from([("en".to_string(), en), ("pt".to_string(), pt)]),
    }
}

fn topology() -> WorldTopology {
    serde_json::from_value(json!({"rooms": {
        "welcome": {"name_key": "room.welcome", "kind": "welcome", "portals": ["tutorial", "mini_room", "farm_room"]},
        "tutorial": {"name_key": "room.tutorial", "kind": "tutorial", "scenario_id": "mini", "portals": ["welcome"]},
        "mini_room": {"name_key": "room.mini", "kind": "scenario_room", "scenario_id": "mini", "portals": ["welcome"]},
        "farm_room": {"name_key": "room.farm", "kind": "scenario_room", "scenario_id": "farm", "portals": ["welcome"]}
    }}))
    .unwrap()
}

struct Harness {
    world: World,
    clock: Arc<ManualClock>,
    _dir: tempfile::TempDir,
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(1_700_000_000_000));
        let store = DataStore::open(dir.path()).unwrap();
        let world = World::new(pack(), topology(), store, 11, clock.clone()).unwrap();
        Harness {
            world,
            clock,
            _dir: dir,
        }
    }

    fn client(&self) -> Client<'_> {
        let out = Arc::new(RecordingOutbound::default());
        let conn = self.world.connect(out.clone());
        Client {
            world: &self.world,
            conn,
            out,
            seq: 0,
        }
    }
}

struct Client<'w> {
    world: &'w World,
    conn: ConnId,
    out: Arc<RecordingOutbound>,
    seq: u64,
}

impl Client<'_> {
    fn send(&mut self, message: ClientMessage) -> Vec<ServerEnvelope> {
        self.seq += 1;
        let env = ClientEnvelope {
            seq: self.seq,
            message,
        };
        self.world.handle(self.conn, &env.to_text());
        self.out.take()
    }

    fn hello(&mut self, name: &str) -> Vec<ServerEnvelope> {
        self.send(ClientMessage::Hello {
            display_name: name.into(),
            locale: "en".into(),
        })
    }

    fn enter(&mut self, room: &str) -> Vec<ServerEnvelope> {
        self.send(ClientMessage::EnterRoom {
            room_id: room.into(),
        })
    }

    fn join(&mut self, name: &str, rooms: &[&str]) {
        self.hello(name);
        for r in rooms {
            let got = self.enter(r);
            assert!(
                matches!(got.last().unwrap().message, ServerMessage::RoomSnapshot(_)),
                "{got:?}"
            );
        }
    }
}

fn error_code(frames: &[ServerEnvelope]) -> Option<&str> {
    frames.iter().find_map(|f| match &f.message {
        ServerMessage::Error { code, .. } => Some(code.as_str()),
        _ => None,
    })
}

#[test]
fn hello_then_welcome_room() {
    let h = Harness::new();
    let mut c = h.client();
    let w = c.hello("Ana Sousa");
    assert_eq!(w.len(), 1);
    let ServerMessage::Welcome { player_id, room_names, .. } = &w[0].message else {
        panic!("{w:?}")
    };
    assert_eq!(player_id, "ana-sousa");
    assert_eq!(room_names.len(), 4);
    assert_eq!(w[0].re, Some(1));
    let s = c.enter("welcome");
    let ServerMessage::RoomSnapshot(snap) = &s[0].message else {
        panic!("{s:?}")
    };
    assert_eq!(snap.occupants.len(), 1);
    assert_eq!(s[0].seq, 2);
}

#[test]
fn hello_must_come_first() {
    let h = Harness::new();
    let mut c = h.client();
    assert_eq!(error_code(&c.enter("welcome")), Some("NotAuthenticated"));
    c.hello("Ana");
    assert_eq!(error_code(&c.hello("Ana")), Some("AlreadyAuthenticated"));
    let mut d = h.client();
    assert_eq!(error_code(&d.hello("ana")), Some("PlayerOnline"));
    let mut e = h.client();
    assert_eq!(
        error_code(&e.send(ClientMessage::Hello {
            display_name: "Zed".into(),
            locale: "xx".into()
        })),
        Some("UnsupportedLocale")
    );
}

#[test]
fn navigation_follows_portals() {
    let h = Harness::new();
    let mut c = h.client();
    c.hello("Ana");
    assert_eq!(error_code(&c.enter("tutorial")), Some("NotAdjacent"));
    assert_eq!(error_code(&c.enter("attic")), Some("UnknownRoom"));
    c.join("", &["welcome", "tutorial"]);
    assert_eq!(error_code(&c.enter("farm_room")), Some("NotAdjacent"));
    assert_eq!(h.world.room_snapshot("welcome").unwrap().occupants.len(), 0);
    assert_eq!(h.world.room_snapshot("tutorial").unwrap().occupants.len(), 1);
}

#[test]
fn chat_reaches_exactly_the_room() {
    let h = Harness::new();
    let mut a = h.client();
    let mut b = h.client();
    let mut c = h.client();
    let mut far = h.client();
    a.join("A", &["welcome"]);
    b.join("B", &["welcome"]);
    c.join("C", &["welcome"]);
    far.join("Far", &["welcome", "tutorial"]);
    for x in [&a, &b, &c, &far] {
        x.out.take();
    }
    let mine = a.send(ClientMessage::Chat { text: "hi all".into() });
    let count = |frames: &[ServerEnvelope]| {
        frames
            .iter()
            .filter(|f| matches!(f.message, ServerMessage::ChatEvent { .. }))
            .count()
    };
    assert_eq!(count(&mine), 1);
    assert_eq!(mine[0].re, Some(a.seq));
    assert_eq!(count(&b.out.take()) + count(&c.out.take()), 2);
    assert_eq!(count(&far.out.take()), 0);
}

#[test]
fn chat_rate_limit() {
    let h = Harness::new();
    let mut a = h.client();
    a.join("A", &["welcome"]);
    for i in 0..5 {
        let got = a.send(ClientMessage::Chat { text: format!("m{i}") });
        assert_eq!(error_code(&got), None);
        h.clock.advance(100);
    }
    assert_eq!(
        error_code(&a.send(ClientMessage::Chat { text: "again".into() })),
        Some("RateLimited")
    );
    h.clock.advance(600);
    assert_eq!(error_code(&a.send(ClientMessage::Chat { text: "later".into() })), None);
    assert_eq!(
        error_code(&a.send(ClientMessage::Chat { text: "  ".into() })),
        Some("InvalidChat")
    );
}

#[test]
fn move_delta_goes_to_everyone_in_room() {
    let h = Harness::new();
    let mut a = h.client();
    let mut b = h.client();
    a.join("A", &["welcome"]);
    b.join("B", &["welcome"]);
    a.out.take();
    let mine = a.send(ClientMessage::Move { x: 3.0, y: 4.0 });
    let ServerMessage::RoomDelta(d) = &mine[0].message else {
        panic!("{mine:?}")
    };
    assert_eq!(d.moves[0].x, 3.0);
    let theirs = b.out.take();
    assert_eq!(theirs.len(), 1);
    assert_eq!(theirs[0].re, None);
    // JSON has no NaN; it goes out as null and fails to decode.
    assert_eq!(
        error_code(&a.send(ClientMessage::Move { x: f64::NAN, y: 0.0 })),
        Some("BadMessage")
    );
}

#[test]
fn stale_and_duplicate_seq_rejected() {
    let h = Harness::new();
    let mut a = h.client();
    a.hello("A");
    a.seq = 0;
    assert_eq!(error_code(&a.hello("A")), Some("BadSeq"));
    h.world.handle(a.conn, "{nope");
    assert_eq!(error_code(&a.out.take()), Some("BadMessage"));
}

fn choose(node: &str, choice: &str) -> ClientMessage {
    ClientMessage::Input(PlayerInput::Choose {
        node_id: node.into(),
        choice_id: choice.into(),
    })
}

#[test]
fn scenario_runs_to_profile_and_replayable_record() {
    let h = Harness::new();
    let mut a = h.client();
    a.join("Ana", &["welcome"]);
    assert_eq!(
        error_code(&a.send(ClientMessage::StartScenario {
            scenario_id: "mini".into(),
            seed: None
        })),
        Some("NotHere")
    );
    a.enter("tutorial");
    let started = a.send(ClientMessage::StartScenario {
        scenario_id: "mini".into(),
        seed: Some(99),
    });
    let ServerMessage::EngineEvents { events, texts, view, .. } = &started[0].message else {
        panic!("{started:?}")
    };
    assert_eq!(events.len(), 2);
    assert_eq!(texts["mini.start"], "Hello there");
    assert_eq!(view.choices[0].text, "Go on");
    let done = a.send(choose("start", "c1"));
    assert!(matches!(done[0].message, ServerMessage::EngineEvents { .. }));
    let ServerMessage::ProfileUpdate(profile) = &done[1].message else {
        panic!("{done:?}")
    };
    assert!(profile.completed.contains_key("mini"));
    assert_eq!(error_code(&a.send(choose("end", "c1"))), Some("NoActiveSession"));

    let files = h.world.store().session_files().unwrap();
    assert_eq!(files.len(), 1);
    let rec = load_session_record(&files[0]).unwrap();
    assert_eq!(rec.header.seed, 99);
    assert_eq!(rec.footer.status, SessionStatusTag::Finished);
    verify_replay(&rec, h.world.pack().scenario("mini").unwrap()).unwrap();
    assert_eq!(
        h.world.store().load_profile("ana").unwrap().completed["mini"].nodes_visited,
        2
    );
}

#[test]
fn engine_errors_are_wrapped() {
    let h = Harness::new();
    let mut a = h.client();
    a.join("Ana", &["welcome", "mini_room"]);
    a.send(ClientMessage::StartScenario {
        scenario_id: "mini".into(),
        seed: None,
    });
    let got = a.send(choose("start", "nope"));
    let Some(ServerMessage::Error { code, detail }) = got.first().map(|f| &f.message) else {
        panic!("{got:?}")
    };
    assert_eq!(code, "EngineError");
    assert!(detail.starts_with("UnknownChoice"), "{detail}");
}

#[test]
fn wind_farm_edits_echo_evaluations() {
    let h = Harness::new();
    let mut a = h.client();
    a.join("Ana", &["welcome", "farm_room"]);
    assert_eq!(
        error_code(&a.send(ClientMessage::ActivityEdit {
            action: LayoutAction::Place { x: 0, y: 0 }
        })),
        Some("NoActiveSession")
    );
    a.send(ClientMessage::StartScenario {
        scenario_id: "farm".into(),
        seed: None,
    });
    assert_eq!(
        error_code(&a.send(ClientMessage::ActivityEdit {
            action: LayoutAction::Place { x: 1, y: 0 }
        })),
        Some("Protected")
    );
    let got = a.send(ClientMessage::ActivityEdit {
        action: LayoutAction::Place { x: 0, y: 0 },
    });
    let ServerMessage::ActivityState { layout, evaluation, .. } = &got[0].message else {
        panic!("{got:?}")
    };
    assert_eq!(layout.len(), 1);
    assert!(evaluation.feasible);
    let done = a.send(ClientMessage::Input(PlayerInput::ActivityResult {
        node_id: "site".into(),
        result: json!({"placements": [[0, 0]]}),
    }));
    let ServerMessage::EngineEvents { view, .. } = &done[0].message else {
        panic!("{done:?}")
    };
    assert_eq!(view.node_id, "won");
    assert_eq!(view.score, 10);
}

#[test]
fn set_locale_rerenders() {
    let h = Harness::new();
    let mut a = h.client();
    a.hello("Ana");
    let got = a.send(ClientMessage::SetLocale { locale: "pt".into() });
    let ServerMessage::Welcome { room_names, locale, .. } = &got[0].message else {
        panic!("{got:?}")
    };
    assert_eq!(locale, "pt");
    let welcome = room_names.iter().find(|r| r.room_id == "welcome").unwrap();
    assert_eq!(welcome.name, "Área de boas-vindas");
    let tutorial = room_names.iter().find(|r| r.room_id == "tutorial").unwrap();
    assert_eq!(tutorial.name, "Tutorial");
    assert_eq!(
        error_code(&a.send(ClientMessage::SetLocale { locale: "fr".into() })),
        Some("UnsupportedLocale")
    );
}

#[test]
fn disconnect_leaves_room_and_abandons_session() {
    let h = Harness::new();
    let mut a = h.client();
    let mut b = h.client();
    a.join("A", &["welcome", "mini_room"]);
    b.join("B", &["welcome", "mini_room"]);
    a.send(ClientMessage::StartScenario {
        scenario_id: "mini".into(),
        seed: None,
    });
    b.out.take();
    h.world.disconnect(a.conn);
    let got = b.out.take();
    let ServerMessage::RoomDelta(d) = &got[0].message else {
        panic!("{got:?}")
    };
    assert_eq!(d.leaves, vec!["a".to_string()]);
    let rec = load_session_record(&h.world.store().session_files().unwrap()[0]).unwrap();
    assert_eq!(rec.footer.status, SessionStatusTag::Abandoned);
    let mut again = h.client();
    assert_eq!(error_code(&again.hello("A")), None);
}

#[test]
fn shutdown_flushes_open_sessions() {
    let h = Harness::new();
    let mut a = h.client();
    a.join("A", &["welcome", "mini_room"]);
    a.send(ClientMessage::StartScenario {
        scenario_id: "mini".into(),
        seed: None,
    });
    let (flushed, errors) = h.world.shutdown();
    assert_eq!((flushed, errors.len()), (1, 0));
    let rec = load_session_record(&h.world.store().session_files().unwrap()[0]).unwrap();
    assert_eq!(rec.footer.status, SessionStatusTag::Interrupted);
    verify_replay(&rec, h.world.pack().scenario("mini").unwrap()).unwrap();
}

#[test]
fn outbound_seq_is_contiguous() {
    let h = Harness::new();
    let mut b = h.client();
    b.join("B", &["welcome"]);
    let sink = Arc::new(RecordingOutbound::default());
    let conn = h.world.connect(sink.clone());
    let frames = [
        r#"{"seq": 1, "type": "hello", "body": {"display_name": "C", "locale": "en"}}"#,
        r#"{"seq": 2, "type": "enter_room", "body": {"room_id": "welcome"}}"#,
        r#"{"seq": 3, "type": "chat", "body": {"text": "x"}}"#,
        r#"{"seq": 4, "type": "enter_room", "body": {"room_id": "attic"}}"#,
        r#"{"seq": 4, "type": "chat", "body": {"text": "dup"}}"#,
    ];
    for (i, f) in frames.iter().enumerate() {
        h.world.handle(conn, f);
        b.send(ClientMessage::Move { x: i as f64, y: 1.0 });
    }
    let got = sink.frames();
    let seqs: Vec<u64> = got.iter().map(|f| f.seq).collect();
    assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
    for re in 1..=4 {
        assert!(got.iter().any(|f| f.re == Some(re)), "no answer to {re}");
    }
    let codes: Vec<&str> = got
        .iter()
        .filter_map(|f| match &f.message {
            ServerMessage::Error { code, .. } => Some(code.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(codes, ["UnknownRoom", "BadSeq"]);
}
