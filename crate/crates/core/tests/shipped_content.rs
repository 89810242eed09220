use std::collections::BTreeSet;
use std::path::PathBuf;

use raise_core::engine::activity::{ActivityConfig, WindFarmParams};
use raise_core::play::{input_limit, play, PlayPolicy};
use raise_core::scenario::{parse_scenario, ContentPack, NodeKind};
use raise_core::world::topology::{RoomKind, WorldTopology, TOPOLOGY_FILE};
use raise_core::{brute_force_best, ingest_responses, load_instrument, summary_report};

fn content_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../content")
}

fn pack() -> ContentPack {
    ContentPack::load(&content_dir()).expect("shipped pack loads")
}

#[test]
fn pack_validates_without_findings() {
    for (id, report) in pack().validate() {
        assert!(report.is_clean(), "{id}: {report:?}");
    }
}

#[test]
fn topology_matches_pack() {
    let p = pack();
    let bytes = std::fs::read(content_dir().join(TOPOLOGY_FILE)).unwrap();
    let topo = WorldTopology::from_json(&bytes).unwrap();
    topo.check(&p).unwrap();
    let scenario_rooms = topo
        .rooms
        .values()
        .filter(|r| r.kind == RoomKind::ScenarioRoom)
        .count();
    assert_eq!(scenario_rooms, 3);
}

#[test]
fn wind_farm_document_shape_and_round_trip() {
    let p = pack();
    let doc = p.scenario("windfarm").unwrap();
    assert!(doc.nodes.values().any(|n| n.kind == NodeKind::Quiz));
    let activity = doc
        .nodes
        .values()
        .find_map(|n| n.activity.as_ref())
        .unwrap();
    assert_eq!(activity.kind.to_string(), "wind_farm");
    let speakers: BTreeSet<&str> = doc.nodes.values().filter_map(|n| n.speaker.as_deref()).collect();
    assert!(speakers.len() >= 2, "{speakers:?}");

    let text = doc.to_json_pretty();
    let again = parse_scenario(text.as_bytes()).unwrap();
    assert_eq!(&again, doc);
    assert_eq!(parse_scenario(again.to_json_pretty().as_bytes()).unwrap(), again);
}

#[test]
fn wind_farm_threshold_is_reachable() {
    let doc = pack().scenario("windfarm").unwrap().clone();
    let act = doc.node("build").unwrap().activity.as_ref().unwrap();
    let ActivityConfig::WindFarm(WindFarmParams { challenge, .. }) = ActivityConfig::parse(act).unwrap()
    else {
        panic!("wind farm params");
    };
    let (layout, eval) = brute_force_best(&challenge).unwrap();
    assert!(!layout.is_empty());
    assert!(eval.score.unwrap() > 0.0);
}

#[test]
fn every_scenario_terminates_under_first_choice_and_random() {
    let p = pack();
    for doc in &p.scenarios {
        let limit = input_limit(doc);
        play(doc, 1, "en", &PlayPolicy::FirstChoice, limit).unwrap();
        for seed in 0..50 {
            let run = play(doc, seed, "pt", &PlayPolicy::Random(seed), limit).unwrap();
            assert!(run.state.is_finished());
        }
    }
}

#[test]
fn carbon_random_policy_terminates_over_500_seeds() {
    let p = pack();
    let doc = p.scenario("carbon").unwrap();
    let limit = doc.nodes.len() * 10;
    for seed in 0..500 {
        let run = play(doc, seed, "en", &PlayPolicy::Random(seed), limit).unwrap();
        assert!(run.inputs.len() <= limit);
    }
}

#[test]
fn synthetic_fixture_aggregates() {
    let dir = content_dir().join("survey");
    let inst = load_instrument(&std::fs::read(dir.join("instrument.raise-v1.json")).unwrap()).unwrap();
    let rs = ingest_responses(&inst, &std::fs::read(dir.join("responses.synthetic.csv")).unwrap()).unwrap();
    assert_eq!(rs.rows.len(), 1000);
    let report = summary_report(&rs).unwrap();
    assert_eq!(report.items.len(), 56);
}
