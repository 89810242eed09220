//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use raise_core::engine::activity::{ActivityConfig, WindFarmParams};
use raise_core::{ContentPack, ResponseSet, ScenarioDocument, SurveyInstrument, WindFarmChallenge};

pub fn content_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../content")
}

pub fn pack() -> ContentPack {
    ContentPack::load(&content_dir()).expect("shipped content loads")
}

pub fn scenario(id: &str) -> ScenarioDocument {
    pack().scenario(id).expect("shipped scenario").clone()
}

/// The grid from the wind farm scenario's build node.
pub fn shipped_challenge() -> WindFarmChallenge {
    let doc = scenario("windfarm");
    let act = doc
        .node("build")
        .and_then(|n| n.activity.as_ref())
        .expect("build node hosts the activity");
    match ActivityConfig::parse(act).expect("activity params parse") {
        ActivityConfig::WindFarm(WindFarmParams { challenge, .. }) => challenge,
        _ => panic!("build node is not a wind farm"),
    }
}

pub fn survey() -> (SurveyInstrument, ResponseSet) {
    let dir = content_dir().join("survey");
    let inst = raise_core::load_instrument(&std::fs::read(dir.join("instrument.raise-v1.json")).unwrap())
        .expect("instrument loads");
    let rs = raise_core::ingest_responses(&inst, &std::fs::read(dir.join("responses.synthetic.csv")).unwrap())
        .expect("fixture ingests");
    (inst, rs)
}
