//! Headless playthroughs: drive the engine with a policy until a terminal.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::engine::activity::{ActivityConfig, CarbonDayResult, CarbonEntryInput, WindFarmResult};
use crate::engine::{
    advance, start_session, summarize, EngineError, EngineEvent, EngineState, OutcomeSummary,
    PlayerInput,
};
use crate::scenario::{NodeKind, ScenarioDocument};
use crate::windfarm::{apply_action, FarmLayout, LayoutAction};

#[derive(Debug, Clone, PartialEq)]
pub enum PlayPolicy {
    /// Uniform over currently legal inputs, all decisions drawn from the seed.
    Random(u64),
    /// Replays a fixed input list in order.
    Scripted(Vec<PlayerInput>),
    /// Always the first legal input.
    FirstChoice,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlayError {
    #[error("starting the session failed: {0}")]
    Start(#[source] EngineError),
    #[error("input #{index} was rejected: {source}")]
    Input {
        index: usize,
        #[source]
        source: EngineError,
    },
    #[error("no legal input at node `{0}`")]
    Stuck(String),
    #[error("scripted inputs ran out before the scenario finished")]
    ScriptExhausted,
    #[error("scenario did not finish within {0} inputs")]
    DidNotTerminate(usize),
}

impl PlayError {
    pub fn input_index(&self) -> Option<usize> {
        match self {
            PlayError::Input { index, .. } => Some(*index),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Playthrough {
    pub seed: u64,
    pub inputs: Vec<PlayerInput>,
    pub events: Vec<EngineEvent>,
    pub state: EngineState,
    pub summary: OutcomeSummary,
}

/// Input bound used by headless runs: ten inputs per node.
pub fn input_limit(doc: &ScenarioDocument) -> usize {
    doc.nodes.len() * 10
}

/// A fresh generator for policy decisions.
pub fn policy_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn play(
    doc: &ScenarioDocument,
    seed: u64,
    locale: &str,
    policy: &PlayPolicy,
    max_inputs: usize,
) -> Result<Playthrough, PlayError> {
    let (mut state, mut events) = start_session(doc, seed, locale).map_err(PlayError::Start)?;
    let mut rng = match policy {
        PlayPolicy::Random(s) => Some(policy_rng(*s)),
        _ => None,
    };
    let mut inputs = Vec::new();
    while !state.is_finished() {
        let index = inputs.len();
        if index >= max_inputs {
            return Err(PlayError::DidNotTerminate(max_inputs));
        }
        let input = match policy {
            PlayPolicy::Scripted(list) => list.get(index).cloned().ok_or(PlayError::ScriptExhausted)?,
            PlayPolicy::FirstChoice => legal_inputs(&state, doc)
                .into_iter()
                .next()
                .map(|c| c.realize(doc, None))
                .ok_or_else(|| PlayError::Stuck(state.current_node.clone()))?,
            PlayPolicy::Random(_) => {
                let rng = rng.as_mut().expect("random policy owns a generator");
                random_input(&state, doc, rng)
                    .ok_or_else(|| PlayError::Stuck(state.current_node.clone()))?
            }
        };
        let (next, new_events) = advance(&state, doc, &input)
            .map_err(|source| PlayError::Input { index, source })?;
        state = next;
        events.extend(new_events);
        inputs.push(input);
    }
    let summary = summarize(&state, &events).map_err(PlayError::Start)?;
    Ok(Playthrough {
        seed,
        inputs,
        events,
        state,
        summary,
    })
}

/// An input shape that is legal at the current node. Activity results are
/// filled in when realized.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidate {
    Choose { node_id: String, choice_id: String },
    Answer { question_id: String, option_id: String },
    Activity { node_id: String },
}

impl Candidate {
    pub fn realize(
        self,
        doc: &ScenarioDocument,
        rng: Option<&mut ChaCha8Rng>,
    ) -> PlayerInput {
        match self {
            Candidate::Choose { node_id, choice_id } => PlayerInput::Choose { node_id, choice_id },
            Candidate::Answer {
                question_id,
                option_id,
            } => PlayerInput::Answer {
                question_id,
                option_id,
            },
            Candidate::Activity { node_id } => {
                let result = doc
                    .node(&node_id)
                    .and_then(|n| n.activity.as_ref())
                    .and_then(|a| ActivityConfig::parse(a).ok())
                    .map(|config| match rng {
                        Some(rng) => random_activity_result(&config, rng),
                        None => empty_activity_result(&config),
                    })
                    .unwrap_or(serde_json::Value::Null);
                PlayerInput::ActivityResult { node_id, result }
            }
        }
    }
}

/// Every legal input at the current node, in document order.
pub fn legal_inputs(state: &EngineState, doc: &ScenarioDocument) -> Vec<Candidate> {
    if state.is_finished() {
        return Vec::new();
    }
    let Some(node) = doc.node(&state.current_node) else {
        return Vec::new();
    };
    let here = &state.current_node;
    match node.kind {
        NodeKind::Dialogue | NodeKind::Info => node
            .choices
            .iter()
            .filter(|c| c.is_enabled(&state.variables))
            .map(|c| Candidate::Choose {
                node_id: here.clone(),
                choice_id: c.id.clone(),
            })
            .collect(),
        NodeKind::Quiz => node
            .questions
            .iter()
            .filter(|q| !state.quiz_solved.contains(&q.id))
            .flat_map(|q| {
                q.options.iter().map(|o| Candidate::Answer {
                    question_id: q.id.clone(),
                    option_id: o.option_id.clone(),
                })
            })
            .collect(),
        NodeKind::Activity => vec![Candidate::Activity {
            node_id: here.clone(),
        }],
        NodeKind::Terminal => Vec::new(),
    }
}

pub fn random_input(
    state: &EngineState,
    doc: &ScenarioDocument,
    rng: &mut ChaCha8Rng,
) -> Option<PlayerInput> {
    let mut candidates = legal_inputs(state, doc);
    if candidates.is_empty() {
        return None;
    }
    let pick = rng.random_range(0..candidates.len());
    Some(candidates.swap_remove(pick).realize(doc, Some(rng)))
}

fn empty_activity_result(config: &ActivityConfig) -> serde_json::Value {
    match config {
        ActivityConfig::WindFarm(_) => json!(WindFarmResult { placements: vec![] }),
        ActivityConfig::CarbonDay(_) => json!(CarbonDayResult { entries: vec![] }),
    }
}

/// A random result that the activity accepts: a feasible layout built by
/// legal placements, or a handful of catalog entries.
pub fn random_activity_result(config: &ActivityConfig, rng: &mut ChaCha8Rng) -> serde_json::Value {
    match config {
        ActivityConfig::WindFarm(p) => {
            let ch = &p.challenge;
            let mut cells = ch.buildable_cells();
            cells.shuffle(rng);
            let want = rng.random_range(0..=ch.max_turbines as usize);
            let mut layout = FarmLayout::default();
            for cell in cells {
                if layout.len() >= want {
                    break;
                }
                if let Ok(next) = apply_action(ch, &layout, LayoutAction::Place { x: cell.x, y: cell.y })
                {
                    layout = next;
                }
            }
            json!(WindFarmResult {
                placements: layout.placements.into_iter().collect(),
            })
        }
        ActivityConfig::CarbonDay(p) => {
            let options: Vec<String> = p
                .catalog()
                .map(|c| c.options().map(|(_, o)| o.option_id.clone()).collect())
                .unwrap_or_default();
            let mut entries = Vec::new();
            if !options.is_empty() {
                for _ in 0..rng.random_range(0..=4) {
                    let option_id = options[rng.random_range(0..options.len())].clone();
                    let quantity = rng.random_range(0..=20) as f64 / 2.0;
                    entries.push(CarbonEntryInput {
                        option_id,
                        quantity,
                    });
                }
            }
            json!(CarbonDayResult { entries })
        }
    }
}
