//! Deterministic single-player runtime for scenario documents.
//!
//! The engine is a pure state machine: [`start_session`] and [`advance`] take
//! a state, return a new one plus the events the step produced. Time is a
//! logical tick counter and nothing ambient (clock, global RNG) enters, so a
//! document, seed and input list fully determine the event log.

pub mod activity;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::scenario::{
    validate_graph, Effect, Node, NodeKind, ScenarioDocument, TextKey, Value, SCORE_VAR,
};
use activity::ActivityConfig;

/// Wrong answers after which a question's hint is shown.
pub const HINT_AFTER_ATTEMPTS: u32 = 2;
/// Wrong answers after which the quiz routes to its fail target.
pub const FAIL_AFTER_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub scenario_id: String,
    pub current_node: String,
    pub variables: BTreeMap<String, Value>,
    pub carbon_ledger_total: f64,
    pub quiz_attempts: BTreeMap<String, u32>,
    /// Questions of the current quiz visit already answered correctly.
    pub quiz_solved: BTreeSet<String>,
    pub rng_seed: u64,
    pub locale: String,
    pub started_at: u64,
    pub last_event_at: u64,
    pub status: SessionStatus,
}

impl EngineState {
    pub fn score(&self) -> i64 {
        self.variables
            .get(SCORE_VAR)
            .and_then(Value::as_int)
            .unwrap_or(0)
    }

    pub fn is_finished(&self) -> bool {
        self.status == SessionStatus::Finished
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    NodeEntered,
    TextShown,
    ChoiceMade,
    EffectApplied,
    QuizAnswered,
    HintGiven,
    FeedbackGiven,
    ActivityStarted,
    ActivityCompleted,
    ScenarioFinished,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<Effect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_key: Option<TextKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_after: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon_after: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineEvent {
    pub tick: u64,
    pub kind: EventKind,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlayerInput {
    Choose { node_id: String, choice_id: String },
    Answer { question_id: String, option_id: String },
    ActivityResult { node_id: String, result: Json },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub final_score: i64,
    pub carbon_total: f64,
    pub quiz_accuracy: f64,
    pub hints_used: u32,
    pub nodes_visited: u32,
    pub outcome_key: TextKey,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("document has {0} validation error(s)")]
    InvalidDocument(usize),
    #[error("locale `{0}` is not supported by this scenario")]
    UnsupportedLocale(String),
    #[error("input addresses `{got}` but the session is at `{expected}`")]
    OutOfTurn { expected: String, got: String },
    #[error("node has no choice `{0}`")]
    UnknownChoice(String),
    #[error("condition for choice `{0}` is false")]
    ConditionFailed(String),
    #[error("session already finished")]
    AlreadyFinished,
    #[error("no question `{0}` in the current quiz")]
    UnknownQuestion(String),
    #[error("question `{0}` is already answered")]
    QuestionClosed(String),
    #[error("question has no option `{0}`")]
    UnknownOption(String),
    #[error("a {kind} node does not accept this input")]
    WrongInputKind { kind: NodeKind },
    #[error("invalid activity result: {0}")]
    InvalidActivityResult(String),
    #[error("document references missing node `{0}`")]
    MissingNode(String),
    #[error("session is not finished")]
    NotFinished,
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::InvalidDocument(_) => "InvalidDocument",
            EngineError::UnsupportedLocale(_) => "UnsupportedLocale",
            EngineError::OutOfTurn { .. } => "OutOfTurn",
            EngineError::UnknownChoice(_) => "UnknownChoice",
            EngineError::ConditionFailed(_) => "ConditionFailed",
            EngineError::AlreadyFinished => "AlreadyFinished",
            EngineError::UnknownQuestion(_) => "UnknownQuestion",
            EngineError::QuestionClosed(_) => "QuestionClosed",
            EngineError::UnknownOption(_) => "UnknownOption",
            EngineError::WrongInputKind { .. } => "WrongInputKind",
            EngineError::InvalidActivityResult(_) => "InvalidActivityResult",
            EngineError::MissingNode(_) => "MissingNode",
            EngineError::NotFinished => "NotFinished",
        }
    }
}

/// Evaluates a parsed condition; `None` is the always-true condition.
pub fn eval_condition(expr: &crate::scenario::Expr, vars: &BTreeMap<String, Value>) -> bool {
    expr.eval(vars)
}

/// Applies effects left to right. Returns the new variables and the summed
/// carbon delta. Targets are assumed declared (validation guarantees it);
/// writes that do not fit the declared type are skipped.
pub fn apply_effects(
    vars: &BTreeMap<String, Value>,
    effects: &[Effect],
) -> (BTreeMap<String, Value>, f64) {
    let mut out = vars.clone();
    let mut carbon = 0.0;
    for effect in effects {
        carbon += apply_effect(&mut out, effect);
    }
    (out, carbon)
}

fn apply_effect(vars: &mut BTreeMap<String, Value>, effect: &Effect) -> f64 {
    match effect {
        Effect::Set { var, value } => {
            if let Some(slot) = vars.get_mut(var) {
                if slot.var_type() == value.var_type() {
                    *slot = value.clone();
                }
            }
            0.0
        }
        Effect::Add { var, delta } => {
            if let Some(Value::Int(i)) = vars.get_mut(var) {
                *i = i.saturating_add(*delta);
            }
            0.0
        }
        Effect::ScoreDelta(d) => {
            add_score(vars, *d);
            0.0
        }
        Effect::CarbonDelta { kg, .. } => *kg,
    }
}

fn add_score(vars: &mut BTreeMap<String, Value>, delta: i64) {
    match vars.get_mut(SCORE_VAR) {
        Some(Value::Int(i)) => *i = i.saturating_add(delta),
        _ => {
            vars.insert(SCORE_VAR.to_string(), Value::Int(delta));
        }
    }
}

struct Step<'a> {
    doc: &'a ScenarioDocument,
    state: EngineState,
    events: Vec<EngineEvent>,
    next_tick: u64,
}

impl<'a> Step<'a> {
    fn emit(&mut self, kind: EventKind, payload: Payload) {
        let tick = self.next_tick;
        self.next_tick += 1;
        self.state.last_event_at = tick;
        self.events.push(EngineEvent {
            tick,
            kind,
            payload,
        });
    }

    fn apply(&mut self, node_id: &str, effect: &Effect) {
        let delta = apply_effect(&mut self.state.variables, effect);
        if let Effect::CarbonDelta { .. } = effect {
            self.state.carbon_ledger_total += delta;
        }
        let payload = Payload {
            node_id: Some(node_id.to_string()),
            effect: Some(effect.clone()),
            score_after: Some(self.state.score()),
            carbon_after: Some(self.state.carbon_ledger_total),
            ..Payload::default()
        };
        self.emit(EventKind::EffectApplied, payload);
    }

    fn node(&self, id: &str) -> Result<&'a Node, EngineError> {
        self.doc
            .nodes
            .get(id)
            .ok_or_else(|| EngineError::MissingNode(id.to_string()))
    }

    fn enter(&mut self, id: &str) -> Result<(), EngineError> {
        let node = self.node(id)?;
        self.state.current_node = id.to_string();
        self.emit(
            EventKind::NodeEntered,
            Payload {
                node_id: Some(id.to_string()),
                ..Payload::default()
            },
        );
        for effect in &node.on_enter_effects {
            self.apply(id, effect);
        }
        self.emit(
            EventKind::TextShown,
            Payload {
                node_id: Some(id.to_string()),
                text_key: Some(node.text_key.clone()),
                ..Payload::default()
            },
        );
        match node.kind {
            NodeKind::Quiz => {
                for q in &node.questions {
                    self.state.quiz_attempts.insert(q.id.clone(), 0);
                    self.state.quiz_solved.remove(&q.id);
                }
            }
            NodeKind::Activity => {
                let detail = node.activity.as_ref().map(|a| {
                    serde_json::json!({ "kind": a.kind, "params": a.params })
                });
                self.emit(
                    EventKind::ActivityStarted,
                    Payload {
                        node_id: Some(id.to_string()),
                        detail,
                        ..Payload::default()
                    },
                );
            }
            NodeKind::Terminal => {
                self.state.status = SessionStatus::Finished;
                let payload = Payload {
                    node_id: Some(id.to_string()),
                    text_key: node.outcome_key.clone(),
                    score_after: Some(self.state.score()),
                    carbon_after: Some(self.state.carbon_ledger_total),
                    ..Payload::default()
                };
                self.emit(EventKind::ScenarioFinished, payload);
            }
            NodeKind::Dialogue | NodeKind::Info => {}
        }
        Ok(())
    }

    fn finish(self) -> (EngineState, Vec<EngineEvent>) {
        (self.state, self.events)
    }
}

pub fn start_session(
    doc: &ScenarioDocument,
    seed: u64,
    locale: &str,
) -> Result<(EngineState, Vec<EngineEvent>), EngineError> {
    let report = validate_graph(doc);
    if !report.errors.is_empty() {
        return Err(EngineError::InvalidDocument(report.errors.len()));
    }
    if !doc.supported_locales.iter().any(|l| l == locale) {
        return Err(EngineError::UnsupportedLocale(locale.to_string()));
    }
    let state = EngineState {
        scenario_id: doc.id.clone(),
        current_node: doc.entry_node.clone(),
        variables: doc.initial_variables(),
        carbon_ledger_total: 0.0,
        quiz_attempts: BTreeMap::new(),
        quiz_solved: BTreeSet::new(),
        rng_seed: seed,
        locale: locale.to_string(),
        started_at: 0,
        last_event_at: 0,
        status: SessionStatus::Active,
    };
    let mut step = Step {
        doc,
        state,
        events: Vec::new(),
        next_tick: 0,
    };
    step.enter(&doc.entry_node)?;
    Ok(step.finish())
}

pub fn advance(
    state: &EngineState,
    doc: &ScenarioDocument,
    input: &PlayerInput,
) -> Result<(EngineState, Vec<EngineEvent>), EngineError> {
    if state.is_finished() {
        return Err(EngineError::AlreadyFinished);
    }
    let mut step = Step {
        doc,
        state: state.clone(),
        events: Vec::new(),
        next_tick: state.last_event_at + 1,
    };
    let here = state.current_node.clone();
    let node = step.node(&here)?;

    match input {
        PlayerInput::Choose { node_id, choice_id } => {
            if *node_id != here {
                return Err(EngineError::OutOfTurn {
                    expected: here,
                    got: node_id.clone(),
                });
            }
            if !matches!(node.kind, NodeKind::Dialogue | NodeKind::Info) {
                return Err(EngineError::WrongInputKind { kind: node.kind });
            }
            let choice = node
                .choice(choice_id)
                .ok_or_else(|| EngineError::UnknownChoice(choice_id.clone()))?;
            if !choice.is_enabled(&state.variables) {
                return Err(EngineError::ConditionFailed(choice_id.clone()));
            }
            step.emit(
                EventKind::ChoiceMade,
                Payload {
                    node_id: Some(here.clone()),
                    choice_id: Some(choice_id.clone()),
                    text_key: Some(choice.text_key.clone()),
                    ..Payload::default()
                },
            );
            for effect in &choice.effects {
                step.apply(&here, effect);
            }
            step.enter(&choice.target)?;
        }
        PlayerInput::Answer {
            question_id,
            option_id,
        } => {
            if node.kind != NodeKind::Quiz {
                return Err(EngineError::WrongInputKind { kind: node.kind });
            }
            let question = match node.question(question_id) {
                Some(q) => q,
                None if doc.nodes.values().any(|n| n.question(question_id).is_some()) => {
                    return Err(EngineError::OutOfTurn {
                        expected: here,
                        got: question_id.clone(),
                    })
                }
                None => return Err(EngineError::UnknownQuestion(question_id.clone())),
            };
            if state.quiz_solved.contains(question_id) {
                return Err(EngineError::QuestionClosed(question_id.clone()));
            }
            if !question.options.iter().any(|o| o.option_id == *option_id) {
                return Err(EngineError::UnknownOption(option_id.clone()));
            }
            let attempt = state.quiz_attempts.get(question_id).copied().unwrap_or(0) + 1;
            step.state
                .quiz_attempts
                .insert(question_id.clone(), attempt);
            let correct = *option_id == question.correct_option;
            let points = if correct && attempt == 1 {
                question.points as i64
            } else {
                0
            };
            if points != 0 {
                add_score(&mut step.state.variables, points);
            }
            let score_after = step.state.score();
            step.emit(
                EventKind::QuizAnswered,
                Payload {
                    node_id: Some(here.clone()),
                    question_id: Some(question_id.clone()),
                    option_id: Some(option_id.clone()),
                    correct: Some(correct),
                    attempt: Some(attempt),
                    points: Some(points),
                    score_after: Some(score_after),
                    ..Payload::default()
                },
            );
            if correct {
                step.state.quiz_solved.insert(question_id.clone());
                let all_done = node
                    .questions
                    .iter()
                    .all(|q| step.state.quiz_solved.contains(&q.id));
                if all_done {
                    let target = pass_target(node, &here)?;
                    step.enter(target)?;
                }
            } else if attempt >= FAIL_AFTER_ATTEMPTS {
                let target = node
                    .fail_target
                    .as_deref()
                    .ok_or_else(|| EngineError::MissingNode(format!("{here}.fail_target")))?;
                step.enter(target)?;
            } else if attempt == HINT_AFTER_ATTEMPTS {
                step.emit(
                    EventKind::HintGiven,
                    Payload {
                        node_id: Some(here.clone()),
                        question_id: Some(question_id.clone()),
                        text_key: Some(question.hint_key.clone()),
                        ..Payload::default()
                    },
                );
            }
        }
        PlayerInput::ActivityResult { node_id, result } => {
            if *node_id != here {
                return Err(EngineError::OutOfTurn {
                    expected: here,
                    got: node_id.clone(),
                });
            }
            let act = match (&node.kind, &node.activity) {
                (NodeKind::Activity, Some(act)) => act,
                _ => return Err(EngineError::WrongInputKind { kind: node.kind }),
            };
            let config = ActivityConfig::parse(act).map_err(EngineError::InvalidActivityResult)?;
            let outcome = activity::resolve(&config, result, state.carbon_ledger_total)
                .map_err(EngineError::InvalidActivityResult)?;
            let target = act
                .exits
                .get(&outcome.exit)
                .ok_or_else(|| EngineError::MissingNode(format!("{here}.exits.{}", outcome.exit)))?;
            step.emit(
                EventKind::ActivityCompleted,
                Payload {
                    node_id: Some(here.clone()),
                    exit: Some(outcome.exit.clone()),
                    detail: Some(outcome.detail),
                    ..Payload::default()
                },
            );
            for effect in &outcome.effects {
                step.apply(&here, effect);
            }
            step.emit(
                EventKind::FeedbackGiven,
                Payload {
                    node_id: Some(here.clone()),
                    text_key: Some(outcome.feedback_key),
                    score_after: Some(step.state.score()),
                    carbon_after: Some(step.state.carbon_ledger_total),
                    ..Payload::default()
                },
            );
            step.enter(target)?;
        }
    }
    Ok(step.finish())
}

fn pass_target<'n>(node: &'n Node, here: &str) -> Result<&'n str, EngineError> {
    node.pass_target
        .as_deref()
        .ok_or_else(|| EngineError::MissingNode(format!("{here}.pass_target")))
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}: {source}", match .input_index { Some(i) => format!("input #{i}"), None => "start".to_string() })]
pub struct ReplayError {
    /// `None` when starting the session failed.
    pub input_index: Option<usize>,
    #[source]
    pub source: EngineError,
}

/// Re-executes a session from its seed and inputs, in the document's default locale.
pub fn replay(
    doc: &ScenarioDocument,
    seed: u64,
    inputs: &[PlayerInput],
) -> Result<Vec<EngineEvent>, ReplayError> {
    replay_to_state(doc, seed, inputs).map(|(_, events)| events)
}

pub fn replay_to_state(
    doc: &ScenarioDocument,
    seed: u64,
    inputs: &[PlayerInput],
) -> Result<(EngineState, Vec<EngineEvent>), ReplayError> {
    let (mut state, mut log) =
        start_session(doc, seed, &doc.default_locale).map_err(|source| ReplayError {
            input_index: None,
            source,
        })?;
    for (i, input) in inputs.iter().enumerate() {
        let (next, events) = advance(&state, doc, input).map_err(|source| ReplayError {
            input_index: Some(i),
            source,
        })?;
        state = next;
        log.extend(events);
    }
    Ok((state, log))
}

/// Outcome figures computed from the event log of a finished session.
pub fn summarize(state: &EngineState, log: &[EngineEvent]) -> Result<OutcomeSummary, EngineError> {
    if !state.is_finished() {
        return Err(EngineError::NotFinished);
    }
    let finished = log
        .iter()
        .rev()
        .find(|e| e.kind == EventKind::ScenarioFinished)
        .ok_or(EngineError::NotFinished)?;
    let firsts = log
        .iter()
        .filter(|e| e.kind == EventKind::QuizAnswered && e.payload.attempt == Some(1));
    let (answered, correct) = firsts.fold((0u32, 0u32), |(n, c), e| {
        (n + 1, c + u32::from(e.payload.correct == Some(true)))
    });
    let count = |k: EventKind| log.iter().filter(|e| e.kind == k).count() as u32;
    Ok(OutcomeSummary {
        final_score: finished.payload.score_after.unwrap_or(0),
        carbon_total: finished.payload.carbon_after.unwrap_or(0.0),
        quiz_accuracy: if answered == 0 {
            0.0
        } else {
            correct as f64 / answered as f64
        },
        hints_used: count(EventKind::HintGiven),
        nodes_visited: count(EventKind::NodeEntered),
        outcome_key: finished.payload.text_key.clone().unwrap_or_default(),
    })
}

/// One JSON object per line, each `{tick, kind, payload}`.
pub fn events_to_jsonl(events: &[EngineEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events always serialize"));
        out.push('\n');
    }
    out
}

pub fn events_from_jsonl(text: &str) -> Result<Vec<EngineEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests;
