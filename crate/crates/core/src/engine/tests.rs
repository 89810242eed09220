use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use super::*;
use crate::scenario::{fixtures, parse_scenario, Effect, Value};

fn doc(v: serde_json::Value) -> ScenarioDocument {
    parse_scenario(&serde_json::to_vec(&v).unwrap()).unwrap()
}

fn base(nodes: serde_json::Value, variables: serde_json::Value, entry: &str) -> ScenarioDocument {
    doc(json!({
        "schema_version": 1,
        "id": "t",
        "default_locale": "en",
        "supported_locales": ["en", "pt"],
        "title_key": "t.title",
        "variables": variables,
        "entry_node": entry,
        "nodes": nodes,
    }))
}

fn choose(node: &str, choice: &str) -> PlayerInput {
    PlayerInput::Choose {
        node_id: node.into(),
        choice_id: choice.into(),
    }
}

fn answer(q: &str, o: &str) -> PlayerInput {
    PlayerInput::Answer {
        question_id: q.into(),
        option_id: o.into(),
    }
}

fn kinds(events: &[EngineEvent]) -> Vec<EventKind> {
    events.iter().map(|e| e.kind).collect()
}

fn quiz_doc() -> ScenarioDocument {
    let q = |id: &str, pts: u32| {
        json!({
            "id": id, "text_key": format!("t.{id}"),
            "options": [
                {"option_id": "a", "text_key": "t.a"},
                {"option_id": "b", "text_key": "t.b"},
                {"option_id": "c", "text_key": "t.c"}
            ],
            "correct_option": "a", "hint_key": format!("t.{id}.hint"), "points": pts
        })
    };
    base(
        json!({
            "quiz": {"kind": "quiz", "text_key": "t.quiz",
                     "questions": [q("q1", 10), q("q2", 5), q("q3", 5), q("q4", 5)],
                     "pass_target": "win", "fail_target": "retry"},
            "retry": {"kind": "dialogue", "text_key": "t.retry",
                      "choices": [{"id": "again", "text_key": "t.again", "target": "quiz"},
                                  {"id": "give_up", "text_key": "t.give_up", "target": "lose"}]},
            "win": {"kind": "terminal", "text_key": "t.win", "outcome_key": "t.out.win"},
            "lose": {"kind": "terminal", "text_key": "t.lose", "outcome_key": "t.out.lose"}
        }),
        json!({}),
        "quiz",
    )
}

fn run(doc: &ScenarioDocument, inputs: &[PlayerInput]) -> (EngineState, Vec<EngineEvent>) {
    replay_to_state(doc, 7, inputs).unwrap()
}

#[test]
fn start_on_two_node_document() {
    let d = fixtures::two_node();
    let (state, events) = start_session(&d, 0, "en").unwrap();
    assert_eq!(state.current_node, "start");
    assert_eq!(state.score(), 0);
    assert_eq!(events[0].kind, EventKind::NodeEntered);
    assert_eq!(events[0].payload.node_id.as_deref(), Some("start"));
    assert_eq!(kinds(&events), [EventKind::NodeEntered, EventKind::TextShown]);
    assert_eq!(state.status, SessionStatus::Active);
}

#[test]
fn entry_effects_apply_on_start() {
    let d = base(
        json!({
            "s": {"kind": "dialogue", "text_key": "t.s", "on_enter_effects": [{"score_delta": 5}],
                  "choices": [{"id": "go", "text_key": "t.go", "target": "e"}]},
            "e": {"kind": "terminal", "text_key": "t.e", "outcome_key": "t.o"}
        }),
        json!({}),
        "s",
    );
    let (state, events) = start_session(&d, 0, "en").unwrap();
    assert_eq!(state.score(), 5);
    assert_eq!(
        kinds(&events),
        [EventKind::NodeEntered, EventKind::EffectApplied, EventKind::TextShown]
    );
}

#[test]
fn same_seed_gives_byte_identical_events() {
    let d = quiz_doc();
    let a = start_session(&d, 42, "en").unwrap().1;
    let b = start_session(&d, 42, "en").unwrap().1;
    assert_eq!(events_to_jsonl(&a), events_to_jsonl(&b));
}

#[test]
fn start_errors() {
    let d = fixtures::two_node();
    assert_eq!(
        start_session(&d, 0, "xx").unwrap_err(),
        EngineError::UnsupportedLocale("xx".into())
    );
    let mut broken = d.clone();
    broken.nodes.remove("end");
    assert!(matches!(
        start_session(&broken, 0, "en"),
        Err(EngineError::InvalidDocument(_))
    ));
}

#[test]
fn choose_moves_and_finishes() {
    let d = fixtures::two_node();
    let (state, _) = start_session(&d, 0, "en").unwrap();
    let (next, events) = advance(&state, &d, &choose("start", "c1")).unwrap();
    assert_eq!(next.current_node, "end");
    assert!(next.is_finished());
    assert_eq!(
        kinds(&events),
        [
            EventKind::ChoiceMade,
            EventKind::NodeEntered,
            EventKind::TextShown,
            EventKind::ScenarioFinished
        ]
    );
    assert_eq!(
        advance(&next, &d, &choose("end", "c1")).unwrap_err(),
        EngineError::AlreadyFinished
    );
}

#[test]
fn two_wrong_answers_give_hint_and_stay() {
    let d = quiz_doc();
    let (state, _) = start_session(&d, 0, "en").unwrap();
    let (s1, e1) = advance(&state, &d, &answer("q1", "b")).unwrap();
    assert!(!e1.iter().any(|e| e.kind == EventKind::HintGiven));
    let (s2, e2) = advance(&s1, &d, &answer("q1", "c")).unwrap();
    let hint = e2.iter().find(|e| e.kind == EventKind::HintGiven).unwrap();
    assert_eq!(hint.payload.text_key.as_deref(), Some("t.q1.hint"));
    assert_eq!(s2.current_node, "quiz");
    assert_eq!(s2.quiz_attempts["q1"], 2);
}

#[test]
fn third_wrong_answer_takes_fail_target() {
    let d = quiz_doc();
    let (s, _) = run(&d, &[answer("q1", "b"), answer("q1", "b"), answer("q1", "c")]);
    assert_eq!(s.current_node, "retry");
    assert_eq!(s.score(), 0);
}

#[test]
fn points_only_on_first_attempt() {
    let d = quiz_doc();
    let (s, _) = run(
        &d,
        &[
            answer("q1", "b"),
            answer("q1", "a"),
            answer("q2", "a"),
            answer("q3", "a"),
            answer("q4", "a"),
        ],
    );
    assert_eq!(s.current_node, "win");
    assert_eq!(s.score(), 15);
}

#[test]
fn answered_question_is_closed() {
    let d = quiz_doc();
    let (s, _) = run(&d, &[answer("q1", "a")]);
    assert_eq!(
        advance(&s, &d, &answer("q1", "a")).unwrap_err(),
        EngineError::QuestionClosed("q1".into())
    );
}

#[test]
fn attempts_reset_when_quiz_is_reentered() {
    let d = quiz_doc();
    let wrong3 = [answer("q1", "b"), answer("q1", "b"), answer("q1", "b")];
    let mut inputs = wrong3.to_vec();
    inputs.push(choose("retry", "again"));
    let (s, _) = run(&d, &inputs);
    assert_eq!(s.current_node, "quiz");
    assert_eq!(s.quiz_attempts["q1"], 0);
    inputs.push(answer("q1", "a"));
    let (s, _) = run(&d, &inputs);
    assert_eq!(s.score(), 10);
}

#[test]
fn four_questions_three_first_try() {
    let d = quiz_doc();
    let inputs = [
        answer("q1", "a"),
        answer("q2", "b"),
        answer("q2", "a"),
        answer("q3", "a"),
        answer("q4", "a"),
    ];
    let (s, log) = run(&d, &inputs);
    let summary = summarize(&s, &log).unwrap();
    assert_eq!(summary.quiz_accuracy, 0.75);
    assert_eq!(summary.hints_used, 0);
    assert_eq!(summary.final_score, 20);
    assert_eq!(summary.outcome_key, "t.out.win");
}

#[test]
fn zero_question_summary() {
    let d = fixtures::two_node();
    let (s, log) = run(&d, &[choose("start", "c1")]);
    let summary = summarize(&s, &log).unwrap();
    assert_eq!(summary.quiz_accuracy, 0.0);
    assert_eq!(summary.hints_used, 0);
    assert_eq!(summary.nodes_visited, 2);
    let (s0, log0) = run(&d, &[]);
    assert_eq!(summarize(&s0, &log0).unwrap_err(), EngineError::NotFinished);
}

#[test]
fn replayed_summary_equals_live_summary() {
    let d = quiz_doc();
    let inputs = [
        answer("q1", "b"),
        answer("q1", "c"),
        answer("q1", "a"),
        answer("q2", "a"),
        answer("q3", "a"),
        answer("q4", "a"),
    ];
    let (mut state, mut live) = start_session(&d, 3, "en").unwrap();
    for i in &inputs {
        let (n, ev) = advance(&state, &d, i).unwrap();
        state = n;
        live.extend(ev);
    }
    let (rs, replayed) = replay_to_state(&d, 3, &inputs).unwrap();
    assert_eq!(live, replayed);
    assert_eq!(summarize(&state, &live), summarize(&rs, &replayed));
    assert_eq!(summarize(&rs, &replayed).unwrap().hints_used, 1);
}

#[test]
fn empty_replay_is_start_events() {
    let d = quiz_doc();
    assert_eq!(replay(&d, 9, &[]).unwrap(), start_session(&d, 9, "en").unwrap().1);
}

#[test]
fn replay_locates_bad_input() {
    let d = fixtures::two_node();
    let err = replay(&d, 0, &[choose("start", "nope")]).unwrap_err();
    assert_eq!(err.input_index, Some(0));
    assert_eq!(err.source, EngineError::UnknownChoice("nope".into()));
}

fn gated_doc() -> ScenarioDocument {
    base(
        json!({
            "a": {"kind": "dialogue", "text_key": "t.a", "choices": [
                {"id": "help", "text_key": "t.help", "effects": [{"set": {"var": "helped", "value": true}}], "target": "b"},
                {"id": "skip", "text_key": "t.skip", "target": "b"}
            ]},
            "b": {"kind": "dialogue", "text_key": "t.b", "choices": [
                {"id": "thank", "text_key": "t.thank", "condition": "helped", "effects": [{"score_delta": 3}], "target": "good"},
                {"id": "leave", "text_key": "t.leave", "target": "c"}
            ]},
            "c": {"kind": "info", "text_key": "t.c", "choices": [
                {"id": "wander", "text_key": "t.wander", "target": "d"},
                {"id": "retry", "text_key": "t.retry", "target": "a"}
            ]},
            "d": {"kind": "info", "text_key": "t.d", "choices": [
                {"id": "finish", "text_key": "t.finish", "target": "bad"}
            ]},
            "good": {"kind": "terminal", "text_key": "t.good", "outcome_key": "t.o.good"},
            "bad": {"kind": "terminal", "text_key": "t.bad", "outcome_key": "t.o.bad"}
        }),
        json!({"helped": false}),
        "a",
    )
}

#[test]
fn condition_failed_leaves_state_identical() {
    let d = gated_doc();
    let (s, _) = run(&d, &[choose("a", "skip")]);
    let before = serde_json::to_string(&s).unwrap();
    assert_eq!(
        advance(&s, &d, &choose("b", "thank")).unwrap_err(),
        EngineError::ConditionFailed("thank".into())
    );
    assert_eq!(serde_json::to_string(&s).unwrap(), before);
}

#[test]
fn input_errors() {
    let d = gated_doc();
    let (s, _) = start_session(&d, 0, "en").unwrap();
    assert!(matches!(
        advance(&s, &d, &choose("b", "leave")),
        Err(EngineError::OutOfTurn { .. })
    ));
    assert!(matches!(
        advance(&s, &d, &answer("q1", "a")),
        Err(EngineError::WrongInputKind { kind: NodeKind::Dialogue })
    ));
    let q = quiz_doc();
    let (s, _) = start_session(&q, 0, "en").unwrap();
    assert_eq!(
        advance(&s, &q, &answer("zz", "a")).unwrap_err(),
        EngineError::UnknownQuestion("zz".into())
    );
    assert_eq!(
        advance(&s, &q, &answer("q1", "zz")).unwrap_err(),
        EngineError::UnknownOption("zz".into())
    );
    assert!(matches!(
        advance(&s, &q, &choose("quiz", "again")),
        Err(EngineError::WrongInputKind { kind: NodeKind::Quiz })
    ));
}

/// Enumerates accepted input sequences of up to `depth` inputs, drawing each
/// input from every (node, choice) pair in the document.
fn engine_terminals(d: &ScenarioDocument, depth: usize) -> BTreeSet<String> {
    let alphabet: Vec<PlayerInput> = d
        .nodes
        .iter()
        .flat_map(|(id, n)| n.choices.iter().map(move |c| choose(id, &c.id)))
        .collect();
    let mut out = BTreeSet::new();
    fn go(
        d: &ScenarioDocument,
        alphabet: &[PlayerInput],
        s: &EngineState,
        left: usize,
        out: &mut BTreeSet<String>,
    ) {
        if s.is_finished() {
            out.insert(s.current_node.clone());
            return;
        }
        if left == 0 {
            return;
        }
        for input in alphabet {
            if let Ok((next, _)) = advance(s, d, input) {
                go(d, alphabet, &next, left - 1, out);
            }
        }
    }
    let (s, _) = start_session(d, 0, "en").unwrap();
    go(d, &alphabet, &s, depth, &mut out);
    out
}

/// Hand-transcribed walker over (node, helped) for the gated document.
fn walker_terminals(depth: usize) -> BTreeSet<String> {
    let edges = |node: &str, helped: bool| -> Vec<(&'static str, bool)> {
        match node {
            "a" => vec![("b", true), ("b", helped)],
            "b" if helped => vec![("good", helped), ("c", helped)],
            "b" => vec![("c", helped)],
            "c" => vec![("d", helped), ("a", helped)],
            "d" => vec![("bad", helped)],
            _ => vec![],
        }
    };
    let mut frontier = vec![("a", false)];
    let mut out = BTreeSet::new();
    for _ in 0..=depth {
        let mut next = Vec::new();
        for (node, helped) in frontier {
            if node == "good" || node == "bad" {
                out.insert(node.to_string());
            }
            next.extend(edges(node, helped));
        }
        frontier = next;
    }
    out
}

#[test]
fn exhaustive_sequences_match_walker() {
    let d = gated_doc();
    for depth in 0..=6 {
        assert_eq!(engine_terminals(&d, depth), walker_terminals(depth), "depth {depth}");
    }
    assert_eq!(walker_terminals(2), BTreeSet::from(["good".to_string()]));
    assert_eq!(walker_terminals(6).len(), 2);
}

#[test]
fn apply_effects_examples() {
    let mut vars = BTreeMap::new();
    vars.insert("x".to_string(), Value::Int(0));
    vars.insert("score".to_string(), Value::Int(0));
    assert_eq!(apply_effects(&vars, &[]), (vars.clone(), 0.0));
    let (out, c) = apply_effects(
        &vars,
        &[
            Effect::Set {
                var: "x".into(),
                value: Value::Int(3),
            },
            Effect::Add {
                var: "x".into(),
                delta: 2,
            },
        ],
    );
    assert_eq!(out["x"], Value::Int(5));
    assert_eq!(c, 0.0);
    let (out, c) = apply_effects(
        &vars,
        &[
            Effect::ScoreDelta(10),
            Effect::CarbonDelta {
                kg: 1.2,
                reason_key: "car".into(),
            },
        ],
    );
    assert_eq!(out["score"], Value::Int(10));
    assert_eq!(c, 1.2);
}

#[test]
fn condition_evaluation_examples() {
    let vars = BTreeMap::from([("score".to_string(), Value::Int(9))]);
    assert!(eval_condition(&crate::scenario::Expr::always_true(), &BTreeMap::new()));
    let e = crate::scenario::parse_expr("score >= 10").unwrap();
    assert!(!eval_condition(&e, &vars));
}

#[test]
fn jsonl_round_trip_is_byte_stable() {
    let d = quiz_doc();
    let (_, log) = run(&d, &[answer("q1", "b"), answer("q1", "b"), answer("q1", "b")]);
    let text = events_to_jsonl(&log);
    let back = events_from_jsonl(&text).unwrap();
    assert_eq!(back, log);
    assert_eq!(events_to_jsonl(&back), text);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let keys: Vec<&String> = first.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["kind", "payload", "tick"]);
}

mod activities {
    use super::*;

    fn farm_doc(threshold: serde_json::Value) -> ScenarioDocument {
        let open = |v: f64| json!({"wind_speed": v, "zone": "open"});
        base(
            json!({
                "farm": {"kind": "activity", "text_key": "t.farm", "activity": {
                    "kind": "wind_farm",
                    "params": {
                        "challenge": {
                            "width": 2, "height": 1,
                            "cells": [[open(12.0), json!({"wind_speed": 6.0, "zone": "protected"})]],
                            "budget": 100.0, "turbine_cost": 40.0, "max_turbines": 2
                        },
                        "pass_threshold": threshold,
                        "points": 20
                    },
                    "exits": {"pass": "won", "fail": "lost"}
                }},
                "won": {"kind": "terminal", "text_key": "t.won", "outcome_key": "t.o.won"},
                "lost": {"kind": "terminal", "text_key": "t.lost", "outcome_key": "t.o.lost"}
            }),
            json!({}),
            "farm",
        )
    }

    fn result(cells: &[[u32; 2]]) -> PlayerInput {
        PlayerInput::ActivityResult {
            node_id: "farm".into(),
            result: json!({"placements": cells}),
        }
    }

    #[test]
    fn optimal_layout_passes_and_scores() {
        let d = farm_doc(json!({"fraction_of_optimum": 0.8}));
        let (s, log) = run(&d, &[result(&[[0, 0]])]);
        assert_eq!(s.current_node, "won");
        assert_eq!(s.score(), 20);
        let k = kinds(&log);
        let done = k.iter().position(|k| *k == EventKind::ActivityCompleted).unwrap();
        assert_eq!(
            &k[done..done + 3],
            [EventKind::ActivityCompleted, EventKind::EffectApplied, EventKind::FeedbackGiven]
        );
        assert_eq!(k[1], EventKind::TextShown);
        assert_eq!(k[2], EventKind::ActivityStarted);
    }

    #[test]
    fn empty_layout_fails_threshold() {
        let d = farm_doc(json!({"fraction_of_optimum": 0.8}));
        let (s, log) = run(&d, &[result(&[])]);
        assert_eq!(s.current_node, "lost");
        assert_eq!(s.score(), 0);
        let fb = log.iter().find(|e| e.kind == EventKind::FeedbackGiven).unwrap();
        assert_eq!(fb.payload.text_key.as_deref(), Some("windfarm.feedback.fail"));
    }

    #[test]
    fn infeasible_layout_is_rejected() {
        let d = farm_doc(json!({"score": 0.0}));
        let (s, _) = start_session(&d, 0, "en").unwrap();
        assert!(matches!(
            advance(&s, &d, &result(&[[1, 0]])),
            Err(EngineError::InvalidActivityResult(_))
        ));
        assert!(matches!(
            advance(&s, &d, &result(&[[0, 0], [0, 0]])),
            Err(EngineError::InvalidActivityResult(_))
        ));
    }

    fn carbon_doc() -> ScenarioDocument {
        base(
            json!({
                "day": {"kind": "activity", "text_key": "t.day", "activity": {
                    "kind": "carbon_day",
                    "params": {
                        "catalog": {"description": "test", "categories": {
                            "meal": [{"option_id": "beef", "label_key": "c.beef", "factor": 6.0, "unit": "meal"}],
                            "transport": [{"option_id": "car", "label_key": "c.car", "factor": 0.2, "unit": "km"},
                                          {"option_id": "bike", "label_key": "c.bike", "factor": 0.0, "unit": "km"}],
                            "energy": [{"option_id": "heat", "label_key": "c.heat", "factor": 0.5, "unit": "kWh"}]
                        }},
                        "budget_kg": 5.0,
                        "points": {"low": 30, "medium": 10, "high": 0}
                    },
                    "exits": {"low": "champ", "medium": "ok", "high": "oops"}
                }},
                "champ": {"kind": "terminal", "text_key": "t.champ", "outcome_key": "t.o.champ"},
                "ok": {"kind": "terminal", "text_key": "t.ok", "outcome_key": "t.o.ok"},
                "oops": {"kind": "terminal", "text_key": "t.oops", "outcome_key": "t.o.oops"}
            }),
            json!({}),
            "day",
        )
    }

    fn day(entries: serde_json::Value) -> PlayerInput {
        PlayerInput::ActivityResult {
            node_id: "day".into(),
            result: json!({ "entries": entries }),
        }
    }

    #[test]
    fn carbon_day_tiers_route_exits() {
        let d = carbon_doc();
        let cases = [
            (json!([{"option_id": "bike", "quantity": 10.0}]), "champ", 30, 0.0),
            (json!([{"option_id": "car", "quantity": 25.0}]), "champ", 30, 5.0),
            (json!([{"option_id": "beef", "quantity": 1.0}, {"option_id": "heat", "quantity": 2.0}]), "ok", 10, 7.0),
            (json!([{"option_id": "beef", "quantity": 2.0}]), "oops", 0, 12.0),
        ];
        for (entries, node, score, carbon) in cases {
            let (s, log) = run(&d, &[day(entries)]);
            assert_eq!(s.current_node, node);
            assert_eq!(s.score(), score);
            assert!((s.carbon_ledger_total - carbon).abs() < 1e-12);
            let fin = log.last().unwrap();
            assert_eq!(fin.payload.carbon_after, Some(s.carbon_ledger_total));
        }
    }

    #[test]
    fn carbon_day_rejects_unknown_option_and_negative_quantity() {
        let d = carbon_doc();
        let (s, _) = start_session(&d, 0, "en").unwrap();
        for bad in [
            json!([{"option_id": "jet", "quantity": 1.0}]),
            json!([{"option_id": "car", "quantity": -1.0}]),
        ] {
            assert!(matches!(
                advance(&s, &d, &day(bad)),
                Err(EngineError::InvalidActivityResult(_))
            ));
        }
    }
}
