//! Static checks over a decoded scenario document.
//!
//! Errors make a document unloadable by the engine. Warnings flag content that
//! loads but is probably wrong: nodes nobody can reach, nodes from which no
//! ending is reachable, and keys missing from a locale bundle. Reachability
//! ignores choice conditions (it over-approximates the playable graph).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::condition::ConditionError;
use super::{Effect, Node, NodeKind, ScenarioDocument, VarType, SCORE_VAR};
use crate::engine::activity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FindingCode {
    // Decoding failures surfaced through the CLI report.
    SyntaxError,
    SchemaError,
    VersionError,
    // Errors.
    MissingEntry,
    DanglingTarget,
    NoTerminal,
    UndeclaredVariable,
    TypeMismatch,
    ReservedVariable,
    KindFieldMismatch,
    DuplicateChoice,
    DuplicateQuestion,
    InvalidQuestion,
    InvalidActivity,
    UnsupportedLocale,
    UnknownNpc,
    UnknownTextKey,
    DuplicateScenario,
    // Warnings.
    UnreachableNode,
    DeadEnd,
    MissingTranslation,
}

impl fmt::Display for FindingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub code: FindingCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub detail: String,
}

impl Finding {
    pub fn new(code: FindingCode, detail: impl Into<String>) -> Self {
        Finding {
            code,
            node_id: None,
            path: None,
            detail: detail.into(),
        }
    }

    pub fn at(mut self, node_id: &str, path: impl Into<String>) -> Self {
        self.node_id = Some(node_id.to_string());
        self.path = Some(path.into());
        self
    }

    pub fn with_path(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code)?;
        if let Some(path) = &self.path {
            write!(f, " at {path}")?;
        } else if let Some(node) = &self.node_id {
            write!(f, " at node {node}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_loadable(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn is_clean(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }

    pub fn codes(&self) -> BTreeSet<FindingCode> {
        self.errors
            .iter()
            .chain(&self.warnings)
            .map(|f| f.code)
            .collect()
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }
}

/// Document-local checks: references, typing, kind shapes, reachability.
pub fn validate_graph(doc: &ScenarioDocument) -> ValidationReport {
    let mut report = ValidationReport::default();
    let types = doc.variable_types();

    if !doc.supported_locales.contains(&doc.default_locale) {
        report.errors.push(
            Finding::new(
                FindingCode::UnsupportedLocale,
                format!(
                    "default_locale `{}` is not in supported_locales",
                    doc.default_locale
                ),
            )
            .with_path("default_locale"),
        );
    }

    if let Some(v) = doc.variables.get(SCORE_VAR) {
        if v.var_type() != VarType::Int {
            report.errors.push(
                Finding::new(
                    FindingCode::ReservedVariable,
                    "`score` is reserved and must be an integer",
                )
                .with_path("variables.score"),
            );
        }
    }

    if !doc.nodes.contains_key(&doc.entry_node) {
        report.errors.push(
            Finding::new(
                FindingCode::MissingEntry,
                format!("entry_node `{}` is not a node", doc.entry_node),
            )
            .with_path("entry_node"),
        );
    }

    if !doc.nodes.values().any(|n| n.kind == NodeKind::Terminal) {
        report.errors.push(Finding::new(
            FindingCode::NoTerminal,
            "document has no terminal node",
        ));
    }

    let mut question_ids: BTreeMap<&str, &str> = BTreeMap::new();
    for (id, node) in &doc.nodes {
        check_node_shape(id, node, &mut report);
        check_node_refs(doc, id, node, &types, &mut report);
        for (qi, q) in node.questions.iter().enumerate() {
            if let Some(first) = question_ids.insert(&q.id, id) {
                report.errors.push(
                    Finding::new(
                        FindingCode::DuplicateQuestion,
                        format!("question id `{}` already used in node `{first}`", q.id),
                    )
                    .at(id, format!("nodes.{id}.questions[{qi}].id")),
                );
            }
        }
    }

    if doc.nodes.contains_key(&doc.entry_node) {
        let reachable = reachable_from(doc, &doc.entry_node);
        for id in doc.nodes.keys() {
            if !reachable.contains(id.as_str()) {
                report.warnings.push(
                    Finding::new(
                        FindingCode::UnreachableNode,
                        format!("node `{id}` is not reachable from `{}`", doc.entry_node),
                    )
                    .at(id, format!("nodes.{id}")),
                );
            }
        }
    }

    let finishing = can_reach_terminal(doc);
    for (id, node) in &doc.nodes {
        if node.kind != NodeKind::Terminal && !finishing.contains(id.as_str()) {
            report.warnings.push(
                Finding::new(
                    FindingCode::DeadEnd,
                    format!("no terminal node is reachable from `{id}`"),
                )
                .at(id, format!("nodes.{id}")),
            );
        }
    }

    report
}

fn check_node_shape(id: &str, node: &Node, report: &mut ValidationReport) {
    let mut mismatch = |field: &str, expected_present: bool| {
        let detail = if expected_present {
            format!("{} node requires `{field}`", node.kind)
        } else {
            format!("{} node must not declare `{field}`", node.kind)
        };
        report.errors.push(
            Finding::new(FindingCode::KindFieldMismatch, detail)
                .at(id, format!("nodes.{id}.{field}")),
        );
    };
    let has_choices = !node.choices.is_empty();
    let has_questions = !node.questions.is_empty();
    let is = |k: NodeKind| node.kind == k;
    let branching = is(NodeKind::Dialogue) || is(NodeKind::Info);

    if has_choices != branching {
        mismatch("choices", branching);
    }
    if has_questions != is(NodeKind::Quiz) {
        mismatch("questions", is(NodeKind::Quiz));
    }
    if node.pass_target.is_some() != is(NodeKind::Quiz) {
        mismatch("pass_target", is(NodeKind::Quiz));
    }
    if node.fail_target.is_some() != is(NodeKind::Quiz) {
        mismatch("fail_target", is(NodeKind::Quiz));
    }
    if node.activity.is_some() != is(NodeKind::Activity) {
        mismatch("activity", is(NodeKind::Activity));
    }
    if node.outcome_key.is_some() != is(NodeKind::Terminal) {
        mismatch("outcome_key", is(NodeKind::Terminal));
    }

    let mut seen = BTreeSet::new();
    for (ci, choice) in node.choices.iter().enumerate() {
        if !seen.insert(choice.id.as_str()) {
            report.errors.push(
                Finding::new(
                    FindingCode::DuplicateChoice,
                    format!("choice id `{}` repeats within node", choice.id),
                )
                .at(id, format!("nodes.{id}.choices[{ci}].id")),
            );
        }
    }

    for (qi, q) in node.questions.iter().enumerate() {
        let path = format!("nodes.{id}.questions[{qi}]");
        let mut option_ids = BTreeSet::new();
        for o in &q.options {
            if !option_ids.insert(o.option_id.as_str()) {
                report.errors.push(
                    Finding::new(
                        FindingCode::InvalidQuestion,
                        format!("question `{}` repeats option `{}`", q.id, o.option_id),
                    )
                    .at(id, format!("{path}.options")),
                );
            }
        }
        if q.options.len() < 2 {
            report.errors.push(
                Finding::new(
                    FindingCode::InvalidQuestion,
                    format!("question `{}` needs at least two options", q.id),
                )
                .at(id, format!("{path}.options")),
            );
        }
        if !option_ids.contains(q.correct_option.as_str()) {
            report.errors.push(
                Finding::new(
                    FindingCode::InvalidQuestion,
                    format!(
                        "correct_option `{}` is not an option of question `{}`",
                        q.correct_option, q.id
                    ),
                )
                .at(id, format!("{path}.correct_option")),
            );
        }
    }

    if let Some(act) = &node.activity {
        if let Err(detail) = activity::check_activity(act) {
            report.errors.push(
                Finding::new(FindingCode::InvalidActivity, detail)
                    .at(id, format!("nodes.{id}.activity")),
            );
        }
    }
}

fn check_node_refs(
    doc: &ScenarioDocument,
    id: &str,
    node: &Node,
    types: &BTreeMap<String, VarType>,
    report: &mut ValidationReport,
) {
    let mut target = |t: &str, path: String| {
        if !doc.nodes.contains_key(t) {
            report.errors.push(
                Finding::new(
                    FindingCode::DanglingTarget,
                    format!("target `{t}` is not a node"),
                )
                .at(id, path),
            );
        }
    };
    for (ci, choice) in node.choices.iter().enumerate() {
        target(&choice.target, format!("nodes.{id}.choices[{ci}].target"));
    }
    if let Some(t) = &node.pass_target {
        target(t, format!("nodes.{id}.pass_target"));
    }
    if let Some(t) = &node.fail_target {
        target(t, format!("nodes.{id}.fail_target"));
    }
    if let Some(act) = &node.activity {
        for (label, t) in &act.exits {
            target(t, format!("nodes.{id}.activity.exits.{label}"));
        }
    }

    for (ci, choice) in node.choices.iter().enumerate() {
        if let Some(cond) = &choice.condition {
            if let Err(e) = cond.expr().type_check(types) {
                let code = match e {
                    ConditionError::UndeclaredVariable(_) => FindingCode::UndeclaredVariable,
                    ConditionError::TypeMismatch(_) => FindingCode::TypeMismatch,
                    ConditionError::Syntax { .. } => FindingCode::SchemaError,
                };
                report.errors.push(
                    Finding::new(code, e.to_string())
                        .at(id, format!("nodes.{id}.choices[{ci}].condition")),
                );
            }
        }
        check_effects(
            id,
            &choice.effects,
            &format!("nodes.{id}.choices[{ci}].effects"),
            types,
            report,
        );
    }
    check_effects(
        id,
        &node.on_enter_effects,
        &format!("nodes.{id}.on_enter_effects"),
        types,
        report,
    );
}

fn check_effects(
    id: &str,
    effects: &[Effect],
    base: &str,
    types: &BTreeMap<String, VarType>,
    report: &mut ValidationReport,
) {
    for (ei, effect) in effects.iter().enumerate() {
        let path = format!("{base}[{ei}]");
        let (var, wanted) = match effect {
            Effect::Set { var, value } => (var, value.var_type()),
            Effect::Add { var, .. } => (var, VarType::Int),
            Effect::ScoreDelta(_) => continue,
            Effect::CarbonDelta { kg, .. } => {
                if !kg.is_finite() {
                    report.errors.push(
                        Finding::new(FindingCode::TypeMismatch, "carbon_delta must be finite")
                            .at(id, path),
                    );
                }
                continue;
            }
        };
        if var == SCORE_VAR {
            report.errors.push(
                Finding::new(
                    FindingCode::ReservedVariable,
                    "`score` changes only through score_delta and quiz points",
                )
                .at(id, path),
            );
            continue;
        }
        match types.get(var) {
            None => report.errors.push(
                Finding::new(
                    FindingCode::UndeclaredVariable,
                    format!("effect targets undeclared variable `{var}`"),
                )
                .at(id, path),
            ),
            Some(t) if *t != wanted => report.errors.push(
                Finding::new(
                    FindingCode::TypeMismatch,
                    format!("effect writes {wanted} into {t} variable `{var}`"),
                )
                .at(id, path),
            ),
            Some(_) => {}
        }
    }
}

/// Breadth-first reachability over all declared edges, ignoring conditions.
pub fn reachable_from<'a>(doc: &'a ScenarioDocument, start: &'a str) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([start]);
    while let Some(id) = queue.pop_front() {
        let Some(node) = doc.nodes.get(id) else {
            continue;
        };
        if !seen.insert(id) {
            continue;
        }
        for t in node.targets() {
            if !seen.contains(t) {
                queue.push_back(t);
            }
        }
    }
    seen
}

fn can_reach_terminal(doc: &ScenarioDocument) -> BTreeSet<&str> {
    let mut reverse: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, node) in &doc.nodes {
        for t in node.targets() {
            reverse.entry(t).or_default().push(id);
        }
    }
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<&str> = doc
        .nodes
        .iter()
        .filter(|(_, n)| n.kind == NodeKind::Terminal)
        .map(|(id, _)| id.as_str())
        .collect();
    while let Some(id) = queue.pop_front() {
        if !seen.insert(id) {
            continue;
        }
        for &pred in reverse.get(id).into_iter().flatten() {
            if !seen.contains(pred) {
                queue.push_back(pred);
            }
        }
    }
    seen
}
