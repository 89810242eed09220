//! Scenario documents: the branching graphs the engine walks.
//!
//! A document is a map of nodes (dialogue, info, quiz, activity, terminal)
//! connected by choices, quiz pass/fail targets, and activity exits. Text is
//! never stored inline; nodes carry dot-separated text keys resolved against
//! per-locale bundles in a [`ContentPack`](pack::ContentPack).

pub mod condition;
pub mod pack;
pub mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use condition::{parse_condition, parse_expr, Condition, ConditionError, Expr};
pub use pack::{resolve_text, ContentPack, NpcEntry, PackError, PackManifest};
pub use validate::{validate_graph, Finding, FindingCode, ValidationReport};

pub const SCHEMA_VERSION: u32 = 1;

/// Name of the reserved integer variable every session carries.
pub const SCORE_VAR: &str = "score";

pub type NodeId = String;
pub type TextKey = String;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(String),
}

impl Value {
    pub fn var_type(&self) -> VarType {
        match self {
            Value::Int(_) => VarType::Int,
            Value::Bool(_) => VarType::Bool,
            Value::Str(_) => VarType::Str,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarType {
    Int,
    Bool,
    Str,
}

impl fmt::Display for VarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarType::Int => "integer",
            VarType::Bool => "boolean",
            VarType::Str => "string",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub schema_version: u32,
    pub id: String,
    pub default_locale: String,
    pub supported_locales: Vec<String>,
    pub title_key: TextKey,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub learning_objectives: Vec<TextKey>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub variables: BTreeMap<String, Value>,
    pub entry_node: NodeId,
    pub nodes: BTreeMap<NodeId, Node>,
}

impl ScenarioDocument {
    /// Declared variables plus the reserved `score`, as a type table.
    pub fn variable_types(&self) -> BTreeMap<String, VarType> {
        let mut table: BTreeMap<String, VarType> = self
            .variables
            .iter()
            .map(|(k, v)| (k.clone(), v.var_type()))
            .collect();
        table.entry(SCORE_VAR.to_string()).or_insert(VarType::Int);
        table
    }

    /// Initial session variables: declared values plus `score = 0` when absent.
    pub fn initial_variables(&self) -> BTreeMap<String, Value> {
        let mut vars = self.variables.clone();
        vars.entry(SCORE_VAR.to_string()).or_insert(Value::Int(0));
        vars
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario documents always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Dialogue,
    Quiz,
    Activity,
    Info,
    Terminal,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Dialogue => "dialogue",
            NodeKind::Quiz => "quiz",
            NodeKind::Activity => "activity",
            NodeKind::Info => "info",
            NodeKind::Terminal => "terminal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    pub text_key: TextKey,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Choice>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub questions: Vec<QuizQuestion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_target: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_target: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<ActivityRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_key: Option<TextKey>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub on_enter_effects: Vec<Effect>,
}

impl Node {
    /// Outgoing edges, in declaration order: choices, pass, fail, activity exits.
    pub fn targets(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.choices.iter().map(|c| c.target.as_str()).collect();
        out.extend(self.pass_target.as_deref());
        out.extend(self.fail_target.as_deref());
        if let Some(activity) = &self.activity {
            out.extend(activity.exits.values().map(String::as_str));
        }
        out
    }

    pub fn choice(&self, id: &str) -> Option<&Choice> {
        self.choices.iter().find(|c| c.id == id)
    }

    pub fn question(&self, id: &str) -> Option<&QuizQuestion> {
        self.questions.iter().find(|q| q.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Choice {
    pub id: String,
    pub text_key: TextKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<Effect>,
    pub target: NodeId,
}

impl Choice {
    pub fn is_enabled(&self, vars: &BTreeMap<String, Value>) -> bool {
        self.condition.as_ref().is_none_or(|c| c.expr().eval(vars))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    Set { var: String, value: Value },
    Add { var: String, delta: i64 },
    ScoreDelta(i64),
    CarbonDelta { kg: f64, reason_key: TextKey },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuizOption {
    pub option_id: String,
    pub text_key: TextKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuizQuestion {
    pub id: String,
    pub text_key: TextKey,
    pub options: Vec<QuizOption>,
    pub correct_option: String,
    pub hint_key: TextKey,
    #[serde(default)]
    pub points: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    WindFarm,
    CarbonDay,
}

impl fmt::Display for ActivityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivityKind::WindFarm => "wind_farm",
            ActivityKind::CarbonDay => "carbon_day",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityRef {
    pub kind: ActivityKind,
    /// Kind-specific configuration; interpreted by [`crate::engine::activity`].
    #[serde(default)]
    pub params: serde_json::Value,
    /// Exit label → node. Labels are fixed per kind (`pass`/`fail`, `low`/`medium`/`high`).
    pub exits: BTreeMap<String, NodeId>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Version { found: String },
}

impl ScenarioError {
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::Syntax(_) => "SyntaxError",
            ScenarioError::Schema { .. } => "SchemaError",
            ScenarioError::Version { .. } => "VersionError",
        }
    }
}

/// Structural decode: JSON syntax, schema version, field shapes and condition
/// syntax. Graph soundness is left to [`validate_graph`].
pub fn decode_scenario(bytes: &[u8]) -> Result<ScenarioDocument, ScenarioError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ScenarioError::Syntax(format!("input is not UTF-8: {e}")))?;
    let raw: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
    match raw.get("schema_version") {
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
        Some(v) => {
            return Err(ScenarioError::Version {
                found: v.to_string(),
            })
        }
        None if raw.is_object() => {
            return Err(ScenarioError::Schema {
                path: "schema_version".into(),
                message: "missing field `schema_version`".into(),
            })
        }
        None => {
            return Err(ScenarioError::Schema {
                path: ".".into(),
                message: "document must be a JSON object".into(),
            })
        }
    }
    serde_path_to_error::deserialize(raw).map_err(|e| ScenarioError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Strict load: [`decode_scenario`] plus every graph-validation error, the
/// first of which is reported as a schema error at its location.
pub fn parse_scenario(bytes: &[u8]) -> Result<ScenarioDocument, ScenarioError> {
    let doc = decode_scenario(bytes)?;
    let report = validate_graph(&doc);
    if let Some(first) = report.errors.first() {
        return Err(ScenarioError::Schema {
            path: first.path.clone().unwrap_or_else(|| ".".into()),
            message: format!("{}: {}", first.code, first.detail),
        });
    }
    Ok(doc)
}

/// Reads a scenario file and resolves file references in its activity
/// params (carbon catalogs) relative to the file's directory.
pub fn load_scenario_file(path: &Path) -> Result<ScenarioDocument, PackError> {
    let bytes = std::fs::read(path).map_err(|source| PackError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut doc = decode_scenario(&bytes).map_err(|source| PackError::Scenario {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    crate::engine::activity::resolve_file_refs(&mut doc, base)?;
    Ok(doc)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Entry dialogue with one choice into a terminal.
    pub fn two_node() -> ScenarioDocument {
        let json = r#"{
            "schema_version": 1,
            "id": "mini",
            "default_locale": "en",
            "supported_locales": ["en"],
            "title_key": "mini.title",
            "entry_node": "start",
            "nodes": {
                "start": {
                    "kind": "dialogue",
                    "text_key": "mini.start",
                    "choices": [{"id": "c1", "text_key": "mini.c1", "target": "end"}]
                },
                "end": {"kind": "terminal", "text_key": "mini.end", "outcome_key": "mini.outcome"}
            }
        }"#;
        parse_scenario(json.as_bytes()).unwrap()
    }
}
