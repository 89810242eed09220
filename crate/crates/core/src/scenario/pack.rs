//! Content packs: scenarios, per-locale string bundles and the NPC registry,
//! loaded from a directory holding `pack.json` and `strings.<locale>.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::validate::{validate_graph, Finding, FindingCode, ValidationReport};
use super::{load_scenario_file, ScenarioDocument, ScenarioError};
use crate::engine::activity;

pub const MANIFEST_FILE: &str = "pack.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpcEntry {
    pub name_key: String,
    pub role_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackManifest {
    pub schema_version: u32,
    pub id: String,
    pub default_locale: String,
    pub locales: Vec<String>,
    /// Scenario file names relative to the pack directory.
    pub scenarios: Vec<String>,
    #[serde(default)]
    pub npcs: BTreeMap<String, NpcEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentPack {
    pub manifest: PackManifest,
    pub scenarios: Vec<ScenarioDocument>,
    pub bundles: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Debug, Error)]
pub enum PackError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Scenario {
        path: PathBuf,
        #[source]
        source: ScenarioError,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("unknown text key `{0}`")]
    UnknownKey(String),
}

fn read(path: &Path) -> Result<Vec<u8>, PackError> {
    std::fs::read(path).map_err(|source| PackError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PackError> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| PackError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn bundle_file_name(locale: &str) -> String {
    format!("strings.{locale}.json")
}

impl ContentPack {
    pub fn load(dir: &Path) -> Result<Self, PackError> {
        let manifest: PackManifest = read_json(&dir.join(MANIFEST_FILE))?;
        let mut bundles = BTreeMap::new();
        for locale in &manifest.locales {
            let bundle: BTreeMap<String, String> =
                read_json(&dir.join(bundle_file_name(locale)))?;
            bundles.insert(locale.clone(), bundle);
        }
        let scenarios = manifest
            .scenarios
            .iter()
            .map(|file| load_scenario_file(&dir.join(file)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ContentPack {
            manifest,
            scenarios,
            bundles,
        })
    }

    pub fn scenario(&self, id: &str) -> Option<&ScenarioDocument> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn default_locale(&self) -> &str {
        &self.manifest.default_locale
    }

    pub fn supports_locale(&self, locale: &str) -> bool {
        self.bundles.contains_key(locale)
    }

    pub fn npc(&self, id: &str) -> Option<&NpcEntry> {
        self.manifest.npcs.get(id)
    }

    /// Validates one document in the context of this pack: graph checks plus
    /// NPC references and text-key resolution in every supported locale.
    pub fn validate_scenario(&self, doc: &ScenarioDocument) -> ValidationReport {
        let mut report = validate_graph(doc);
        for (node_id, node) in &doc.nodes {
            if let Some(speaker) = &node.speaker {
                if !self.manifest.npcs.contains_key(speaker) {
                    report.errors.push(
                        Finding::new(
                            FindingCode::UnknownNpc,
                            format!("speaker `{speaker}` is not in the NPC registry"),
                        )
                        .at(node_id, format!("nodes.{node_id}.speaker")),
                    );
                }
            }
        }

        let default = self.default_locale();
        let mut reported = BTreeSet::new();
        for (key, node, path) in referenced_keys(doc, self) {
            if !reported.insert(key.clone()) {
                continue;
            }
            let locate = |f: Finding| match &node {
                Some(n) => f.at(n, path.clone()),
                None => f.with_path(path.clone()),
            };
            if !self.has_key(default, &key) {
                report.errors.push(locate(Finding::new(
                    FindingCode::UnknownTextKey,
                    format!("`{key}` is missing from the default locale `{default}`"),
                )));
                continue;
            }
            for locale in &doc.supported_locales {
                if locale != default && !self.has_key(locale, &key) {
                    report.warnings.push(locate(Finding::new(
                        FindingCode::MissingTranslation,
                        format!("`{key}` has no `{locale}` translation"),
                    )));
                }
            }
        }
        report
    }

    /// Reports keyed by scenario id, plus pack-level findings under `pack`.
    pub fn validate(&self) -> Vec<(String, ValidationReport)> {
        let mut out = Vec::new();
        let mut pack_report = ValidationReport::default();
        let mut ids = BTreeSet::new();
        for doc in &self.scenarios {
            if !ids.insert(doc.id.as_str()) {
                pack_report.errors.push(Finding::new(
                    FindingCode::DuplicateScenario,
                    format!("scenario id `{}` appears twice", doc.id),
                ));
            }
        }
        if !self.manifest.locales.contains(&self.manifest.default_locale) {
            pack_report.errors.push(Finding::new(
                FindingCode::UnsupportedLocale,
                "pack default_locale is not listed in locales",
            ));
        }
        for doc in &self.scenarios {
            for locale in &doc.supported_locales {
                if !self.supports_locale(locale) {
                    pack_report.errors.push(Finding::new(
                        FindingCode::UnsupportedLocale,
                        format!("scenario `{}` lists locale `{locale}` with no bundle", doc.id),
                    ));
                }
            }
        }
        out.push(("pack".to_string(), pack_report));
        for doc in &self.scenarios {
            out.push((doc.id.clone(), self.validate_scenario(doc)));
        }
        out
    }

    fn has_key(&self, locale: &str, key: &str) -> bool {
        self.bundles.get(locale).is_some_and(|b| b.contains_key(key))
    }
}

/// Looks a key up in `locale`, falling back to the pack's default locale.
pub fn resolve_text<'a>(
    pack: &'a ContentPack,
    key: &str,
    locale: &str,
) -> Result<&'a str, PackError> {
    pack.bundles
        .get(locale)
        .and_then(|b| b.get(key))
        .or_else(|| pack.bundles.get(pack.default_locale()).and_then(|b| b.get(key)))
        .map(String::as_str)
        .ok_or_else(|| PackError::UnknownKey(key.to_string()))
}

/// Every text key a document can surface, with the node and path that uses it.
pub fn referenced_keys(
    doc: &ScenarioDocument,
    pack: &ContentPack,
) -> Vec<(String, Option<String>, String)> {
    let mut out = vec![(doc.title_key.clone(), None, "title_key".to_string())];
    for (i, k) in doc.learning_objectives.iter().enumerate() {
        out.push((k.clone(), None, format!("learning_objectives[{i}]")));
    }
    for (id, node) in &doc.nodes {
        let mut push = |key: &str, path: String| out.push((key.to_string(), Some(id.clone()), path));
        let base = format!("nodes.{id}");
        push(&node.text_key, format!("{base}.text_key"));
        if let Some(speaker) = node.speaker.as_deref().and_then(|s| pack.npc(s)) {
            push(&speaker.name_key, format!("{base}.speaker"));
            push(&speaker.role_key, format!("{base}.speaker"));
        }
        if let Some(k) = &node.outcome_key {
            push(k, format!("{base}.outcome_key"));
        }
        for (ci, c) in node.choices.iter().enumerate() {
            push(&c.text_key, format!("{base}.choices[{ci}].text_key"));
            for (ei, e) in c.effects.iter().enumerate() {
                if let super::Effect::CarbonDelta { reason_key, .. } = e {
                    push(reason_key, format!("{base}.choices[{ci}].effects[{ei}]"));
                }
            }
        }
        for (ei, e) in node.on_enter_effects.iter().enumerate() {
            if let super::Effect::CarbonDelta { reason_key, .. } = e {
                push(reason_key, format!("{base}.on_enter_effects[{ei}]"));
            }
        }
        for (qi, q) in node.questions.iter().enumerate() {
            let qb = format!("{base}.questions[{qi}]");
            push(&q.text_key, format!("{qb}.text_key"));
            push(&q.hint_key, format!("{qb}.hint_key"));
            for (oi, o) in q.options.iter().enumerate() {
                push(&o.text_key, format!("{qb}.options[{oi}].text_key"));
            }
        }
        if let Some(act) = &node.activity {
            for key in activity::text_keys(act) {
                push(&key, format!("{base}.activity"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures;

    fn pack() -> ContentPack {
        let bundle = |pairs: &[(&str, &str)]| {
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<BTreeMap<_, _>>()
        };
        ContentPack {
            manifest: PackManifest {
                schema_version: 1,
                id: "test".into(),
                default_locale: "en".into(),
                locales: vec!["en".into(), "el".into()],
                scenarios: vec![],
                npcs: BTreeMap::new(),
            },
            scenarios: vec![fixtures::two_node()],
            bundles: BTreeMap::from([
                (
                    "en".to_string(),
                    bundle(&[
                        ("mini.title", "Mini"),
                        ("mini.start", "Hello"),
                        ("mini.c1", "Go"),
                        ("mini.end", "Bye"),
                        ("mini.outcome", "Done"),
                    ]),
                ),
                ("el".to_string(), bundle(&[("mini.start", "Γεια")])),
            ]),
        }
    }

    #[test]
    fn resolve_prefers_requested_locale() {
        assert_eq!(resolve_text(&pack(), "mini.start", "el").unwrap(), "Γεια");
        assert_eq!(resolve_text(&pack(), "mini.start", "en").unwrap(), "Hello");
    }

    #[test]
    fn resolve_falls_back_to_default() {
        assert_eq!(resolve_text(&pack(), "mini.c1", "el").unwrap(), "Go");
        assert_eq!(resolve_text(&pack(), "mini.c1", "xx").unwrap(), "Go");
    }

    #[test]
    fn resolve_unknown_key() {
        assert!(matches!(
            resolve_text(&pack(), "nope", "en"),
            Err(PackError::UnknownKey(k)) if k == "nope"
        ));
    }

    #[test]
    fn pack_validation_flags_translations_and_npcs() {
        let mut p = pack();
        let mut doc = p.scenarios[0].clone();
        doc.supported_locales.push("el".into());
        doc.nodes.get_mut("start").unwrap().speaker = Some("ghost".into());
        p.scenarios = vec![doc.clone()];
        let report = p.validate_scenario(&doc);
        assert_eq!(
            report.errors.iter().map(|f| f.code).collect::<Vec<_>>(),
            vec![FindingCode::UnknownNpc]
        );
        let missing: BTreeSet<_> = report
            .warnings
            .iter()
            .filter(|f| f.code == FindingCode::MissingTranslation)
            .map(|f| f.detail.split('`').nth(1).unwrap().to_string())
            .collect();
        assert_eq!(
            missing,
            ["mini.title", "mini.c1", "mini.end", "mini.outcome"]
                .into_iter()
                .map(String::from)
                .collect()
        );
    }
}
