use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use raise_core::scenario::pack::{bundle_file_name, MANIFEST_FILE};
use raise_core::scenario::{
    load_scenario_file, ContentPack, Finding, FindingCode, PackError, PackManifest, ScenarioError,
    ValidationReport,
};

use crate::CliError;

#[derive(Serialize)]
struct DocumentReport {
    document: String,
    path: String,
    ok: bool,
    errors: Vec<Finding>,
    warnings: Vec<Finding>,
}

fn decode_finding(e: &ScenarioError) -> Finding {
    let code = match e {
        ScenarioError::Syntax(_) => FindingCode::SyntaxError,
        ScenarioError::Version { .. } => FindingCode::VersionError,
        _ => FindingCode::SchemaError,
    };
    match e {
        ScenarioError::Schema { path, .. } => Finding::new(code, e.to_string()).with_path(path.clone()),
        _ => Finding::new(code, e.to_string()),
    }
}

/// A pack error becomes a finding; `None` when the path could not be read.
fn pack_finding(e: &PackError) -> Option<Finding> {
    match e {
        PackError::Io { .. } => None,
        PackError::Scenario { source, .. } => Some(decode_finding(source)),
        PackError::Format { .. } => Some(Finding::new(FindingCode::SchemaError, e.to_string())),
        PackError::UnknownKey(_) => Some(Finding::new(FindingCode::UnknownTextKey, e.to_string())),
    }
}

fn failed(path: &Path, document: &str, finding: Finding) -> DocumentReport {
    DocumentReport {
        document: document.to_string(),
        path: path.display().to_string(),
        ok: false,
        errors: vec![finding],
        warnings: vec![],
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Manifest and bundles of the pack next to a scenario file, if there is one.
fn sibling_pack(file: &Path) -> Result<Option<ContentPack>, CliError> {
    let dir = file.parent().unwrap_or_else(|| Path::new("."));
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Ok(None);
    }
    let manifest: PackManifest = read_json(&manifest_path)?;
    let mut bundles = BTreeMap::new();
    for locale in &manifest.locales {
        let bundle: BTreeMap<String, String> = read_json(&dir.join(bundle_file_name(locale)))?;
        bundles.insert(locale.clone(), bundle);
    }
    Ok(Some(ContentPack {
        manifest,
        scenarios: Vec::new(),
        bundles,
    }))
}

fn validate_file(path: &Path) -> Result<DocumentReport, CliError> {
    let name = path.display().to_string();
    let doc = match load_scenario_file(path) {
        Ok(doc) => doc,
        Err(e) => {
            return pack_finding(&e)
                .map(|f| failed(path, &name, f))
                .ok_or_else(|| CliError::Io(e.to_string()))
        }
    };
    let report = match sibling_pack(path)? {
        Some(pack) => pack.validate_scenario(&doc),
        None => raise_core::validate_graph(&doc),
    };
    Ok(document_report(path, &doc.id, report))
}

fn document_report(path: &Path, document: &str, report: ValidationReport) -> DocumentReport {
    DocumentReport {
        document: document.to_string(),
        path: path.display().to_string(),
        ok: report.errors.is_empty(),
        errors: report.errors,
        warnings: report.warnings,
    }
}

fn validate_dir(dir: &Path) -> Result<Vec<DocumentReport>, CliError> {
    match ContentPack::load(dir) {
        Ok(pack) => Ok(pack
            .validate()
            .into_iter()
            .map(|(id, report)| {
                let path = if id == "pack" {
                    dir.join(MANIFEST_FILE)
                } else {
                    dir.to_path_buf()
                };
                document_report(&path, &id, report)
            })
            .collect()),
        Err(e) => {
            let path = match &e {
                PackError::Scenario { path, .. } | PackError::Format { path, .. } => path.clone(),
                _ => dir.to_path_buf(),
            };
            pack_finding(&e)
                .map(|f| vec![failed(&path, &path.display().to_string(), f)])
                .ok_or_else(|| CliError::Io(e.to_string()))
        }
    }
}

fn text_report(r: &DocumentReport, out: &mut String) {
    use std::fmt::Write;
    if r.errors.is_empty() && r.warnings.is_empty() {
        let _ = writeln!(out, "{}: ok", r.document);
        return;
    }
    let _ = writeln!(
        out,
        "{}: {} error(s), {} warning(s)",
        r.document,
        r.errors.len(),
        r.warnings.len()
    );
    for f in &r.errors {
        let _ = writeln!(out, "  error   {f}");
    }
    for f in &r.warnings {
        let _ = writeln!(out, "  warning {f}");
    }
}

pub fn run(paths: &[PathBuf], json: bool, strict: bool) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for path in paths {
        if path.is_dir() {
            reports.extend(validate_dir(path)?);
        } else if path.is_file() {
            reports.push(validate_file(path)?);
        } else {
            return Err(CliError::Io(format!("{}: no such file or directory", path.display())));
        }
    }
    let mut text = String::new();
    if json {
        text = serde_json::to_string_pretty(&reports).expect("reports always serialize");
        text.push('\n');
    } else {
        reports.iter().for_each(|r| text_report(r, &mut text));
    }
    crate::emit(&text)?;
    let errors: usize = reports.iter().map(|r| r.errors.len()).sum();
    let warnings: usize = reports.iter().map(|r| r.warnings.len()).sum();
    if errors > 0 || (strict && warnings > 0) {
        return Err(CliError::Domain(format!(
            "{errors} error(s), {warnings} warning(s)"
        )));
    }
    Ok(())
}
