use std::path::{Path, PathBuf};

use serde_json::json;

use raise_core::engine::{events_to_jsonl, PlayerInput};
use raise_core::play::{input_limit, play, PlayPolicy};
use raise_core::scenario::{load_scenario_file, PackError};

use crate::CliError;

pub struct PlayArgs {
    pub scenario: PathBuf,
    pub seed: u64,
    pub policy: Vec<String>,
    pub locale: Option<String>,
    pub out: Option<PathBuf>,
    pub record_inputs: Option<PathBuf>,
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse_policy(args: &[String], seed: u64) -> Result<PlayPolicy, CliError> {
    match args {
        [p] if p == "random" => Ok(PlayPolicy::Random(seed)),
        [p] if p == "first_choice" => Ok(PlayPolicy::FirstChoice),
        [p, file] if p == "scripted" => {
            let path = Path::new(file);
            let bytes =
                std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let inputs: Vec<PlayerInput> = serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
            Ok(PlayPolicy::Scripted(inputs))
        }
        [p] if p == "scripted" => Err(CliError::Usage(
            "--policy scripted needs an input-list file".into(),
        )),
        _ => Err(CliError::Usage(format!(
            "unknown policy {:?}; expected random, first_choice or scripted <file>",
            args.join(" ")
        ))),
    }
}

pub fn run(args: &PlayArgs) -> Result<(), CliError> {
    let policy = parse_policy(&args.policy, args.seed)?;
    let doc = load_scenario_file(&args.scenario).map_err(|e| match e {
        PackError::Io { .. } => CliError::Io(e.to_string()),
        _ => CliError::Domain(e.to_string()),
    })?;
    let report = raise_core::validate_graph(&doc);
    if !report.errors.is_empty() {
        for f in &report.errors {
            eprintln!("  error   {f}");
        }
        return Err(CliError::Domain(format!(
            "{} has {} validation error(s)",
            args.scenario.display(),
            report.errors.len()
        )));
    }
    let locale = args.locale.clone().unwrap_or_else(|| doc.default_locale.clone());
    let limit = match policy {
        PlayPolicy::Scripted(ref inputs) => inputs.len(),
        _ => input_limit(&doc),
    };
    let run = play(&doc, args.seed, &locale, &policy, limit)
        .map_err(|e| CliError::Domain(e.to_string()))?;

    let mut log = events_to_jsonl(&run.events);
    log.push_str(&serde_json::to_string(&json!({ "outcome_summary": run.summary })).expect("summaries serialize"));
    log.push('\n');
    match &args.out {
        Some(path) => write_file(path, &log)?,
        None => crate::emit(&log)?,
    }
    if let Some(path) = &args.record_inputs {
        let mut text = serde_json::to_string_pretty(&run.inputs).expect("inputs serialize");
        text.push('\n');
        write_file(path, &text)?;
    }
    Ok(())
}
