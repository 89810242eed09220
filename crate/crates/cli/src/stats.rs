use std::path::Path;

use raise_core::survey::{parse_bucket, SurveyError};
use raise_core::{ingest_responses, load_instrument, summary_report};

use crate::CliError;

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn domain(e: SurveyError) -> CliError {
    CliError::Domain(format!("{}: {e}", e.code()))
}

pub fn run(
    instrument: &Path,
    responses: &Path,
    items: &[String],
    buckets: &[String],
    json: bool,
) -> Result<(), CliError> {
    let inst = load_instrument(&read(instrument)?).map_err(domain)?;
    let rs = ingest_responses(&inst, &read(responses)?).map_err(domain)?;
    let buckets = buckets
        .iter()
        .map(|b| parse_bucket(b))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let report = summary_report(&rs)
        .and_then(|r| r.filtered(&rs, items, &buckets))
        .map_err(domain)?;
    if json {
        let mut text = serde_json::to_string_pretty(&report).expect("reports always serialize");
        text.push('\n');
        crate::emit(&text)
    } else {
        crate::emit(&report.to_text())
    }
}
