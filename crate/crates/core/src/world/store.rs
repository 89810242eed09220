//! File-backed persistence: one JSON profile per player and one append-only
//! JSONL record per session, each closed by a CRC-32 of the preceding bytes.
//!
//! Layout under the data directory: `profiles/<player_id>.json` and
//! `sessions/<YYYY-MM-DD>/<session_id>.jsonl`.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::engine::{replay, EngineEvent, OutcomeSummary, PlayerInput};
use crate::scenario::ScenarioDocument;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerProfile {
    pub player_id: String,
    pub display_name: String,
    pub locale: String,
    /// Best outcome per scenario.
    pub completed: BTreeMap<String, OutcomeSummary>,
    pub global_score: i64,
}

impl PlayerProfile {
    pub fn new(player_id: &str, display_name: &str, locale: &str) -> Self {
        PlayerProfile {
            player_id: player_id.to_string(),
            display_name: display_name.to_string(),
            locale: locale.to_string(),
            completed: BTreeMap::new(),
            global_score: 0,
        }
    }

    /// Keeps the higher `final_score`; ties keep the earlier outcome.
    /// Returns whether the stored best changed.
    pub fn record_outcome(&mut self, scenario_id: &str, outcome: &OutcomeSummary) -> bool {
        let better = self
            .completed
            .get(scenario_id)
            .is_none_or(|best| outcome.final_score > best.final_score);
        if better {
            self.completed
                .insert(scenario_id.to_string(), outcome.clone());
            self.global_score = self.completed.values().map(|o| o.final_score).sum();
        }
        better
    }

    pub fn is_consistent(&self) -> bool {
        self.global_score == self.completed.values().map(|o| o.final_score).sum::<i64>()
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("no profile for player `{0}`")]
    UnknownPlayer(String),
    #[error("corrupt record {}: {detail}", path.display())]
    CorruptRecord { path: PathBuf, detail: String },
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::StoreUnavailable(_) => "StoreUnavailable",
            StoreError::UnknownPlayer(_) => "UnknownPlayer",
            StoreError::CorruptRecord { .. } => "CorruptRecord",
        }
    }
}

fn unavailable(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::StoreUnavailable(format!("{}: {e}", path.display()))
}

fn corrupt(path: &Path, detail: impl Into<String>) -> StoreError {
    StoreError::CorruptRecord {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

const CRC_PREFIX: &str = "crc32 ";

fn crc_hex(bytes: &[u8]) -> String {
    format!("{:08x}", crc32fast::hash(bytes))
}

/// True for ids usable as file names: `[a-z0-9_-]+`.
pub fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

#[derive(Debug, Clone)]
pub struct DataStore {
    root: PathBuf,
}

impl DataStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["profiles", "sessions"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| unavailable(&dir, e))?;
        }
        Ok(DataStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn profile_path(&self, player_id: &str) -> Result<PathBuf, StoreError> {
        if !is_safe_id(player_id) {
            return Err(StoreError::UnknownPlayer(player_id.to_string()));
        }
        Ok(self.root.join("profiles").join(format!("{player_id}.json")))
    }

    /// Writes to a temporary file and renames it over the old record.
    pub fn persist_profile(&self, profile: &PlayerProfile) -> Result<(), StoreError> {
        let path = self.profile_path(&profile.player_id)?;
        let mut body = serde_json::to_vec_pretty(profile).expect("profiles always serialize");
        body.push(b'\n');
        let trailer = format!("{CRC_PREFIX}{}\n", crc_hex(&body));
        body.extend_from_slice(trailer.as_bytes());
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, &body).map_err(|e| unavailable(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| unavailable(&path, e))
    }

    pub fn load_profile(&self, player_id: &str) -> Result<PlayerProfile, StoreError> {
        let path = self.profile_path(player_id)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownPlayer(player_id.to_string()))
            }
            Err(e) => return Err(unavailable(&path, e)),
        };
        let (body, crc) = split_trailer(&bytes).ok_or_else(|| corrupt(&path, "missing checksum"))?;
        if crc_hex(body) != crc {
            return Err(corrupt(&path, "checksum mismatch"));
        }
        let profile: PlayerProfile =
            serde_json::from_slice(body).map_err(|e| corrupt(&path, e.to_string()))?;
        if profile.player_id != player_id {
            return Err(corrupt(&path, "player id does not match file name"));
        }
        Ok(profile)
    }

    pub fn create_session(
        &self,
        header: SessionHeader,
        started_at_millis: u64,
    ) -> Result<SessionWriter, StoreError> {
        if !is_safe_id(&header.session_id) {
            return Err(StoreError::StoreUnavailable(format!(
                "unsafe session id `{}`",
                header.session_id
            )));
        }
        let dir = self
            .root
            .join("sessions")
            .join(date_dir(started_at_millis));
        fs::create_dir_all(&dir).map_err(|e| unavailable(&dir, e))?;
        let path = dir.join(format!("{}.jsonl", header.session_id));
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|e| unavailable(&path, e))?;
        let mut writer = SessionWriter {
            path,
            file,
            hasher: crc32fast::Hasher::new(),
            inputs: 0,
        };
        writer.line(&SessionLine::Header(header))?;
        Ok(writer)
    }

    /// Every session record file, sorted by path.
    pub fn session_files(&self) -> Result<Vec<PathBuf>, StoreError> {
        let root = self.root.join("sessions");
        let mut out = Vec::new();
        let days = fs::read_dir(&root).map_err(|e| unavailable(&root, e))?;
        for day in days {
            let day = day.map_err(|e| unavailable(&root, e))?.path();
            if !day.is_dir() {
                continue;
            }
            for f in fs::read_dir(&day).map_err(|e| unavailable(&day, e))? {
                let f = f.map_err(|e| unavailable(&day, e))?.path();
                if f.extension().is_some_and(|x| x == "jsonl") {
                    out.push(f);
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

fn split_trailer(bytes: &[u8]) -> Option<(&[u8], &str)> {
    let text = std::str::from_utf8(bytes).ok()?;
    let trimmed = text.strip_suffix('\n')?;
    let cut = trimmed.rfind('\n')? + 1;
    let crc = trimmed[cut..].strip_prefix(CRC_PREFIX)?;
    Some((&bytes[..cut], crc))
}

pub fn date_dir(millis: u64) -> String {
    chrono::DateTime::from_timestamp_millis(millis as i64)
        .unwrap_or_default()
        .format("%Y-%m-%d")
        .to_string()
}

pub fn rfc3339(millis: u64) -> String {
    chrono::DateTime::from_timestamp_millis(millis as i64)
        .unwrap_or_default()
        .to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub session_id: String,
    pub player_id: String,
    pub scenario_id: String,
    pub seed: u64,
    pub locale: String,
    pub started_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatusTag {
    Finished,
    /// Replaced by a new session or the player disconnected.
    Abandoned,
    /// Closed by server shutdown.
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFooter {
    pub ended_at: String,
    pub status: SessionStatusTag,
    pub outcome: Option<OutcomeSummary>,
    pub crc32: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum SessionLine {
    Header(SessionHeader),
    Input { index: usize, input: PlayerInput },
    Footer(SessionFooter),
}

/// Event lines are kept out of [`SessionLine`] so the raw event bytes are
/// written and read back untouched.
#[derive(Serialize, Deserialize)]
struct EventLine<'a> {
    record: &'a str,
    #[serde(borrow)]
    event: &'a RawValue,
}

const EVENT_TAG: &str = "event";

#[derive(Deserialize)]
struct Tag<'a> {
    #[serde(borrow)]
    record: &'a str,
}

/// Appends lines to an open session record. Dropping it without `close`
/// leaves a record without footer, which loads as corrupt.
#[derive(Debug)]
pub struct SessionWriter {
    path: PathBuf,
    file: File,
    hasher: crc32fast::Hasher,
    inputs: usize,
}

impl SessionWriter {
    pub fn path(&self) -> &Path {
        &self.path
    }

    fn line(&mut self, line: &impl Serialize) -> Result<(), StoreError> {
        let mut text = serde_json::to_string(line).expect("session lines always serialize");
        text.push('\n');
        self.hasher.update(text.as_bytes());
        self.file
            .write_all(text.as_bytes())
            .map_err(|e| unavailable(&self.path, e))
    }

    pub fn write_input(&mut self, input: &PlayerInput) -> Result<(), StoreError> {
        let index = self.inputs;
        self.inputs += 1;
        self.line(&SessionLine::Input {
            index,
            input: input.clone(),
        })
    }

    pub fn write_events(&mut self, events: &[EngineEvent]) -> Result<(), StoreError> {
        for e in events {
            let raw = serde_json::value::to_raw_value(e).expect("events always serialize");
            self.line(&EventLine {
                record: EVENT_TAG,
                event: &raw,
            })?;
        }
        Ok(())
    }

    pub fn close(
        mut self,
        ended_at: String,
        status: SessionStatusTag,
        outcome: Option<OutcomeSummary>,
    ) -> Result<PathBuf, StoreError> {
        let crc32 = format!("{:08x}", self.hasher.clone().finalize());
        self.line(&SessionLine::Footer(SessionFooter {
            ended_at,
            status,
            outcome,
            crc32,
        }))?;
        self.file
            .sync_all()
            .map_err(|e| unavailable(&self.path, e))?;
        Ok(self.path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub header: SessionHeader,
    pub inputs: Vec<PlayerInput>,
    /// Events exactly as stored.
    pub events_raw: Vec<String>,
    pub footer: SessionFooter,
}

impl SessionRecord {
    pub fn events(&self) -> Result<Vec<EngineEvent>, serde_json::Error> {
        self.events_raw.iter().map(|e| serde_json::from_str(e)).collect()
    }
}

pub fn load_session_record(path: &Path) -> Result<SessionRecord, StoreError> {
    let bytes = fs::read(path).map_err(|e| unavailable(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| corrupt(path, "not UTF-8"))?;
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| corrupt(path, "truncated last line"))?;
    let footer_start = body.rfind('\n').map_or(0, |i| i + 1);
    let footer: SessionLine = serde_json::from_str(&body[footer_start..])
        .map_err(|e| corrupt(path, format!("footer: {e}")))?;
    let SessionLine::Footer(footer) = footer else {
        return Err(corrupt(path, "missing footer"));
    };
    if crc_hex(&bytes[..footer_start]) != footer.crc32 {
        return Err(corrupt(path, "checksum mismatch"));
    }
    let mut header = None;
    let mut inputs = Vec::new();
    let mut events_raw = Vec::new();
    for (n, line) in text[..footer_start].lines().enumerate() {
        let bad = |e: serde_json::Error| corrupt(path, format!("line {}: {e}", n + 1));
        let tag: Tag = serde_json::from_str(line).map_err(bad)?;
        if tag.record == EVENT_TAG {
            let ev: EventLine = serde_json::from_str(line).map_err(bad)?;
            events_raw.push(ev.event.get().to_string());
            continue;
        }
        match serde_json::from_str(line).map_err(bad)? {
            SessionLine::Header(h) if n == 0 => header = Some(h),
            SessionLine::Input { index, input } if index == inputs.len() => inputs.push(input),
            _ => return Err(corrupt(path, format!("unexpected line {}", n + 1))),
        }
    }
    Ok(SessionRecord {
        header: header.ok_or_else(|| corrupt(path, "missing header"))?,
        inputs,
        events_raw,
        footer,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayMismatch {
    #[error("scenario `{0}` is not loaded")]
    UnknownScenario(String),
    #[error("replay failed: {0}")]
    Replay(String),
    #[error("replay produced {replayed} events, record has {recorded}")]
    Length { replayed: usize, recorded: usize },
    #[error("event {index} differs")]
    Event { index: usize },
}

/// Re-runs the record's inputs from its seed and compares every event byte for byte.
pub fn verify_replay(record: &SessionRecord, doc: &ScenarioDocument) -> Result<(), ReplayMismatch> {
    if doc.id != record.header.scenario_id {
        return Err(ReplayMismatch::UnknownScenario(record.header.scenario_id.clone()));
    }
    let events = replay(doc, record.header.seed, &record.inputs)
        .map_err(|e| ReplayMismatch::Replay(e.to_string()))?;
    if events.len() != record.events_raw.len() {
        return Err(ReplayMismatch::Length {
            replayed: events.len(),
            recorded: record.events_raw.len(),
        });
    }
    for (index, (e, raw)) in events.iter().zip(&record.events_raw).enumerate() {
        if serde_json::to_string(e).expect("events always serialize") != *raw {
            return Err(ReplayMismatch::Event { index });
        }
    }
    Ok(())
}
