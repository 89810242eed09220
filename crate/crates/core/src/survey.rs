//! Knowledge / attitudes / behaviour questionnaire: instrument loading,
//! CSV response ingestion and aggregate statistics.
//!
//! Percentages exclude missing answers from the denominator and are rounded
//! half-up to one decimal using integer arithmetic, so constructed fixtures
//! reproduce published figures exactly. Missing counts are reported alongside.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CANONICAL_ID: &str = "raise-v1";
pub const DEMOGRAPHIC_COLUMNS: [&str; 5] =
    ["respondent_id", "age", "gender", "country", "school_year"];
pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;
pub const MULTI_SEPARATOR: char = ';';

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockId {
    Knowledge,
    Attitudes,
    Behavior,
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockId::Knowledge => "knowledge",
            BlockId::Attitudes => "attitudes",
            BlockId::Behavior => "behavior",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    SingleChoice,
    MultiChoice,
    Likert,
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ItemKind::SingleChoice => "single_choice",
            ItemKind::MultiChoice => "multi_choice",
            ItemKind::Likert => "likert",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemOption {
    pub option_id: String,
    pub text_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikertScale {
    pub min: u8,
    pub max: u8,
    pub anchor_low_key: String,
    pub anchor_high_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Item {
    pub item_id: String,
    pub text_key: String,
    pub kind: ItemKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<ItemOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<LikertScale>,
}

impl Item {
    fn has_option(&self, id: &str) -> bool {
        self.options.iter().any(|o| o.option_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub block_id: BlockId,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyInstrument {
    pub id: String,
    pub title_key: String,
    pub sociodemographics: Vec<String>,
    pub blocks: Vec<Block>,
}

impl SurveyInstrument {
    pub fn items(&self) -> impl Iterator<Item = (BlockId, &Item)> {
        self.blocks
            .iter()
            .flat_map(|b| b.items.iter().map(move |i| (b.block_id, i)))
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.items().map(|(_, i)| i).find(|i| i.item_id == id)
    }

    pub fn block(&self, id: BlockId) -> Option<&Block> {
        self.blocks.iter().find(|b| b.block_id == id)
    }

    /// Item counts by kind within one block.
    pub fn kind_counts(&self, id: BlockId) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for item in self.block(id).into_iter().flat_map(|b| &b.items) {
            *out.entry(item.kind.to_string()).or_insert(0) += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SurveyError {
    #[error("instrument schema error: {0}")]
    Schema(String),
    #[error("instrument `{CANONICAL_ID}` has the wrong shape: {0}")]
    CanonicalShape(String),
    #[error("CSV header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("bad value at row {row}, column `{column}`: {detail}")]
    BadValue {
        row: usize,
        column: String,
        detail: String,
    },
    #[error("respondent `{0}` appears more than once")]
    DuplicateRespondent(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("item `{item}` has no option `{option}`")]
    UnknownOption { item: String, option: String },
    #[error("no responses")]
    NoResponses,
    #[error("item `{0}` is not a likert item")]
    NotLikert(String),
    #[error("bucket is empty")]
    EmptyBucket,
    #[error("bucket value {0} is outside the 1..5 scale")]
    InvalidBucket(u8),
}

impl SurveyError {
    pub fn code(&self) -> &'static str {
        match self {
            SurveyError::Schema(_) => "SchemaError",
            SurveyError::CanonicalShape(_) => "CanonicalShapeError",
            SurveyError::HeaderMismatch(_) => "HeaderMismatch",
            SurveyError::BadValue { .. } => "BadValue",
            SurveyError::DuplicateRespondent(_) => "DuplicateRespondent",
            SurveyError::Csv(_) => "CsvError",
            SurveyError::UnknownItem(_) => "UnknownItem",
            SurveyError::UnknownOption { .. } => "UnknownOption",
            SurveyError::NoResponses => "NoResponses",
            SurveyError::NotLikert(_) => "NotLikert",
            SurveyError::EmptyBucket => "EmptyBucket",
            SurveyError::InvalidBucket(_) => "InvalidBucket",
        }
    }
}

pub fn load_instrument(bytes: &[u8]) -> Result<SurveyInstrument, SurveyError> {
    let instrument: SurveyInstrument = serde_path_to_error::deserialize(
        &mut serde_json::Deserializer::from_slice(bytes),
    )
    .map_err(|e| SurveyError::Schema(format!("{} at `{}`", e.inner(), e.path())))?;
    check_items(&instrument)?;
    if instrument.id == CANONICAL_ID {
        check_canonical(&instrument)?;
    }
    Ok(instrument)
}

fn check_items(instrument: &SurveyInstrument) -> Result<(), SurveyError> {
    let schema = |m: String| Err(SurveyError::Schema(m));
    let mut ids = BTreeSet::new();
    let mut blocks = BTreeSet::new();
    for block in &instrument.blocks {
        if !blocks.insert(block.block_id) {
            return schema(format!("block `{}` appears twice", block.block_id));
        }
    }
    for (_, item) in instrument.items() {
        if !ids.insert(item.item_id.as_str()) {
            return schema(format!("item id `{}` appears twice", item.item_id));
        }
        if DEMOGRAPHIC_COLUMNS.contains(&item.item_id.as_str()) {
            return schema(format!("item id `{}` clashes with a demographic column", item.item_id));
        }
        match item.kind {
            ItemKind::Likert => {
                let Some(scale) = &item.scale else {
                    return schema(format!("likert item `{}` needs a scale", item.item_id));
                };
                if scale.min != LIKERT_MIN || scale.max != LIKERT_MAX {
                    return schema(format!("likert item `{}` must use a 1..5 scale", item.item_id));
                }
                if !item.options.is_empty() {
                    return schema(format!("likert item `{}` must not list options", item.item_id));
                }
            }
            ItemKind::SingleChoice | ItemKind::MultiChoice => {
                if item.scale.is_some() {
                    return schema(format!("choice item `{}` must not have a scale", item.item_id));
                }
                if item.options.len() < 2 {
                    return schema(format!("choice item `{}` needs at least two options", item.item_id));
                }
                let mut seen = BTreeSet::new();
                for o in &item.options {
                    if o.option_id.is_empty() || o.option_id.contains(MULTI_SEPARATOR) {
                        return schema(format!(
                            "option id `{}` of `{}` must be non-empty and free of `{MULTI_SEPARATOR}`",
                            o.option_id, item.item_id
                        ));
                    }
                    if !seen.insert(&o.option_id) {
                        return schema(format!(
                            "item `{}` repeats option `{}`",
                            item.item_id, o.option_id
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Block structure of the canonical instrument: 21 single-choice items plus
/// one multiple-choice item on knowledge, 4 single-choice plus 6 Likert items
/// on attitudes, and 24 Likert items on behaviour.
pub const CANONICAL_SHAPE: [(BlockId, &[(ItemKind, usize)]); 3] = [
    (
        BlockId::Knowledge,
        &[(ItemKind::SingleChoice, 21), (ItemKind::MultiChoice, 1)],
    ),
    (
        BlockId::Attitudes,
        &[(ItemKind::SingleChoice, 4), (ItemKind::Likert, 6)],
    ),
    (BlockId::Behavior, &[(ItemKind::Likert, 24)]),
];

pub const CANONICAL_DEMOGRAPHICS: [&str; 4] = ["age", "gender", "country", "school_year"];

fn check_canonical(instrument: &SurveyInstrument) -> Result<(), SurveyError> {
    let order: Vec<BlockId> = instrument.blocks.iter().map(|b| b.block_id).collect();
    let wanted: Vec<BlockId> = CANONICAL_SHAPE.iter().map(|(b, _)| *b).collect();
    if order != wanted {
        return Err(SurveyError::CanonicalShape(format!(
            "blocks must be {wanted:?}, found {order:?}"
        )));
    }
    if instrument.sociodemographics != CANONICAL_DEMOGRAPHICS {
        return Err(SurveyError::CanonicalShape(format!(
            "sociodemographics must be {CANONICAL_DEMOGRAPHICS:?}"
        )));
    }
    for (block_id, kinds) in CANONICAL_SHAPE {
        let block = instrument.block(block_id).expect("order checked above");
        let total: usize = kinds.iter().map(|(_, n)| n).sum();
        for (kind, n) in kinds {
            let found = block.items.iter().filter(|i| i.kind == *kind).count();
            if found != *n {
                return Err(SurveyError::CanonicalShape(format!(
                    "{block_id} needs {n} {kind} items, found {found}"
                )));
            }
        }
        if block.items.len() != total {
            return Err(SurveyError::CanonicalShape(format!(
                "{block_id} needs exactly {total} items, found {}",
                block.items.len()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Likert(u8),
    Option(String),
    Options(BTreeSet<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sociodemographics {
    pub age: Option<u32>,
    pub gender: Option<String>,
    pub country: Option<String>,
    pub school_year: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub respondent_id: String,
    pub sociodemographics: Sociodemographics,
    pub answers: BTreeMap<String, Answer>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseSet {
    pub instrument: SurveyInstrument,
    pub rows: Vec<ResponseRow>,
}

impl ResponseSet {
    pub fn instrument_id(&self) -> &str {
        &self.instrument.id
    }
}

fn non_empty(s: &str) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| t.to_string())
}

/// Parses a responses CSV: five demographic columns, then one column per
/// instrument item in any order. Empty cells are missing answers.
pub fn ingest_responses(
    instrument: &SurveyInstrument,
    csv_bytes: &[u8],
) -> Result<ResponseSet, SurveyError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| SurveyError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.len() < DEMOGRAPHIC_COLUMNS.len()
        || header[..DEMOGRAPHIC_COLUMNS.len()] != DEMOGRAPHIC_COLUMNS
    {
        return Err(SurveyError::HeaderMismatch(format!(
            "header must start with {}",
            DEMOGRAPHIC_COLUMNS.join(",")
        )));
    }
    let item_columns = &header[DEMOGRAPHIC_COLUMNS.len()..];
    let mut columns = Vec::with_capacity(item_columns.len());
    let mut seen = BTreeSet::new();
    for name in item_columns {
        let item = instrument
            .item(name)
            .ok_or_else(|| SurveyError::HeaderMismatch(format!("unknown item column `{name}`")))?;
        if !seen.insert(name.as_str()) {
            return Err(SurveyError::HeaderMismatch(format!("column `{name}` repeats")));
        }
        columns.push(item);
    }
    if let Some((_, missing)) = instrument.items().find(|(_, i)| !seen.contains(i.item_id.as_str())) {
        return Err(SurveyError::HeaderMismatch(format!(
            "missing item column `{}`",
            missing.item_id
        )));
    }

    let mut rows = Vec::new();
    let mut ids = BTreeSet::new();
    for (index, record) in reader.records().enumerate() {
        let row_no = index + 1;
        let record = record.map_err(|e| SurveyError::Csv(e.to_string()))?;
        let bad = |column: &str, detail: String| SurveyError::BadValue {
            row: row_no,
            column: column.to_string(),
            detail,
        };
        let field = |i: usize| record.get(i).unwrap_or("");
        let respondent_id = non_empty(field(0))
            .ok_or_else(|| bad("respondent_id", "respondent_id is required".into()))?;
        if !ids.insert(respondent_id.clone()) {
            return Err(SurveyError::DuplicateRespondent(respondent_id));
        }
        let age = match non_empty(field(1)) {
            None => None,
            Some(a) => Some(
                a.parse::<u32>()
                    .map_err(|_| bad("age", format!("`{a}` is not a whole number")))?,
            ),
        };
        let sociodemographics = Sociodemographics {
            age,
            gender: non_empty(field(2)),
            country: non_empty(field(3)),
            school_year: non_empty(field(4)),
        };
        let mut answers = BTreeMap::new();
        for (offset, item) in columns.iter().enumerate() {
            let Some(cell) = non_empty(field(DEMOGRAPHIC_COLUMNS.len() + offset)) else {
                continue;
            };
            let answer = match item.kind {
                ItemKind::Likert => {
                    let v = cell
                        .parse::<u8>()
                        .ok()
                        .filter(|v| (LIKERT_MIN..=LIKERT_MAX).contains(v))
                        .ok_or_else(|| bad(&item.item_id, format!("`{cell}` is not in 1..5")))?;
                    Answer::Likert(v)
                }
                ItemKind::SingleChoice => {
                    if !item.has_option(&cell) {
                        return Err(bad(&item.item_id, format!("`{cell}` is not an option")));
                    }
                    Answer::Option(cell)
                }
                ItemKind::MultiChoice => {
                    let mut set = BTreeSet::new();
                    for part in cell.split(MULTI_SEPARATOR).map(str::trim) {
                        if !item.has_option(part) {
                            return Err(bad(&item.item_id, format!("`{part}` is not an option")));
                        }
                        set.insert(part.to_string());
                    }
                    Answer::Options(set)
                }
            };
            answers.insert(item.item_id.clone(), answer);
        }
        rows.push(ResponseRow {
            respondent_id,
            sociodemographics,
            answers,
        });
    }
    Ok(ResponseSet {
        instrument: instrument.clone(),
        rows,
    })
}

/// `round_half_up(count / denom × scale)` in exact integer arithmetic.
fn round_half_up(count: u64, denom: u64, scale: u64) -> u64 {
    (count * scale * 2 + denom) / (2 * denom)
}

fn percent(count: usize, denom: usize) -> f64 {
    round_half_up(count as u64, denom as u64, 1000) as f64 / 10.0
}

fn answered<'a>(rs: &'a ResponseSet, item_id: &'a str) -> impl Iterator<Item = &'a Answer> + 'a {
    rs.rows.iter().filter_map(move |r| r.answers.get(item_id))
}

fn choice_selects(answer: &Answer, option_id: &str) -> bool {
    match answer {
        Answer::Option(o) => o == option_id,
        Answer::Options(set) => set.contains(option_id),
        Answer::Likert(_) => false,
    }
}

/// Share of non-missing respondents who chose (or, for multi-choice items,
/// included) the option. One decimal, rounded half-up.
pub fn option_percentage(rs: &ResponseSet, item_id: &str, option_id: &str) -> Result<f64, SurveyError> {
    let item = rs
        .instrument
        .item(item_id)
        .ok_or_else(|| SurveyError::UnknownItem(item_id.to_string()))?;
    if item.kind == ItemKind::Likert || !item.has_option(option_id) {
        return Err(SurveyError::UnknownOption {
            item: item_id.to_string(),
            option: option_id.to_string(),
        });
    }
    let (n, hits) = answered(rs, item_id).fold((0, 0), |(n, h), a| {
        (n + 1, h + usize::from(choice_selects(a, option_id)))
    });
    if n == 0 {
        return Err(SurveyError::NoResponses);
    }
    Ok(percent(hits, n))
}

fn check_bucket(bucket: &BTreeSet<u8>) -> Result<(), SurveyError> {
    if bucket.is_empty() {
        return Err(SurveyError::EmptyBucket);
    }
    if let Some(v) = bucket.iter().find(|v| !(LIKERT_MIN..=LIKERT_MAX).contains(*v)) {
        return Err(SurveyError::InvalidBucket(*v));
    }
    Ok(())
}

/// Share of non-missing respondents whose Likert answer falls in `bucket`.
pub fn bucket_percentage(
    rs: &ResponseSet,
    item_id: &str,
    bucket: &BTreeSet<u8>,
) -> Result<f64, SurveyError> {
    let item = rs
        .instrument
        .item(item_id)
        .ok_or_else(|| SurveyError::UnknownItem(item_id.to_string()))?;
    if item.kind != ItemKind::Likert {
        return Err(SurveyError::NotLikert(item_id.to_string()));
    }
    check_bucket(bucket)?;
    let (n, hits) = answered(rs, item_id).fold((0, 0), |(n, h), a| match a {
        Answer::Likert(v) => (n + 1, h + usize::from(bucket.contains(v))),
        _ => (n, h),
    });
    if n == 0 {
        return Err(SurveyError::NoResponses);
    }
    Ok(percent(hits, n))
}

pub const NEVER_RARELY: &str = "never_rarely";
pub const OFTEN_ALWAYS: &str = "often_always";

/// Standard buckets reported for every Likert item.
pub fn standard_buckets() -> Vec<(&'static str, BTreeSet<u8>)> {
    vec![
        (NEVER_RARELY, BTreeSet::from([1, 2])),
        (OFTEN_ALWAYS, BTreeSet::from([4, 5])),
    ]
}

/// A bucket by name (`never_rarely`, `often_always`) or as comma-separated values (`1`, `4,5`).
pub fn parse_bucket(spec: &str) -> Result<(String, BTreeSet<u8>), SurveyError> {
    if let Some((name, set)) = standard_buckets().into_iter().find(|(n, _)| *n == spec) {
        return Ok((name.to_string(), set));
    }
    let mut set = BTreeSet::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let v: u8 = part.parse().map_err(|_| SurveyError::EmptyBucket)?;
        set.insert(v);
    }
    check_bucket(&set)?;
    let name = set.iter().map(u8::to_string).collect::<Vec<_>>().join(",");
    Ok((name, set))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub value: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketShare {
    pub bucket: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub block: BlockId,
    pub item_id: String,
    pub kind: ItemKind,
    pub answered: usize,
    pub missing: usize,
    /// Option shares for choice items, value 1..5 shares for Likert items.
    pub distribution: Vec<Share>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buckets: Vec<BucketShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub instrument_id: String,
    pub respondents: usize,
    pub items: Vec<ItemReport>,
}

pub fn summary_report(rs: &ResponseSet) -> Result<AggregateReport, SurveyError> {
    if rs.rows.is_empty() {
        return Err(SurveyError::NoResponses);
    }
    let mut items: Vec<(BlockId, &Item)> = rs.instrument.items().collect();
    items.sort_by(|(ba, a), (bb, b)| ba.cmp(bb).then_with(|| a.item_id.cmp(&b.item_id)));
    let reports = items
        .into_iter()
        .map(|(block, item)| item_report(rs, block, item))
        .collect();
    Ok(AggregateReport {
        instrument_id: rs.instrument.id.clone(),
        respondents: rs.rows.len(),
        items: reports,
    })
}

fn item_report(rs: &ResponseSet, block: BlockId, item: &Item) -> ItemReport {
    let answers: Vec<&Answer> = answered(rs, &item.item_id).collect();
    let n = answers.len();
    let share = |value: String, count: usize| Share {
        percent: if n == 0 { 0.0 } else { percent(count, n) },
        value,
        count,
    };
    let mut report = ItemReport {
        block,
        item_id: item.item_id.clone(),
        kind: item.kind,
        answered: n,
        missing: rs.rows.len() - n,
        distribution: Vec::new(),
        mean: None,
        buckets: Vec::new(),
    };
    match item.kind {
        ItemKind::SingleChoice | ItemKind::MultiChoice => {
            report.distribution = item
                .options
                .iter()
                .map(|o| {
                    let count = answers
                        .iter()
                        .filter(|a| choice_selects(a, &o.option_id))
                        .count();
                    share(o.option_id.clone(), count)
                })
                .collect();
        }
        ItemKind::Likert => {
            let values: Vec<u8> = answers
                .iter()
                .filter_map(|a| match a {
                    Answer::Likert(v) => Some(*v),
                    _ => None,
                })
                .collect();
            report.distribution = (LIKERT_MIN..=LIKERT_MAX)
                .map(|v| share(v.to_string(), values.iter().filter(|x| **x == v).count()))
                .collect();
            if n > 0 {
                let sum: u64 = values.iter().map(|v| *v as u64).sum();
                report.mean = Some(round_half_up(sum, n as u64, 100) as f64 / 100.0);
                report.buckets = standard_buckets()
                    .into_iter()
                    .map(|(name, set)| BucketShare {
                        bucket: name.to_string(),
                        percent: percent(values.iter().filter(|v| set.contains(v)).count(), n),
                    })
                    .collect();
            }
        }
    }
    report
}

impl AggregateReport {
    /// Keeps only the named items (all when empty) and replaces the bucket
    /// list of Likert items with `buckets` when non-empty.
    pub fn filtered(
        &self,
        rs: &ResponseSet,
        items: &[String],
        buckets: &[(String, BTreeSet<u8>)],
    ) -> Result<AggregateReport, SurveyError> {
        for id in items {
            if rs.instrument.item(id).is_none() {
                return Err(SurveyError::UnknownItem(id.clone()));
            }
        }
        let mut out = self.clone();
        out.items.retain(|i| items.is_empty() || items.contains(&i.item_id));
        if !buckets.is_empty() {
            for item in &mut out.items {
                if item.kind != ItemKind::Likert {
                    continue;
                }
                item.buckets = buckets
                    .iter()
                    .filter_map(|(name, set)| {
                        bucket_percentage(rs, &item.item_id, set)
                            .ok()
                            .map(|percent| BucketShare {
                                bucket: name.clone(),
                                percent,
                            })
                    })
                    .collect();
            }
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "instrument {}  respondents {}",
            self.instrument_id, self.respondents
        );
        let mut block = None;
        for item in &self.items {
            if block != Some(item.block) {
                block = Some(item.block);
                let _ = writeln!(out, "\n[{}]", item.block);
            }
            let _ = write!(
                out,
                "{} ({})  answered {}  missing {}",
                item.item_id, item.kind, item.answered, item.missing
            );
            if let Some(mean) = item.mean {
                let _ = write!(out, "  mean {mean:.2}");
            }
            out.push('\n');
            let width = item
                .distribution
                .iter()
                .map(|s| s.value.len())
                .chain(item.buckets.iter().map(|b| b.bucket.len()))
                .max()
                .unwrap_or(0);
            for s in &item.distribution {
                let _ = writeln!(out, "  {:<width$}  {:>5.1}", s.value, s.percent);
            }
            for b in &item.buckets {
                let _ = writeln!(out, "  {:<width$}  {:>5.1}", b.bucket, b.percent);
            }
        }
        out
    }
}
