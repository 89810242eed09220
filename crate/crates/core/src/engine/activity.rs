//! Activity nodes: configuration parsing and result resolution for the
//! wind-farm and carbon-day minigames.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::carbon::{
    assess_footprint_with, record_activity, CarbonLedger, EmissionCatalog, Tier, TierBounds,
};
use crate::scenario::{ActivityKind, ActivityRef, Effect, PackError, ScenarioDocument};
use crate::windfarm::{
    brute_force_best, evaluate_layout, Cell, FarmLayout, WindFarmChallenge, ORACLE_MAX_CELLS,
    ORACLE_MAX_TURBINES,
};

pub const WIND_FARM_EXITS: [&str; 2] = ["pass", "fail"];
pub const CARBON_DAY_EXITS: [&str; 3] = ["low", "medium", "high"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PassThreshold {
    /// Fraction of the exhaustive optimum's score.
    FractionOfOptimum(f64),
    Score(f64),
}

impl Default for PassThreshold {
    fn default() -> Self {
        PassThreshold::FractionOfOptimum(0.8)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindFarmParams {
    pub challenge: WindFarmChallenge,
    #[serde(default)]
    pub pass_threshold: PassThreshold,
    /// Scenario points awarded on a passing layout.
    #[serde(default)]
    pub points: i64,
}

impl WindFarmParams {
    pub fn threshold(&self) -> Result<f64, String> {
        match self.pass_threshold {
            PassThreshold::Score(s) => Ok(s),
            PassThreshold::FractionOfOptimum(f) => {
                let (_, best) = brute_force_best(&self.challenge).map_err(|e| e.to_string())?;
                Ok(f * best.score.unwrap_or(0.0))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CatalogSource {
    /// Path relative to the scenario file; replaced by the inline form on load.
    File(String),
    Inline(EmissionCatalog),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierPoints {
    #[serde(default)]
    pub low: i64,
    #[serde(default)]
    pub medium: i64,
    #[serde(default)]
    pub high: i64,
}

impl TierPoints {
    fn for_tier(&self, tier: Tier) -> i64 {
        match tier {
            Tier::Low => self.low,
            Tier::Medium => self.medium,
            Tier::High => self.high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarbonDayParams {
    pub catalog: CatalogSource,
    pub budget_kg: f64,
    #[serde(default)]
    pub tiers: TierBounds,
    #[serde(default)]
    pub points: TierPoints,
}

impl CarbonDayParams {
    pub fn catalog(&self) -> Result<&EmissionCatalog, String> {
        match &self.catalog {
            CatalogSource::Inline(c) => Ok(c),
            CatalogSource::File(f) => Err(format!("catalog file reference `{f}` was not resolved")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActivityConfig {
    WindFarm(WindFarmParams),
    CarbonDay(CarbonDayParams),
}

impl ActivityConfig {
    pub fn parse(act: &ActivityRef) -> Result<Self, String> {
        let params = act.params.clone();
        match act.kind {
            ActivityKind::WindFarm => serde_json::from_value(params)
                .map(ActivityConfig::WindFarm)
                .map_err(|e| format!("wind_farm params: {e}")),
            ActivityKind::CarbonDay => serde_json::from_value(params)
                .map(ActivityConfig::CarbonDay)
                .map_err(|e| format!("carbon_day params: {e}")),
        }
    }
}

pub fn exit_labels(kind: ActivityKind) -> &'static [&'static str] {
    match kind {
        ActivityKind::WindFarm => &WIND_FARM_EXITS,
        ActivityKind::CarbonDay => &CARBON_DAY_EXITS,
    }
}

/// Everything the engine needs to run the activity without faulting.
pub fn check_activity(act: &ActivityRef) -> Result<(), String> {
    let wanted: BTreeSet<&str> = exit_labels(act.kind).iter().copied().collect();
    let have: BTreeSet<&str> = act.exits.keys().map(String::as_str).collect();
    if wanted != have {
        return Err(format!(
            "{} activity needs exits {:?}, found {:?}",
            act.kind, wanted, have
        ));
    }
    match ActivityConfig::parse(act)? {
        ActivityConfig::WindFarm(p) => {
            p.challenge.check().map_err(|e| e.to_string())?;
            match p.pass_threshold {
                PassThreshold::FractionOfOptimum(f) => {
                    if !(0.0..=1.0).contains(&f) {
                        return Err("fraction_of_optimum must lie in [0, 1]".into());
                    }
                    let cells = p.challenge.buildable_cells().len();
                    if cells > ORACLE_MAX_CELLS || p.challenge.max_turbines > ORACLE_MAX_TURBINES {
                        return Err(format!(
                            "fraction_of_optimum needs an exhaustively solvable grid \
                             (<= {ORACLE_MAX_CELLS} buildable cells, <= {ORACLE_MAX_TURBINES} turbines)"
                        ));
                    }
                }
                PassThreshold::Score(s) if !s.is_finite() => {
                    return Err("pass score must be finite".into())
                }
                PassThreshold::Score(_) => {}
            }
        }
        ActivityConfig::CarbonDay(p) => {
            p.catalog()?.check().map_err(|e| e.to_string())?;
            if !(p.budget_kg > 0.0 && p.budget_kg.is_finite()) {
                return Err("budget_kg must be positive".into());
            }
            if !(p.tiers.low_max > 0.0 && p.tiers.low_max <= p.tiers.medium_max)
                || !p.tiers.medium_max.is_finite()
            {
                return Err("tier bounds need 0 < low_max <= medium_max".into());
            }
        }
    }
    Ok(())
}

/// Text keys an activity can surface: feedback keys and option labels.
pub fn text_keys(act: &ActivityRef) -> Vec<String> {
    match ActivityConfig::parse(act) {
        Ok(ActivityConfig::WindFarm(_)) => WIND_FARM_EXITS
            .iter()
            .map(|e| format!("windfarm.feedback.{e}"))
            .collect(),
        Ok(ActivityConfig::CarbonDay(p)) => {
            let mut keys: Vec<String> = Tier::ALL.iter().map(|t| t.feedback_key()).collect();
            if let Ok(c) = p.catalog() {
                keys.extend(c.options().map(|(_, o)| o.label_key.clone()));
            }
            keys
        }
        Err(_) => Vec::new(),
    }
}

/// Rewrites `"catalog": "<file>"` references into inline catalogs.
pub fn resolve_file_refs(doc: &mut ScenarioDocument, base: &Path) -> Result<(), PackError> {
    for node in doc.nodes.values_mut() {
        let Some(act) = node.activity.as_mut() else {
            continue;
        };
        if act.kind != ActivityKind::CarbonDay {
            continue;
        }
        let Some(file) = act.params.get("catalog").and_then(Json::as_str) else {
            continue;
        };
        let path = base.join(file);
        let bytes = std::fs::read(&path).map_err(|source| PackError::Io {
            path: path.clone(),
            source,
        })?;
        let catalog = EmissionCatalog::from_json(&bytes).map_err(|e| PackError::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        act.params["catalog"] =
            serde_json::to_value(catalog).expect("catalogs always serialize to JSON");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindFarmResult {
    pub placements: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarbonEntryInput {
    pub option_id: String,
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarbonDayResult {
    pub entries: Vec<CarbonEntryInput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityOutcome {
    pub exit: String,
    pub effects: Vec<Effect>,
    pub feedback_key: String,
    pub detail: Json,
}

/// Interprets a player's activity result. `carbon_before` is the session's
/// running carbon total, which the carbon-day tier is assessed against.
pub fn resolve(
    config: &ActivityConfig,
    result: &Json,
    carbon_before: f64,
) -> Result<ActivityOutcome, String> {
    match config {
        ActivityConfig::WindFarm(p) => {
            let r: WindFarmResult =
                serde_json::from_value(result.clone()).map_err(|e| e.to_string())?;
            let n = r.placements.len();
            let layout = FarmLayout::new(r.placements);
            if layout.len() != n {
                return Err("placements repeat a cell".into());
            }
            let eval = evaluate_layout(&p.challenge, &layout).map_err(|e| e.to_string())?;
            let Some(score) = eval.score else {
                return Err(format!("layout is infeasible: {:?}", eval.violations));
            };
            let threshold = p.threshold()?;
            let passed = score >= threshold;
            let exit = if passed { "pass" } else { "fail" };
            let effects = if passed && p.points != 0 {
                vec![Effect::ScoreDelta(p.points)]
            } else {
                Vec::new()
            };
            Ok(ActivityOutcome {
                exit: exit.to_string(),
                effects,
                feedback_key: format!("windfarm.feedback.{exit}"),
                detail: json!({
                    "layout": layout,
                    "evaluation": eval,
                    "threshold": threshold,
                }),
            })
        }
        ActivityConfig::CarbonDay(p) => {
            let catalog = p.catalog()?;
            let r: CarbonDayResult =
                serde_json::from_value(result.clone()).map_err(|e| e.to_string())?;
            let mut ledger = CarbonLedger::new();
            for e in &r.entries {
                ledger = record_activity(catalog, &ledger, &e.option_id, e.quantity)
                    .map_err(|e| e.to_string())?;
            }
            let mut effects = Vec::new();
            // Same order and arithmetic the engine uses to apply the deltas.
            let mut total_after = carbon_before;
            for entry in ledger.entries() {
                let (_, option) = catalog
                    .find(&entry.option_id)
                    .expect("ledger entries come from the catalog");
                total_after += entry.emitted;
                effects.push(Effect::CarbonDelta {
                    kg: entry.emitted,
                    reason_key: option.label_key.clone(),
                });
            }
            let assessment = assess_footprint_with(total_after, p.budget_kg, p.tiers)
                .map_err(|e| e.to_string())?;
            let points = p.points.for_tier(assessment.tier);
            if points != 0 {
                effects.push(Effect::ScoreDelta(points));
            }
            Ok(ActivityOutcome {
                exit: assessment.tier.as_str().to_string(),
                effects,
                feedback_key: assessment.feedback_key.clone(),
                detail: json!({
                    "ledger": ledger,
                    "assessment": assessment,
                }),
            })
        }
    }
}
