//! Carbon Champions: a daily-choices carbon calculator.
//!
//! Options come from an [`EmissionCatalog`] (kg CO2e per meal, km or kWh).
//! The ledger keeps a compensated running sum so totals stay within 1e-9 kg
//! of the exact value across thousands of entries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Meal,
    Transport,
    Energy,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Meal => "meal",
            Category::Transport => "transport",
            Category::Energy => "energy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionOption {
    pub option_id: String,
    pub label_key: String,
    /// kg CO2e per unit.
    pub factor: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionCatalog {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub categories: BTreeMap<Category, Vec<EmissionOption>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CarbonError {
    #[error("unknown emission option `{0}`")]
    UnknownOption(String),
    #[error("quantity must be a non-negative number, got {0}")]
    NegativeQuantity(f64),
    #[error("footprint budget must be positive, got {0}")]
    NonPositiveBudget(f64),
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
}

impl EmissionCatalog {
    pub fn from_json(bytes: &[u8]) -> Result<Self, CarbonError> {
        let catalog: EmissionCatalog =
            serde_json::from_slice(bytes).map_err(|e| CarbonError::InvalidCatalog(e.to_string()))?;
        catalog.check()?;
        Ok(catalog)
    }

    /// Factors must be finite and non-negative; option ids unique across the catalog.
    pub fn check(&self) -> Result<(), CarbonError> {
        let mut seen = BTreeSet::new();
        for (category, options) in &self.categories {
            for o in options {
                if !(o.factor >= 0.0 && o.factor.is_finite()) {
                    return Err(CarbonError::InvalidCatalog(format!(
                        "option `{}` has factor {}",
                        o.option_id, o.factor
                    )));
                }
                if !seen.insert(o.option_id.as_str()) {
                    return Err(CarbonError::InvalidCatalog(format!(
                        "option `{}` appears twice (seen again in {category})",
                        o.option_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn find(&self, option_id: &str) -> Option<(Category, &EmissionOption)> {
        self.categories.iter().find_map(|(c, opts)| {
            opts.iter()
                .find(|o| o.option_id == option_id)
                .map(|o| (*c, o))
        })
    }

    pub fn options(&self) -> impl Iterator<Item = (Category, &EmissionOption)> {
        self.categories
            .iter()
            .flat_map(|(c, opts)| opts.iter().map(move |o| (*c, o)))
    }
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub option_id: String,
    pub category: Category,
    pub quantity: f64,
    pub emitted: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CarbonLedger {
    entries: Vec<LedgerEntry>,
    acc: CompensatedSum,
}

impl CarbonLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.acc.value()
    }
}

impl Serialize for CarbonLedger {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            entries: &'a [LedgerEntry],
            total: f64,
        }
        View {
            entries: &self.entries,
            total: self.total(),
        }
        .serialize(s)
    }
}

/// Returns a new ledger with one more entry; `emitted = factor × quantity`.
pub fn record_activity(
    catalog: &EmissionCatalog,
    ledger: &CarbonLedger,
    option_id: &str,
    quantity: f64,
) -> Result<CarbonLedger, CarbonError> {
    let (category, option) = catalog
        .find(option_id)
        .ok_or_else(|| CarbonError::UnknownOption(option_id.to_string()))?;
    if !(quantity >= 0.0 && quantity.is_finite()) {
        return Err(CarbonError::NegativeQuantity(quantity));
    }
    let emitted = option.factor * quantity;
    let mut next = ledger.clone();
    next.entries.push(LedgerEntry {
        option_id: option_id.to_string(),
        category,
        quantity,
        emitted,
    });
    next.acc.add(emitted);
    Ok(next)
}

pub fn ledger_total(ledger: &CarbonLedger) -> f64 {
    ledger.total()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Low,
    Medium,
    High,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Low => "low",
            Tier::Medium => "medium",
            Tier::High => "high",
        }
    }

    pub fn feedback_key(self) -> String {
        format!("carbon.feedback.{}", self.as_str())
    }

    pub const ALL: [Tier; 3] = [Tier::Low, Tier::Medium, Tier::High];
}

/// Tier thresholds as multiples of the budget: low up to `low_max`, medium up
/// to `medium_max`, high beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierBounds {
    pub low_max: f64,
    pub medium_max: f64,
}

impl Default for TierBounds {
    fn default() -> Self {
        TierBounds {
            low_max: 1.0,
            medium_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintAssessment {
    pub tier: Tier,
    pub feedback_key: String,
    pub total: f64,
    pub budget: f64,
}

pub fn assess_footprint(total: f64, budget: f64) -> Result<FootprintAssessment, CarbonError> {
    assess_footprint_with(total, budget, TierBounds::default())
}

pub fn assess_footprint_with(
    total: f64,
    budget: f64,
    bounds: TierBounds,
) -> Result<FootprintAssessment, CarbonError> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(CarbonError::NonPositiveBudget(budget));
    }
    let tier = if total <= bounds.low_max * budget {
        Tier::Low
    } else if total <= bounds.medium_max * budget {
        Tier::Medium
    } else {
        Tier::High
    };
    Ok(FootprintAssessment {
        tier,
        feedback_key: tier.feedback_key(),
        total,
        budget,
    })
}
