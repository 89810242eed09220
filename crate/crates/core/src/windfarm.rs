//! Wind Farm Challenge: site turbines on a grid under budget and siting rules.
//!
//! Energy uses a cut-in/rated/cut-out power curve with a cubic ramp. Wakes are
//! a neighbour-count penalty: each other turbine within Chebyshev distance 2
//! costs 10% of a turbine's gross output, capped at 50%. Protected cells are
//! unbuildable, and turbines next to protected or residential cells pay an
//! environmental penalty.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_HOURS: f64 = 8760.0;
const WAKE_RADIUS: u32 = 2;
const WAKE_STEP: f64 = 0.1;
const WAKE_CAP: f64 = 0.5;
const PROTECTED_PENALTY: f64 = 4.0;
const RESIDENTIAL_PENALTY: f64 = 2.0;
/// Oracle guard: buildable cells and turbine count.
pub const ORACLE_MAX_CELLS: usize = 16;
pub const ORACLE_MAX_TURBINES: u32 = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WindFarmError {
    #[error("wind speed must be a non-negative number, got {0}")]
    NegativeWindSpeed(f64),
    #[error("cell ({x}, {y}) is outside the {width}x{height} grid")]
    OutOfGrid {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("instance too large for exhaustive search: {cells} buildable cells, {turbines} turbines")]
    InstanceTooLarge { cells: usize, turbines: u32 },
    #[error("invalid challenge: {0}")]
    InvalidChallenge(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCurve {
    pub cut_in: f64,
    pub rated_speed: f64,
    pub cut_out: f64,
    pub rated_power_mw: f64,
}

impl Default for PowerCurve {
    fn default() -> Self {
        PowerCurve {
            cut_in: 3.0,
            rated_speed: 12.0,
            cut_out: 25.0,
            rated_power_mw: 2.0,
        }
    }
}

impl PowerCurve {
    /// Output in MW at hub-height wind speed `v` (m/s).
    pub fn power(&self, v: f64) -> Result<f64, WindFarmError> {
        if !(v >= 0.0) {
            return Err(WindFarmError::NegativeWindSpeed(v));
        }
        Ok(if v < self.cut_in || v > self.cut_out {
            0.0
        } else if v >= self.rated_speed {
            self.rated_power_mw
        } else {
            let ci3 = self.cut_in.powi(3);
            self.rated_power_mw * (v.powi(3) - ci3) / (self.rated_speed.powi(3) - ci3)
        })
    }

    fn check(&self) -> Result<(), String> {
        let finite = [self.cut_in, self.rated_speed, self.cut_out, self.rated_power_mw]
            .iter()
            .all(|x| x.is_finite());
        if !finite || self.cut_in < 0.0 || self.rated_power_mw < 0.0 {
            return Err("power curve constants must be finite and non-negative".into());
        }
        if !(self.cut_in < self.rated_speed && self.rated_speed <= self.cut_out) {
            return Err("power curve needs cut_in < rated_speed <= cut_out".into());
        }
        Ok(())
    }
}

/// Power in MW for the standard 2 MW curve (3 / 12 / 25 m/s).
pub fn turbine_power(v: f64) -> Result<f64, WindFarmError> {
    PowerCurve::default().power(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Open,
    Protected,
    Residential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub wind_speed: f64,
    pub zone: Zone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWeights {
    pub w_energy: f64,
    pub w_budget: f64,
    pub w_env: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            w_energy: 1.0,
            w_budget: 0.5,
            w_env: 500.0,
        }
    }
}

fn default_hours() -> f64 {
    DEFAULT_HOURS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindFarmChallenge {
    pub width: u32,
    pub height: u32,
    /// `cells[y][x]`.
    pub cells: Vec<Vec<CellSpec>>,
    pub budget: f64,
    pub turbine_cost: f64,
    pub max_turbines: u32,
    #[serde(default = "default_hours")]
    pub hours: f64,
    #[serde(default)]
    pub score_weights: ScoreWeights,
    #[serde(default)]
    pub power_curve: PowerCurve,
}

impl WindFarmChallenge {
    /// Builds a challenge from row-major cells with default hours, weights and curve.
    pub fn new(
        rows: Vec<Vec<CellSpec>>,
        budget: f64,
        turbine_cost: f64,
        max_turbines: u32,
    ) -> Result<Self, WindFarmError> {
        let ch = WindFarmChallenge {
            height: rows.len() as u32,
            width: rows.first().map_or(0, |r| r.len() as u32),
            cells: rows,
            budget,
            turbine_cost,
            max_turbines,
            hours: DEFAULT_HOURS,
            score_weights: ScoreWeights::default(),
            power_curve: PowerCurve::default(),
        };
        ch.check()?;
        Ok(ch)
    }

    pub fn check(&self) -> Result<(), WindFarmError> {
        let bad = |m: String| Err(WindFarmError::InvalidChallenge(m));
        if self.width == 0 || self.height == 0 {
            return bad("grid must be at least 1x1".into());
        }
        if self.cells.len() != self.height as usize
            || self.cells.iter().any(|r| r.len() != self.width as usize)
        {
            return bad(format!("rows must form a {}x{} grid", self.width, self.height));
        }
        if self
            .cells
            .iter()
            .flatten()
            .any(|c| !(c.wind_speed >= 0.0 && c.wind_speed.is_finite()))
        {
            return bad("wind speeds must be finite and >= 0".into());
        }
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return bad("budget must be finite and >= 0".into());
        }
        if !(self.turbine_cost >= 0.0 && self.turbine_cost.is_finite()) {
            return bad("turbine_cost must be finite and >= 0".into());
        }
        if self.max_turbines < 1 {
            return bad("max_turbines must be >= 1".into());
        }
        if !(self.hours >= 0.0 && self.hours.is_finite()) {
            return bad("hours must be finite and >= 0".into());
        }
        let w = self.score_weights;
        if ![w.w_energy, w.w_budget, w.w_env].iter().all(|x| x.is_finite()) {
            return bad("score weights must be finite".into());
        }
        self.power_curve.check().map_err(WindFarmError::InvalidChallenge)
    }

    pub fn cell(&self, at: Cell) -> Result<&CellSpec, WindFarmError> {
        self.cells
            .get(at.y as usize)
            .and_then(|r| r.get(at.x as usize))
            .ok_or(WindFarmError::OutOfGrid {
                x: at.x,
                y: at.y,
                width: self.width,
                height: self.height,
            })
    }

    /// All non-protected cells in `(x, y)` order.
    pub fn buildable_cells(&self) -> Vec<Cell> {
        let mut out: Vec<Cell> = (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| Cell { x, y }))
            .filter(|c| self.cells[c.y as usize][c.x as usize].zone != Zone::Protected)
            .collect();
        out.sort();
        out
    }

    fn zones_within(&self, at: Cell, radius: u32) -> impl Iterator<Item = Zone> + '_ {
        let xs = at.x.saturating_sub(radius)..=(at.x + radius).min(self.width - 1);
        let ys = at.y.saturating_sub(radius)..=(at.y + radius).min(self.height - 1);
        ys.flat_map(move |y| xs.clone().map(move |x| self.cells[y as usize][x as usize].zone))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(u32, u32)", into = "(u32, u32)")]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub fn new(x: u32, y: u32) -> Self {
        Cell { x, y }
    }

    pub fn chebyshev(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }
}

impl From<(u32, u32)> for Cell {
    fn from((x, y): (u32, u32)) -> Self {
        Cell { x, y }
    }
}

impl From<Cell> for (u32, u32) {
    fn from(c: Cell) -> Self {
        (c.x, c.y)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FarmLayout {
    pub placements: BTreeSet<Cell>,
}

impl FarmLayout {
    pub fn new(cells: impl IntoIterator<Item = Cell>) -> Self {
        FarmLayout {
            placements: cells.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationCode {
    TurbineOnProtected,
    OverBudget,
    TooManyTurbines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<Cell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurbineReport {
    pub cell: Cell,
    pub neighbors: u32,
    pub gross_energy: f64,
    pub wake_loss: f64,
    pub net_energy: f64,
    pub env_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEvaluation {
    pub feasible: bool,
    pub violations: Vec<Violation>,
    pub gross_energy: f64,
    pub wake_loss: f64,
    pub net_energy: f64,
    pub total_cost: f64,
    pub budget_remaining: f64,
    pub env_penalty: f64,
    /// Present only for feasible layouts.
    pub score: Option<f64>,
    pub turbines: Vec<TurbineReport>,
}

pub fn evaluate_layout(
    ch: &WindFarmChallenge,
    layout: &FarmLayout,
) -> Result<LayoutEvaluation, WindFarmError> {
    let mut violations = Vec::new();
    let mut turbines = Vec::with_capacity(layout.len());
    for &cell in &layout.placements {
        let spec = ch.cell(cell)?;
        if spec.zone == Zone::Protected {
            violations.push(Violation {
                code: ViolationCode::TurbineOnProtected,
                cell: Some(cell),
            });
        }
        let neighbors = layout
            .placements
            .iter()
            .filter(|&&o| o != cell && o.chebyshev(cell) <= WAKE_RADIUS)
            .count() as u32;
        let gross = ch.power_curve.power(spec.wind_speed)? * ch.hours;
        let wake = gross * wake_fraction(neighbors);
        let zones = ch.zones_within(cell, 1).collect::<Vec<_>>();
        let near_protected = zones.contains(&Zone::Protected);
        let near_residential = zones.contains(&Zone::Residential);
        let env = if near_protected { PROTECTED_PENALTY } else { 0.0 }
            + if near_residential { RESIDENTIAL_PENALTY } else { 0.0 };
        turbines.push(TurbineReport {
            cell,
            neighbors,
            gross_energy: gross,
            wake_loss: wake,
            net_energy: gross - wake,
            env_penalty: env,
        });
    }

    let total_cost = layout.len() as f64 * ch.turbine_cost;
    let budget_remaining = ch.budget - total_cost;
    if total_cost > ch.budget {
        violations.push(Violation {
            code: ViolationCode::OverBudget,
            cell: None,
        });
    }
    if layout.len() > ch.max_turbines as usize {
        violations.push(Violation {
            code: ViolationCode::TooManyTurbines,
            cell: None,
        });
    }

    let gross_energy: f64 = turbines.iter().map(|t| t.gross_energy).sum();
    let wake_loss: f64 = turbines.iter().map(|t| t.wake_loss).sum();
    let net_energy = gross_energy - wake_loss;
    let env_penalty: f64 = turbines.iter().map(|t| t.env_penalty).sum();
    let feasible = violations.is_empty();
    let w = ch.score_weights;
    let score = feasible
        .then_some(w.w_energy * net_energy + w.w_budget * budget_remaining - w.w_env * env_penalty);

    Ok(LayoutEvaluation {
        feasible,
        violations,
        gross_energy,
        wake_loss,
        net_energy,
        total_cost,
        budget_remaining,
        env_penalty,
        score,
        turbines,
    })
}

fn wake_fraction(neighbors: u32) -> f64 {
    (WAKE_STEP * neighbors as f64).min(WAKE_CAP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutAction {
    Place { x: u32, y: u32 },
    Remove { x: u32, y: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutActionError {
    #[error("cell ({0}, {1}) is outside the grid")]
    OutOfGrid(u32, u32),
    #[error("cell already has a turbine")]
    Occupied,
    #[error("cell has no turbine")]
    Empty,
    #[error("cell is protected")]
    Protected,
    #[error("another turbine would exceed the budget")]
    OverBudget,
    #[error("turbine limit reached")]
    TooMany,
}

impl LayoutActionError {
    pub fn code(&self) -> &'static str {
        match self {
            LayoutActionError::OutOfGrid(..) => "OutOfGrid",
            LayoutActionError::Occupied => "Occupied",
            LayoutActionError::Empty => "Empty",
            LayoutActionError::Protected => "Protected",
            LayoutActionError::OverBudget => "OverBudget",
            LayoutActionError::TooMany => "TooMany",
        }
    }
}

pub fn apply_action(
    ch: &WindFarmChallenge,
    layout: &FarmLayout,
    action: LayoutAction,
) -> Result<FarmLayout, LayoutActionError> {
    let (x, y) = match action {
        LayoutAction::Place { x, y } | LayoutAction::Remove { x, y } => (x, y),
    };
    let cell = Cell { x, y };
    let spec = ch.cell(cell).map_err(|_| LayoutActionError::OutOfGrid(x, y))?;
    let mut next = layout.clone();
    match action {
        LayoutAction::Place { .. } => {
            if layout.placements.contains(&cell) {
                return Err(LayoutActionError::Occupied);
            }
            if spec.zone == Zone::Protected {
                return Err(LayoutActionError::Protected);
            }
            if layout.len() >= ch.max_turbines as usize {
                return Err(LayoutActionError::TooMany);
            }
            if (layout.len() + 1) as f64 * ch.turbine_cost > ch.budget {
                return Err(LayoutActionError::OverBudget);
            }
            next.placements.insert(cell);
        }
        LayoutAction::Remove { .. } => {
            if !next.placements.remove(&cell) {
                return Err(LayoutActionError::Empty);
            }
        }
    }
    Ok(next)
}

/// Exhaustive optimum over all feasible layouts. Ties go to fewer turbines,
/// then to the lexicographically smallest sorted placement list.
pub fn brute_force_best(
    ch: &WindFarmChallenge,
) -> Result<(FarmLayout, LayoutEvaluation), WindFarmError> {
    let cells = ch.buildable_cells();
    if cells.len() > ORACLE_MAX_CELLS || ch.max_turbines > ORACLE_MAX_TURBINES {
        return Err(WindFarmError::InstanceTooLarge {
            cells: cells.len(),
            turbines: ch.max_turbines,
        });
    }
    let mut best_layout = FarmLayout::default();
    let mut best = evaluate_layout(ch, &best_layout)?;
    let max_k = (ch.max_turbines as usize).min(cells.len());
    // Sizes ascend and combinations come out in lexicographic order, so only a
    // strictly better score may replace the incumbent.
    for k in 1..=max_k {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let layout = FarmLayout::new(idx.iter().map(|&i| cells[i]));
            let eval = evaluate_layout(ch, &layout)?;
            if let (Some(s), Some(b)) = (eval.score, best.score) {
                if s > b {
                    best = eval;
                    best_layout = layout;
                }
            }
            if !next_combination(&mut idx, cells.len()) {
                break;
            }
        }
    }
    Ok((best_layout, best))
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
