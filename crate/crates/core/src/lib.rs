//! Core of the raise world: scenario format, branching engine, minigames,
//! questionnaire analytics and the shared world/protocol types.

pub mod carbon;
pub mod engine;
pub mod play;
pub mod scenario;
pub mod survey;
pub mod windfarm;
pub mod world;

pub use carbon::{assess_footprint, ledger_total, record_activity, CarbonLedger, EmissionCatalog, Tier};
pub use engine::{
    advance, replay, start_session, summarize, EngineError, EngineEvent, EngineState, EventKind,
    OutcomeSummary, PlayerInput,
};
pub use scenario::{
    load_scenario_file, parse_scenario, validate_graph, ContentPack, ScenarioDocument,
    ScenarioError, ValidationReport,
};
pub use survey::{
    bucket_percentage, ingest_responses, load_instrument, option_percentage, summary_report,
    AggregateReport, ResponseSet, SurveyError, SurveyInstrument,
};
pub use windfarm::{brute_force_best, evaluate_layout, FarmLayout, LayoutEvaluation, WindFarmChallenge};
