//! Scenario harness: synthetic scene templates, scene and run-log I/O,
//! open- and closed-loop replay evaluation, and the aggregate report.

pub mod io;
pub mod replay;
pub mod report;
pub mod templates;

pub use io::{
    load_scene, read_run_log, save_scene, scene_from_json_str, scene_to_json_string,
    write_run_log,
};
pub use replay::{
    detect_critical, hindsight_cost, run_closed_loop, run_open_loop, EvalRecord, LoopKind,
    ReplayConfig, ReplaySchedule,
};
pub use report::{aggregate_report, ModeRow, Report};
pub use templates::{generate_scene, ScenarioTemplate, TemplateKind};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("replay config: {0}")]
    InvalidReplay(String),
    #[error("no records to aggregate")]
    EmptyRecords,
    #[error(transparent)]
    Core(#[from] bivo_core::CoreError),
    #[error(transparent)]
    Planner(#[from] bivo_planner::PlannerError),
}
