//! eval: replay every scene under the configured modes, write the run-log
//! and aggregate it into a report. `--from-log` skips the replay and
//! rebuilds the report from an existing run-log, byte for byte.

use std::path::{Path, PathBuf};

use bivo_planner::{PlannerMode, PlannerModels};
use bivo_sim::{
    aggregate_report, read_run_log, run_closed_loop, run_open_loop, write_run_log, EvalRecord,
    LoopKind, Report,
};

use crate::ckpt;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::ops::load_scenes_sorted;

pub fn parse_loop_kind(s: &str) -> Result<LoopKind, CliError> {
    match s {
        "open" => Ok(LoopKind::Open),
        "closed" => Ok(LoopKind::Closed),
        _ => Err(CliError::Config(format!("loop {s:?} is not open or closed"))),
    }
}

fn loop_stem(kind: LoopKind) -> &'static str {
    match kind {
        LoopKind::Open => "eval_open",
        LoopKind::Closed => "eval_closed",
    }
}

pub struct EvalSummary {
    pub report: Report,
    pub run_log: PathBuf,
    pub report_txt: PathBuf,
    pub report_json: PathBuf,
    pub records: usize,
}

/// Load whichever models the configured modes require; a missing
/// checkpoint file is an ordering error (train has not produced it yet).
pub fn load_required_models(cfg: &RunConfig, modes: &[PlannerMode]) -> Result<PlannerModels, CliError> {
    let needs_ds = modes
        .iter()
        .any(|m| matches!(m, PlannerMode::Bivo | PlannerMode::DriverSensorHeuristic));
    let needs_gen = modes
        .iter()
        .any(|m| matches!(m, PlannerMode::Bivo | PlannerMode::CvaeOnly));
    let dir = Path::new(&cfg.checkpoints_dir);
    let mut models = PlannerModels::default();
    if needs_ds {
        let path = dir.join("driver_sensor.ckpt");
        if !path.exists() {
            return Err(CliError::Ordering(format!(
                "{} not found; run train --stage driversensor first",
                path.display()
            )));
        }
        models.driver_sensor = Some(ckpt::load_ds_checkpoint(&path)?.0);
    }
    if needs_gen {
        let path = dir.join("generator.ckpt");
        if !path.exists() {
            return Err(CliError::Ordering(format!(
                "{} not found; run train --stage generator first",
                path.display()
            )));
        }
        models.generator = Some(ckpt::load_gen_checkpoint(&path)?.0);
    }
    Ok(models)
}

fn compute_records(cfg: &RunConfig, kind: LoopKind) -> Result<Vec<EvalRecord>, CliError> {
    let mut scenes = load_scenes_sorted(&cfg.scenes_dir)?;
    if cfg.eval_max_scenes > 0 {
        scenes.truncate(cfg.eval_max_scenes);
    }
    let replay = cfg.replay_config();
    let planner = cfg.planner_config();
    let models = load_required_models(cfg, &replay.modes)?;

    let mut records = Vec::new();
    for scene in &scenes {
        match kind {
            LoopKind::Open => {
                records.extend(run_open_loop(scene, &models, &replay, &planner)?);
            }
            LoopKind::Closed => {
                for &mode in &replay.modes {
                    let (_, recs) = run_closed_loop(scene, mode, &models, &replay, &planner)?;
                    records.extend(recs);
                }
            }
        }
    }
    Ok(records)
}

pub fn run(cfg: &RunConfig, kind: LoopKind, from_log: bool) -> Result<EvalSummary, CliError> {
    let stem = loop_stem(kind);
    let run_log = Path::new(&cfg.logs_dir).join(format!("{stem}.ndjson"));

    let records = if from_log {
        if !run_log.exists() {
            return Err(CliError::Ordering(format!(
                "{} not found; run eval without --from-log first",
                run_log.display()
            )));
        }
        read_run_log(&run_log)?
    } else {
        let records = compute_records(cfg, kind)?;
        std::fs::create_dir_all(&cfg.logs_dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.logs_dir)))?;
        write_run_log(&run_log, &records)?;
        records
    };

    let report = aggregate_report(&records)?;
    std::fs::create_dir_all(&cfg.reports_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.reports_dir)))?;
    let report_txt = Path::new(&cfg.reports_dir).join(format!("{stem}_report.txt"));
    let report_json = Path::new(&cfg.reports_dir).join(format!("{stem}_report.json"));
    std::fs::write(&report_txt, report.render())?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    std::fs::write(&report_json, json)?;

    Ok(EvalSummary {
        records: records.len(),
        report,
        run_log,
        report_txt,
        report_json,
    })
}
