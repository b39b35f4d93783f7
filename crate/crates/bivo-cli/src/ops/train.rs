//! train: stage one (driver sensor) or stage two (trajectory generator).
//!
//! Each stage writes a resumable checkpoint and a loss CSV whose data rows
//! correspond one-to-one with optimizer steps. `--resume` loads the stage's
//! checkpoint and appends to its CSV, continuing the step counter.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bivo_models::{
    gen_rows_from_scene, mine_driver_sensor_pairs, train_driver_sensor_from, train_generator_from,
    GenRow, TrainState,
};

use crate::ckpt;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::ops::load_scenes_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    DriverSensor,
    Generator,
}

impl Stage {
    pub fn parse(s: &str) -> Result<Stage, CliError> {
        match s {
            "driversensor" => Ok(Stage::DriverSensor),
            "generator" => Ok(Stage::Generator),
            _ => Err(CliError::Config(format!(
                "stage {s:?} is not driversensor or generator"
            ))),
        }
    }
}

pub struct TrainSummary {
    pub stage: Stage,
    /// Optimizer steps taken by this invocation.
    pub steps: usize,
    /// Cumulative steps including resumed-from segments.
    pub total_steps: usize,
    /// Total loss at the last step of this run.
    pub final_loss: f64,
    pub examples: usize,
    pub checkpoint: PathBuf,
    pub csv: PathBuf,
}

fn ensure_parent_dirs(cfg: &RunConfig) -> Result<(), CliError> {
    for dir in [&cfg.checkpoints_dir, &cfg.logs_dir] {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create {dir}: {e}")))?;
    }
    Ok(())
}

/// Append rows to a CSV, writing the '#' header only when starting fresh.
fn write_csv(path: &Path, header: &str, rows: &str, append: bool) -> Result<(), CliError> {
    let mut text = String::new();
    if !(append && path.exists()) {
        text.push_str(header);
    }
    text.push_str(rows);
    if append && path.exists() {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().append(true).open(path)?;
        f.write_all(text.as_bytes())?;
    } else {
        std::fs::write(path, text)?;
    }
    Ok(())
}

/// Keep at most `cap` items, evenly strided, preserving order. cap = 0
/// keeps everything.
fn stride_cap<T>(items: Vec<T>, cap: usize) -> Vec<T> {
    if cap == 0 || items.len() <= cap {
        return items;
    }
    let stride = items.len().div_ceil(cap);
    items.into_iter().step_by(stride).collect()
}

fn load_resume_state(
    path: &Path,
    stage: Stage,
    cfg: &RunConfig,
) -> Result<Option<TrainState>, CliError> {
    match stage {
        Stage::DriverSensor => {
            let (model, state) = ckpt::load_ds_checkpoint(path)?;
            if model.cfg != cfg.ds_model_config() {
                return Err(CliError::Config(format!(
                    "checkpoint {} was trained with a different model config",
                    path.display()
                )));
            }
            Ok(Some(state))
        }
        Stage::Generator => {
            let (model, state) = ckpt::load_gen_checkpoint(path)?;
            if model.cfg != cfg.gen_model_config() {
                return Err(CliError::Config(format!(
                    "checkpoint {} was trained with a different model config",
                    path.display()
                )));
            }
            Ok(Some(state))
        }
    }
}

/// Hold out roughly `fraction` of rows: every round(1/fraction)-th row,
/// deterministically by index.
fn split_rows(rows: Vec<GenRow>, fraction: f64) -> (Vec<GenRow>, Vec<GenRow>) {
    if fraction <= 0.0 {
        return (rows, Vec::new());
    }
    let stride = (1.0 / fraction).round().max(2.0) as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        if i % stride == 0 {
            test.push(row);
        } else {
            train.push(row);
        }
    }
    (train, test)
}

pub fn run(cfg: &RunConfig, stage: Stage, resume: bool) -> Result<TrainSummary, CliError> {
    let scenes = load_scenes_sorted(&cfg.scenes_dir)?;
    ensure_parent_dirs(cfg)?;
    let ckpt_dir = Path::new(&cfg.checkpoints_dir);
    let logs_dir = Path::new(&cfg.logs_dir);

    match stage {
        Stage::DriverSensor => {
            let mining = cfg.mining();
            let mut pairs = Vec::new();
            for scene in &scenes {
                pairs.extend(mine_driver_sensor_pairs(scene, &mining)?);
            }
            let pairs = stride_cap(pairs, cfg.train_max_pairs);
            if pairs.is_empty() {
                return Err(CliError::Data(
                    "scenes yielded no visible-agent training pairs".into(),
                ));
            }

            let ckpt_path = ckpt_dir.join("driver_sensor.ckpt");
            let prev = if resume {
                load_resume_state(&ckpt_path, stage, cfg)?
            } else {
                None
            };
            let run = train_driver_sensor_from(&pairs, &cfg.ds_train_config(), prev.as_ref())?;
            ckpt::save_ds_checkpoint(&ckpt_path, &run.model.cfg, &run.state)?;

            let mut rows = String::new();
            for r in &run.records {
                let b = &r.breakdown;
                writeln!(
                    rows,
                    "{},{},{},{},{},{},{},{}",
                    r.step,
                    b.total,
                    b.reconstruction_nll,
                    b.kl,
                    b.mutual_information,
                    b.batch_entropy,
                    b.beta,
                    r.active_classes
                )
                .unwrap();
            }
            let csv = logs_dir.join("driver_sensor_loss.csv");
            write_csv(
                &csv,
                "# step,total,reconstruction_nll,kl,mutual_information,batch_entropy,beta,active_classes\n",
                &rows,
                resume,
            )?;

            Ok(TrainSummary {
                stage,
                steps: run.records.len(),
                total_steps: run.state.step,
                final_loss: run.records.last().map_or(f64::NAN, |r| r.breakdown.total),
                examples: pairs.len(),
                checkpoint: ckpt_path,
                csv,
            })
        }
        Stage::Generator => {
            let ds_path = ckpt_dir.join("driver_sensor.ckpt");
            if !ds_path.exists() {
                return Err(CliError::Ordering(format!(
                    "{} not found; train --stage driversensor must run before the generator",
                    ds_path.display()
                )));
            }
            let (ds_model, _) = ckpt::load_ds_checkpoint(&ds_path)?;
            if ds_model.cfg != cfg.ds_model_config() {
                return Err(CliError::Config(format!(
                    "checkpoint {} was trained with a different model config",
                    ds_path.display()
                )));
            }

            let gen_cfg = cfg.gen_model_config();
            let mining = cfg.mining();
            let extraction = cfg.extraction();
            let mut all_rows = Vec::new();
            for scene in &scenes {
                all_rows.extend(gen_rows_from_scene(&ds_model, scene, &gen_cfg, &mining, &extraction)?);
            }
            if all_rows.is_empty() {
                return Err(CliError::Data(
                    "scenes yielded no occluded-agent future samples".into(),
                ));
            }
            let examples = all_rows.len();
            let (train, test) = split_rows(all_rows, cfg.train_test_fraction);
            if train.is_empty() {
                return Err(CliError::Data(
                    "holdout split left no training rows; lower train.test_fraction".into(),
                ));
            }

            let ckpt_path = ckpt_dir.join("generator.ckpt");
            let prev = if resume {
                load_resume_state(&ckpt_path, stage, cfg)?
            } else {
                None
            };
            let run = train_generator_from(&train, &test, &cfg.gen_train_config(), prev.as_ref())?;
            ckpt::save_gen_checkpoint(&ckpt_path, &run.model.cfg, &run.state)?;

            let mut rows = String::new();
            for r in &run.steps {
                let b = &r.breakdown;
                writeln!(rows, "{},{},{},{}", r.step, b.total, b.reconstruction_nll, b.kl).unwrap();
            }
            let csv = logs_dir.join("generator_loss.csv");
            write_csv(&csv, "# step,total,reconstruction_nll,kl\n", &rows, resume)?;

            Ok(TrainSummary {
                stage,
                steps: run.steps.len(),
                total_steps: run.state.step,
                final_loss: run.steps.last().map_or(f64::NAN, |r| r.breakdown.total),
                examples,
                checkpoint: ckpt_path,
                csv,
            })
        }
    }
}
