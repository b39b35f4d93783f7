//! Run configuration: one flat key=value namespace covering every knob.
//!
//! Precedence is CLI `--set` overrides > config file > built-in defaults.
//! The file format is one `key = value` per line; `#` starts a comment.
//! Serialization emits every key in canonical order, and parse(serialize(c))
//! is the identity.

use std::fmt::Write as _;
use std::path::Path;

use bivo_core::{ControlLimits, ExtractionConfig};
use bivo_models::{DsConfig, DsTrainConfig, GenConfig, GenTrainConfig, MiningConfig};
use bivo_planner::{CostWeights, PlannerConfig, PlannerMode};
use bivo_sim::{ReplayConfig, ScenarioTemplate, TemplateKind};

use crate::error::CliError;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "BIVO_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,

    pub scenes_dir: String,
    pub checkpoints_dir: String,
    pub logs_dir: String,
    pub reports_dir: String,

    pub gen_count: usize,
    /// Template mix as (kind, weight); weights are normalized at use.
    pub gen_mix: Vec<(TemplateKind, f64)>,
    pub gen_ego_speed_min: f64,
    pub gen_ego_speed_max: f64,
    pub gen_hidden_presence: f64,

    pub grid_ego_side: usize,
    pub grid_agent_side: usize,
    pub grid_resolution: f64,
    pub grid_t_past: usize,

    pub planner_j: usize,
    pub planner_k: usize,
    pub planner_pi_e: f64,
    pub planner_horizon_steps: usize,
    pub planner_force_standard_normal: bool,
    pub planner_heuristic_top_n: usize,
    pub planner_heuristic_threshold: f64,
    pub planner_heuristic_speed: f64,

    pub weights_heading: f64,
    pub weights_lane_dev: f64,
    pub weights_effort: f64,
    pub weights_collision: f64,
    pub weights_goal: f64,
    pub weights_rbf_sigma: f64,

    pub limits_max_accel: f64,
    pub limits_min_accel: f64,
    pub limits_max_speed: f64,
    pub limits_max_curvature: f64,

    pub replay_horizon_s: f64,
    pub replay_replan_period_s: f64,
    pub replay_max_scene_s: f64,
    pub replay_modes: Vec<PlannerMode>,

    pub train_ds_epochs: usize,
    pub train_ds_batch: usize,
    pub train_ds_lr: f64,
    pub train_ds_temp_start: f64,
    pub train_ds_temp_end: f64,
    /// Cap on mined stage-one pairs; 0 keeps them all.
    pub train_max_pairs: usize,
    pub train_gen_epochs: usize,
    pub train_gen_batch: usize,
    pub train_gen_lr: f64,
    /// Fraction of generator rows held out for the test ELBO.
    pub train_test_fraction: f64,

    pub model_ds_classes: usize,
    pub model_ds_hidden: usize,
    pub model_gen_d_z: usize,
    pub model_gen_h1: usize,
    pub model_gen_h2: usize,
    pub model_gen_downsample: usize,
    pub model_gen_zero_condition: bool,

    /// Cap on evaluated scenes; 0 evaluates every scene found.
    pub eval_max_scenes: usize,
    pub bench_iters: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            scenes_dir: "data/scenes".into(),
            checkpoints_dir: "data/checkpoints".into(),
            logs_dir: "data/logs".into(),
            reports_dir: "data/reports".into(),
            gen_count: 100,
            // 90% plain traffic, 10% occlusion templates.
            gen_mix: vec![
                (TemplateKind::StraightEmpty, 0.45),
                (TemplateKind::RandomTraffic, 0.45),
                (TemplateKind::OccludingTruckCrossing, 0.07),
                (TemplateKind::OncomingBehindOccluder, 0.01),
                (TemplateKind::ParkedRowPedestrian, 0.02),
            ],
            gen_ego_speed_min: 4.0,
            gen_ego_speed_max: 8.0,
            gen_hidden_presence: 1.0,
            grid_ego_side: bivo_core::EGO_GRID_SIZE,
            grid_agent_side: bivo_core::AGENT_GRID_SIZE,
            grid_resolution: bivo_core::GRID_RESOLUTION,
            grid_t_past: bivo_core::PAST_STEPS,
            planner_j: 64,
            planner_k: 1000,
            planner_pi_e: 0.1,
            planner_horizon_steps: bivo_core::HORIZON_STEPS,
            planner_force_standard_normal: false,
            planner_heuristic_top_n: 3,
            planner_heuristic_threshold: 0.6,
            planner_heuristic_speed: 5.0,
            weights_heading: 1.0,
            weights_lane_dev: 1.0,
            weights_effort: 0.1,
            weights_collision: 10.0,
            weights_goal: 1.0,
            weights_rbf_sigma: 2.0,
            limits_max_accel: 4.0,
            limits_min_accel: -8.0,
            limits_max_speed: 20.0,
            limits_max_curvature: 0.3,
            replay_horizon_s: 5.0,
            replay_replan_period_s: 0.5,
            replay_max_scene_s: 15.0,
            replay_modes: PlannerMode::ALL.to_vec(),
            train_ds_epochs: 5,
            train_ds_batch: 64,
            train_ds_lr: 3e-4,
            train_ds_temp_start: 1.0,
            train_ds_temp_end: 0.3,
            train_max_pairs: 0,
            train_gen_epochs: 5,
            train_gen_batch: 64,
            train_gen_lr: 3e-4,
            train_test_fraction: 0.2,
            model_ds_classes: 32,
            model_ds_hidden: 128,
            model_gen_d_z: 16,
            model_gen_h1: 128,
            model_gen_h2: 64,
            model_gen_downsample: 4,
            model_gen_zero_condition: false,
            eval_max_scenes: 0,
            bench_iters: 25,
        }
    }
}

/// Canonical key order for serialization.
pub const KEYS: &[&str] = &[
    "seed",
    "paths.scenes",
    "paths.checkpoints",
    "paths.logs",
    "paths.reports",
    "gen.count",
    "gen.mix",
    "gen.ego_speed_min",
    "gen.ego_speed_max",
    "gen.hidden_presence",
    "grid.ego_side",
    "grid.agent_side",
    "grid.resolution",
    "grid.t_past",
    "planner.j",
    "planner.k",
    "planner.pi_e",
    "planner.horizon_steps",
    "planner.force_standard_normal",
    "planner.heuristic_top_n",
    "planner.heuristic_threshold",
    "planner.heuristic_speed",
    "weights.heading",
    "weights.lane_dev",
    "weights.effort",
    "weights.collision",
    "weights.goal",
    "weights.rbf_sigma",
    "limits.max_accel",
    "limits.min_accel",
    "limits.max_speed",
    "limits.max_curvature",
    "replay.horizon_s",
    "replay.replan_period_s",
    "replay.max_scene_s",
    "replay.modes",
    "train.ds.epochs",
    "train.ds.batch",
    "train.ds.lr",
    "train.ds.temp_start",
    "train.ds.temp_end",
    "train.max_pairs",
    "train.gen.epochs",
    "train.gen.batch",
    "train.gen.lr",
    "train.test_fraction",
    "model.ds.classes",
    "model.ds.hidden",
    "model.gen.d_z",
    "model.gen.h1",
    "model.gen.h2",
    "model.gen.downsample",
    "model.gen.zero_condition",
    "eval.max_scenes",
    "bench.iters",
];

fn bad(key: &str, value: &str, what: &str) -> CliError {
    CliError::Config(format!("key {key}: {value:?} is not {what}"))
}

fn parse_u64(key: &str, v: &str) -> Result<u64, CliError> {
    v.parse().map_err(|_| bad(key, v, "an unsigned integer"))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.parse().map_err(|_| bad(key, v, "an unsigned integer"))
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    let x: f64 = v.parse().map_err(|_| bad(key, v, "a number"))?;
    if !x.is_finite() {
        return Err(bad(key, v, "a finite number"));
    }
    Ok(x)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, v, "true or false")),
    }
}

fn parse_mix(key: &str, v: &str) -> Result<Vec<(TemplateKind, f64)>, CliError> {
    let mut mix = Vec::new();
    for part in v.split(',') {
        let (name, w) = part
            .split_once(':')
            .ok_or_else(|| bad(key, part, "a template:weight pair"))?;
        let kind = TemplateKind::parse(name.trim())
            .ok_or_else(|| bad(key, name, "a template name"))?;
        if mix.iter().any(|(k, _)| *k == kind) {
            return Err(bad(key, name, "listed only once"));
        }
        let weight = parse_f64(key, w.trim())?;
        if weight < 0.0 {
            return Err(bad(key, w, "a nonnegative weight"));
        }
        mix.push((kind, weight));
    }
    if mix.iter().all(|(_, w)| *w == 0.0) {
        return Err(bad(key, v, "a mix with positive total weight"));
    }
    Ok(mix)
}

fn parse_modes(key: &str, v: &str) -> Result<Vec<PlannerMode>, CliError> {
    let mut modes = Vec::new();
    for part in v.split(',') {
        let mode = PlannerMode::parse(part.trim()).map_err(|_| bad(key, part, "a planner mode"))?;
        if modes.contains(&mode) {
            return Err(bad(key, part, "listed only once"));
        }
        modes.push(mode);
    }
    Ok(modes)
}

fn mix_to_string(mix: &[(TemplateKind, f64)]) -> String {
    mix.iter()
        .map(|(k, w)| format!("{}:{w}", k.as_str()))
        .collect::<Vec<_>>()
        .join(",")
}

fn modes_to_string(modes: &[PlannerMode]) -> String {
    modes
        .iter()
        .map(|m| m.as_str())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Set one key from its string form.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = parse_u64(key, value)?,
            "paths.scenes" => self.scenes_dir = value.to_string(),
            "paths.checkpoints" => self.checkpoints_dir = value.to_string(),
            "paths.logs" => self.logs_dir = value.to_string(),
            "paths.reports" => self.reports_dir = value.to_string(),
            "gen.count" => self.gen_count = parse_usize(key, value)?,
            "gen.mix" => self.gen_mix = parse_mix(key, value)?,
            "gen.ego_speed_min" => self.gen_ego_speed_min = parse_f64(key, value)?,
            "gen.ego_speed_max" => self.gen_ego_speed_max = parse_f64(key, value)?,
            "gen.hidden_presence" => self.gen_hidden_presence = parse_f64(key, value)?,
            "grid.ego_side" => self.grid_ego_side = parse_usize(key, value)?,
            "grid.agent_side" => self.grid_agent_side = parse_usize(key, value)?,
            "grid.resolution" => self.grid_resolution = parse_f64(key, value)?,
            "grid.t_past" => self.grid_t_past = parse_usize(key, value)?,
            "planner.j" => self.planner_j = parse_usize(key, value)?,
            "planner.k" => self.planner_k = parse_usize(key, value)?,
            "planner.pi_e" => self.planner_pi_e = parse_f64(key, value)?,
            "planner.horizon_steps" => self.planner_horizon_steps = parse_usize(key, value)?,
            "planner.force_standard_normal" => {
                self.planner_force_standard_normal = parse_bool(key, value)?
            }
            "planner.heuristic_top_n" => self.planner_heuristic_top_n = parse_usize(key, value)?,
            "planner.heuristic_threshold" => {
                self.planner_heuristic_threshold = parse_f64(key, value)?
            }
            "planner.heuristic_speed" => self.planner_heuristic_speed = parse_f64(key, value)?,
            "weights.heading" => self.weights_heading = parse_f64(key, value)?,
            "weights.lane_dev" => self.weights_lane_dev = parse_f64(key, value)?,
            "weights.effort" => self.weights_effort = parse_f64(key, value)?,
            "weights.collision" => self.weights_collision = parse_f64(key, value)?,
            "weights.goal" => self.weights_goal = parse_f64(key, value)?,
            "weights.rbf_sigma" => self.weights_rbf_sigma = parse_f64(key, value)?,
            "limits.max_accel" => self.limits_max_accel = parse_f64(key, value)?,
            "limits.min_accel" => self.limits_min_accel = parse_f64(key, value)?,
            "limits.max_speed" => self.limits_max_speed = parse_f64(key, value)?,
            "limits.max_curvature" => self.limits_max_curvature = parse_f64(key, value)?,
            "replay.horizon_s" => self.replay_horizon_s = parse_f64(key, value)?,
            "replay.replan_period_s" => self.replay_replan_period_s = parse_f64(key, value)?,
            "replay.max_scene_s" => self.replay_max_scene_s = parse_f64(key, value)?,
            "replay.modes" => self.replay_modes = parse_modes(key, value)?,
            "train.ds.epochs" => self.train_ds_epochs = parse_usize(key, value)?,
            "train.ds.batch" => self.train_ds_batch = parse_usize(key, value)?,
            "train.ds.lr" => self.train_ds_lr = parse_f64(key, value)?,
            "train.ds.temp_start" => self.train_ds_temp_start = parse_f64(key, value)?,
            "train.ds.temp_end" => self.train_ds_temp_end = parse_f64(key, value)?,
            "train.max_pairs" => self.train_max_pairs = parse_usize(key, value)?,
            "train.gen.epochs" => self.train_gen_epochs = parse_usize(key, value)?,
            "train.gen.batch" => self.train_gen_batch = parse_usize(key, value)?,
            "train.gen.lr" => self.train_gen_lr = parse_f64(key, value)?,
            "train.test_fraction" => self.train_test_fraction = parse_f64(key, value)?,
            "model.ds.classes" => self.model_ds_classes = parse_usize(key, value)?,
            "model.ds.hidden" => self.model_ds_hidden = parse_usize(key, value)?,
            "model.gen.d_z" => self.model_gen_d_z = parse_usize(key, value)?,
            "model.gen.h1" => self.model_gen_h1 = parse_usize(key, value)?,
            "model.gen.h2" => self.model_gen_h2 = parse_usize(key, value)?,
            "model.gen.downsample" => self.model_gen_downsample = parse_usize(key, value)?,
            "model.gen.zero_condition" => {
                self.model_gen_zero_condition = parse_bool(key, value)?
            }
            "eval.max_scenes" => self.eval_max_scenes = parse_usize(key, value)?,
            "bench.iters" => self.bench_iters = parse_usize(key, value)?,
            _ => return Err(CliError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// String form of one key, None for unknown keys.
    pub fn get(&self, key: &str) -> Option<String> {
        let v = match key {
            "seed" => self.seed.to_string(),
            "paths.scenes" => self.scenes_dir.clone(),
            "paths.checkpoints" => self.checkpoints_dir.clone(),
            "paths.logs" => self.logs_dir.clone(),
            "paths.reports" => self.reports_dir.clone(),
            "gen.count" => self.gen_count.to_string(),
            "gen.mix" => mix_to_string(&self.gen_mix),
            "gen.ego_speed_min" => self.gen_ego_speed_min.to_string(),
            "gen.ego_speed_max" => self.gen_ego_speed_max.to_string(),
            "gen.hidden_presence" => self.gen_hidden_presence.to_string(),
            "grid.ego_side" => self.grid_ego_side.to_string(),
            "grid.agent_side" => self.grid_agent_side.to_string(),
            "grid.resolution" => self.grid_resolution.to_string(),
            "grid.t_past" => self.grid_t_past.to_string(),
            "planner.j" => self.planner_j.to_string(),
            "planner.k" => self.planner_k.to_string(),
            "planner.pi_e" => self.planner_pi_e.to_string(),
            "planner.horizon_steps" => self.planner_horizon_steps.to_string(),
            "planner.force_standard_normal" => self.planner_force_standard_normal.to_string(),
            "planner.heuristic_top_n" => self.planner_heuristic_top_n.to_string(),
            "planner.heuristic_threshold" => self.planner_heuristic_threshold.to_string(),
            "planner.heuristic_speed" => self.planner_heuristic_speed.to_string(),
            "weights.heading" => self.weights_heading.to_string(),
            "weights.lane_dev" => self.weights_lane_dev.to_string(),
            "weights.effort" => self.weights_effort.to_string(),
            "weights.collision" => self.weights_collision.to_string(),
            "weights.goal" => self.weights_goal.to_string(),
            "weights.rbf_sigma" => self.weights_rbf_sigma.to_string(),
            "limits.max_accel" => self.limits_max_accel.to_string(),
            "limits.min_accel" => self.limits_min_accel.to_string(),
            "limits.max_speed" => self.limits_max_speed.to_string(),
            "limits.max_curvature" => self.limits_max_curvature.to_string(),
            "replay.horizon_s" => self.replay_horizon_s.to_string(),
            "replay.replan_period_s" => self.replay_replan_period_s.to_string(),
            "replay.max_scene_s" => self.replay_max_scene_s.to_string(),
            "replay.modes" => modes_to_string(&self.replay_modes),
            "train.ds.epochs" => self.train_ds_epochs.to_string(),
            "train.ds.batch" => self.train_ds_batch.to_string(),
            "train.ds.lr" => self.train_ds_lr.to_string(),
            "train.ds.temp_start" => self.train_ds_temp_start.to_string(),
            "train.ds.temp_end" => self.train_ds_temp_end.to_string(),
            "train.max_pairs" => self.train_max_pairs.to_string(),
            "train.gen.epochs" => self.train_gen_epochs.to_string(),
            "train.gen.batch" => self.train_gen_batch.to_string(),
            "train.gen.lr" => self.train_gen_lr.to_string(),
            "train.test_fraction" => self.train_test_fraction.to_string(),
            "model.ds.classes" => self.model_ds_classes.to_string(),
            "model.ds.hidden" => self.model_ds_hidden.to_string(),
            "model.gen.d_z" => self.model_gen_d_z.to_string(),
            "model.gen.h1" => self.model_gen_h1.to_string(),
            "model.gen.h2" => self.model_gen_h2.to_string(),
            "model.gen.downsample" => self.model_gen_downsample.to_string(),
            "model.gen.zero_condition" => self.model_gen_zero_condition.to_string(),
            "eval.max_scenes" => self.eval_max_scenes.to_string(),
            "bench.iters" => self.bench_iters.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Apply every `key = value` line of a config file.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Every key in canonical order, parseable back by [`apply_text`].
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get(key).expect("KEYS only lists known keys");
            writeln!(out, "{key} = {value}").unwrap();
        }
        out
    }

    pub fn load_file(path: &Path, base: RunConfig) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))?;
        let mut cfg = base;
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let err = |msg: String| Err(CliError::Config(msg));
        for (name, dir) in [
            ("paths.scenes", &self.scenes_dir),
            ("paths.checkpoints", &self.checkpoints_dir),
            ("paths.logs", &self.logs_dir),
            ("paths.reports", &self.reports_dir),
        ] {
            if dir.is_empty() {
                return err(format!("{name} is empty"));
            }
        }
        if self.gen_count == 0 {
            return err("gen.count must be at least 1".into());
        }
        if !(self.gen_ego_speed_min > 0.0 && self.gen_ego_speed_max >= self.gen_ego_speed_min) {
            return err("gen.ego_speed range must satisfy 0 < min <= max".into());
        }
        if !(0.0..=1.0).contains(&self.gen_hidden_presence) {
            return err("gen.hidden_presence must lie in [0, 1]".into());
        }
        if self.grid_ego_side < 2 || self.grid_agent_side < 2 {
            return err("grid sides must be at least 2 cells".into());
        }
        if self.grid_ego_side % self.model_gen_downsample != 0 {
            return err(format!(
                "grid.ego_side {} is not divisible by model.gen.downsample {}",
                self.grid_ego_side, self.model_gen_downsample
            ));
        }
        if self.grid_resolution <= 0.0 {
            return err("grid.resolution must be positive".into());
        }
        if self.grid_t_past == 0 {
            return err("grid.t_past must be at least 1".into());
        }
        if self.planner_j == 0 || self.planner_k == 0 || self.planner_horizon_steps == 0 {
            return err("planner.j, planner.k and planner.horizon_steps must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.planner_pi_e) {
            return err("planner.pi_e must lie in [0, 1]".into());
        }
        if self.planner_heuristic_top_n == 0 {
            return err("planner.heuristic_top_n must be at least 1".into());
        }
        if !(self.planner_heuristic_threshold > 0.0 && self.planner_heuristic_threshold <= 1.0) {
            return err("planner.heuristic_threshold must lie in (0, 1]".into());
        }
        if self.planner_heuristic_speed <= 0.0 {
            return err("planner.heuristic_speed must be positive".into());
        }
        for (name, w) in [
            ("weights.heading", self.weights_heading),
            ("weights.lane_dev", self.weights_lane_dev),
            ("weights.effort", self.weights_effort),
            ("weights.collision", self.weights_collision),
            ("weights.goal", self.weights_goal),
        ] {
            if w < 0.0 {
                return err(format!("{name} must be nonnegative"));
            }
        }
        if self.weights_rbf_sigma <= 0.0 {
            return err("weights.rbf_sigma must be positive".into());
        }
        if self.limits_max_accel <= 0.0
            || self.limits_min_accel >= 0.0
            || self.limits_max_speed <= 0.0
            || self.limits_max_curvature <= 0.0
        {
            return err("limits: max_accel, max_speed, max_curvature positive; min_accel negative".into());
        }
        if self.replay_horizon_s <= 0.0
            || self.replay_replan_period_s <= 0.0
            || self.replay_replan_period_s > self.replay_horizon_s
            || self.replay_max_scene_s <= 0.0
        {
            return err("replay times must be positive with replan_period <= horizon".into());
        }
        if self.replay_modes.is_empty() {
            return err("replay.modes must name at least one mode".into());
        }
        if self.train_ds_epochs == 0 || self.train_gen_epochs == 0 {
            return err("training epochs must be at least 1".into());
        }
        if self.train_ds_batch < 2 || self.train_gen_batch < 2 {
            return err("training batch sizes must be at least 2".into());
        }
        if self.train_ds_lr <= 0.0 || self.train_gen_lr <= 0.0 {
            return err("learning rates must be positive".into());
        }
        if self.train_ds_temp_start <= 0.0 || self.train_ds_temp_end <= 0.0 {
            return err("Gumbel temperatures must be positive".into());
        }
        if !(0.0..1.0).contains(&self.train_test_fraction) {
            return err("train.test_fraction must lie in [0, 1)".into());
        }
        if self.model_ds_classes < 2 {
            return err("model.ds.classes must be at least 2".into());
        }
        if self.model_ds_hidden == 0
            || self.model_gen_d_z == 0
            || self.model_gen_h1 == 0
            || self.model_gen_h2 == 0
            || self.model_gen_downsample == 0
        {
            return err("model widths must be at least 1".into());
        }
        if self.bench_iters < 3 {
            return err("bench.iters must be at least 3".into());
        }
        Ok(())
    }

    pub fn mining(&self) -> MiningConfig {
        MiningConfig {
            t_past: self.grid_t_past,
            agent_grid_side: self.grid_agent_side,
            ego_grid_side: self.grid_ego_side,
            resolution: self.grid_resolution,
        }
    }

    pub fn extraction(&self) -> ExtractionConfig {
        ExtractionConfig {
            horizon_steps: self.planner_horizon_steps,
            grid_height: self.grid_ego_side,
            grid_width: self.grid_ego_side,
            resolution: self.grid_resolution,
        }
    }

    pub fn weights(&self) -> CostWeights {
        CostWeights {
            w_hd: self.weights_heading,
            w_vd: self.weights_lane_dev,
            w_ef: self.weights_effort,
            w_col: self.weights_collision,
            w_goal: self.weights_goal,
            rbf_sigma: self.weights_rbf_sigma,
        }
    }

    pub fn limits(&self) -> ControlLimits {
        ControlLimits {
            max_accel: self.limits_max_accel,
            min_accel: self.limits_min_accel,
            max_speed: self.limits_max_speed,
            max_curvature: self.limits_max_curvature,
        }
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            j: self.planner_j,
            k: self.planner_k,
            pi_e: self.planner_pi_e,
            weights: self.weights(),
            limits: self.limits(),
            horizon_steps: self.planner_horizon_steps,
            force_standard_normal: self.planner_force_standard_normal,
            heuristic_top_n: self.planner_heuristic_top_n,
            heuristic_threshold: self.planner_heuristic_threshold,
            heuristic_speed: self.planner_heuristic_speed,
            mining: self.mining(),
        }
    }

    pub fn replay_config(&self) -> ReplayConfig {
        ReplayConfig {
            horizon_s: self.replay_horizon_s,
            replan_period_s: self.replay_replan_period_s,
            max_scene_s: self.replay_max_scene_s,
            modes: self.replay_modes.clone(),
            seed: self.seed,
        }
    }

    pub fn ds_model_config(&self) -> DsConfig {
        DsConfig {
            classes: self.model_ds_classes,
            hidden: self.model_ds_hidden,
            history_dim: self.grid_t_past * 5,
            grid_side: self.grid_agent_side,
        }
    }

    pub fn ds_train_config(&self) -> DsTrainConfig {
        DsTrainConfig {
            model: self.ds_model_config(),
            epochs: self.train_ds_epochs,
            batch_size: self.train_ds_batch,
            lr: self.train_ds_lr,
            seed: self.seed,
            temp_start: self.train_ds_temp_start,
            temp_end: self.train_ds_temp_end,
        }
    }

    pub fn gen_model_config(&self) -> GenConfig {
        GenConfig {
            d_z: self.model_gen_d_z,
            horizon: self.planner_horizon_steps,
            grid_side: self.grid_ego_side,
            downsample: self.model_gen_downsample,
            h1: self.model_gen_h1,
            h2: self.model_gen_h2,
            zero_condition: self.model_gen_zero_condition,
        }
    }

    pub fn gen_train_config(&self) -> GenTrainConfig {
        GenTrainConfig {
            model: self.gen_model_config(),
            epochs: self.train_gen_epochs,
            batch_size: self.train_gen_batch,
            lr: self.train_gen_lr,
            seed: self.seed,
        }
    }

    pub fn template(&self, kind: TemplateKind) -> ScenarioTemplate {
        ScenarioTemplate {
            kind,
            hidden_presence: self.gen_hidden_presence,
            ego_speed: (self.gen_ego_speed_min, self.gen_ego_speed_max),
        }
    }
}

/// Defaults, then the config file (explicit path, else `BIVO_CONFIG`, else
/// none), then `--set key=value` overrides, then validation.
pub fn assemble(file: Option<&Path>, sets: &[String]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    let env_path = std::env::var_os(CONFIG_ENV).map(std::path::PathBuf::from);
    if let Some(path) = file.or(env_path.as_deref()) {
        cfg = RunConfig::load_file(path, cfg)?;
    }
    for pair in sets {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set {pair:?}: expected key=value")))?;
        cfg.apply(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = RunConfig::default();
        cfg.seed = 42;
        cfg.planner_pi_e = 0.12345678901234567;
        cfg.weights_rbf_sigma = 1.0 / 3.0;
        cfg.replay_modes = vec![PlannerMode::Oracle, PlannerMode::Bivo];
        cfg.gen_mix = vec![(TemplateKind::StraightEmpty, 0.1), (TemplateKind::RandomTraffic, 2.5)];
        let text = cfg.to_key_values();
        let mut back = RunConfig::default();
        back.apply_text(&text).unwrap();
        assert_eq!(back, cfg);
        // And a second round trip produces the same text.
        assert_eq!(back.to_key_values(), text);
    }

    #[test]
    fn every_key_is_gettable_and_settable() {
        let mut cfg = RunConfig::default();
        for key in KEYS {
            let value = cfg.get(key).unwrap_or_else(|| panic!("get {key}"));
            cfg.apply(key, &value).unwrap_or_else(|e| panic!("apply {key}: {e}"));
        }
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let mut cfg = RunConfig::default();
        let e = cfg.apply("no.such.key", "1").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = cfg.apply("planner.j", "sixty-four").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = cfg.apply("gen.mix", "straight_empty").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = cfg.apply("replay.modes", "bivo,bivo").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# a comment\n\nseed = 7\n  planner.k = 10\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.planner_k, 10);
    }

    #[test]
    fn validation_rejects_out_of_range_numbers() {
        let mut cfg = RunConfig::default();
        cfg.planner_pi_e = 1.5;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        let mut cfg = RunConfig::default();
        cfg.limits_min_accel = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.grid_ego_side = 121;
        assert!(cfg.validate().is_err(), "side must divide by downsample");
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn overrides_beat_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "seed = 5\nplanner.k = 100\n").unwrap();
        let cfg = assemble(Some(&path), &["planner.k=7".into()]).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.planner_k, 7);
    }
}
