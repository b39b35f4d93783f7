//! Open- and closed-loop replay evaluation.
//!
//! One shared candidate set per planning step feeds every mode, so mode
//! comparisons measure belief differences, not sampling noise. Hindsight
//! re-scores a chosen trajectory with the full ground-truth agent set and
//! no predictions: exactly the Oracle's objective, which is why the
//! Oracle's mean hindsight lower-bounds every mode on shared candidates.

use bivo_core::{Scene, Trajectory};
use bivo_planner::{
    collision_cost, cost_components, future_window, generate_candidates, plan_with_candidates,
    CostBreakdown, CostWeights, PlannerConfig, PlannerMode, PlannerModels,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::SimError;

#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub horizon_s: f64,
    pub replan_period_s: f64,
    pub max_scene_s: f64,
    pub modes: Vec<PlannerMode>,
    pub seed: u64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            horizon_s: 5.0,
            replan_period_s: 0.5,
            max_scene_s: 15.0,
            modes: vec![PlannerMode::NoReasoning, PlannerMode::Oracle],
            seed: 0,
        }
    }
}

/// Step-resolved replay plan for one scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplaySchedule {
    pub horizon_steps: usize,
    pub replan_every: usize,
    /// Planning step indices.
    pub steps: Vec<usize>,
}

impl ReplayConfig {
    /// Resolve the second-valued config against a scene's dt and duration.
    pub fn schedule(&self, scene: &Scene) -> Result<ReplaySchedule, SimError> {
        let dt = scene.dt();
        if self.replan_period_s > self.horizon_s {
            return Err(SimError::InvalidReplay(format!(
                "replan period {} s exceeds horizon {} s",
                self.replan_period_s, self.horizon_s
            )));
        }
        let horizon_steps = (self.horizon_s / dt).round() as usize;
        let replan_every = (self.replan_period_s / dt).round() as usize;
        if horizon_steps == 0 || replan_every == 0 {
            return Err(SimError::InvalidReplay(format!(
                "horizon {} s and replan period {} s must be at least one step of dt {dt} s",
                self.horizon_s, self.replan_period_s
            )));
        }
        let max_scene_steps = (self.max_scene_s / dt).round() as usize;
        let source_steps = scene.duration_steps.saturating_sub(1);
        if max_scene_steps > source_steps {
            return Err(SimError::InvalidReplay(format!(
                "max scene {} s exceeds the recorded {} steps of dt {dt} s",
                self.max_scene_s, source_steps
            )));
        }
        Ok(ReplaySchedule {
            horizon_steps,
            replan_every,
            steps: (0..max_scene_steps).step_by(replan_every).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scene_id: String,
    pub step: usize,
    pub mode: PlannerMode,
    pub loop_kind: LoopKind,
    pub planned: CostBreakdown,
    pub hindsight: CostBreakdown,
    /// Scene-level flag: some replay step separates NoReasoning from Oracle.
    pub critical: bool,
    /// The scored set had collapsed to the max-braking fallback.
    pub emergency: bool,
}

/// Re-evaluate the cost of an already-chosen trajectory against ALL
/// ground-truth agents (occluded ones included) and no predictions, with
/// the goal read from the recorded ego state at the trajectory's horizon.
pub fn hindsight_cost(
    chosen: &Trajectory,
    scene: &Scene,
    step: usize,
    weights: &CostWeights,
) -> Result<CostBreakdown, SimError> {
    let horizon = chosen.states.len().saturating_sub(1);
    let goal = *scene
        .ego
        .state_at(step + horizon)
        .unwrap_or_else(|| scene.ego.trajectory.states.last().expect("nonempty trajectory"));
    let visible: Vec<Trajectory> = scene
        .agents
        .iter()
        .filter_map(|a| future_window(a, step, horizon))
        .collect();
    let base = cost_components(chosen, &scene.lane_graph, &goal, weights);
    let collision = collision_cost(chosen, &visible, &[], weights)?;
    Ok(CostBreakdown::assemble(
        base.heading,
        base.lane_dev,
        base.effort,
        collision,
        base.goal,
    ))
}

/// Per-(scene, step) sampling seed, independent of mode so that modes stay
/// comparable under shared seeds.
fn record_seed(base: u64, scene_id: &str, step: usize) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&base.to_le_bytes());
    eat(scene_id.as_bytes());
    eat(&(step as u64).to_le_bytes());
    h
}

/// NoReasoning vs Oracle argmin indices on one shared candidate set.
/// Neither mode consults a model or an rng.
fn baseline_split(
    scene: &Scene,
    step: usize,
    cands: &bivo_planner::CandidateSet,
    planner: &PlannerConfig,
) -> Result<bool, SimError> {
    let none = PlannerModels::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let nr = plan_with_candidates(scene, step, PlannerMode::NoReasoning, &none, planner, cands, &mut rng)?;
    let or = plan_with_candidates(scene, step, PlannerMode::Oracle, &none, planner, cands, &mut rng)?;
    Ok(nr.chosen_index != or.chosen_index)
}

/// True iff at least one replay step separates the NoReasoning and Oracle
/// argmin candidates. Index comparison, not cost comparison: float noise
/// cannot flag a scene where both modes pick the same candidate.
pub fn detect_critical(
    scene: &Scene,
    replay: &ReplayConfig,
    planner: &PlannerConfig,
) -> Result<bool, SimError> {
    let schedule = replay.schedule(scene)?;
    let planner = with_horizon(planner, schedule.horizon_steps);
    for &step in &schedule.steps {
        let cands = generate_candidates(scene, step, planner.j, planner.horizon_steps, &planner.limits)?;
        if baseline_split(scene, step, &cands, &planner)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// The replay horizon overrides the planner's step horizon; everything
/// else in the planner config is taken as given.
fn with_horizon(planner: &PlannerConfig, horizon_steps: usize) -> PlannerConfig {
    let mut cfg = planner.clone();
    cfg.horizon_steps = horizon_steps;
    cfg
}

/// Open-loop evaluation: at every replay step each mode plans from the
/// recorded ego state, with no execution feedback. Records carry planned
/// and hindsight costs; the scene-level critical flag is stamped on every
/// record afterwards.
pub fn run_open_loop(
    scene: &Scene,
    models: &PlannerModels,
    replay: &ReplayConfig,
    planner: &PlannerConfig,
) -> Result<Vec<EvalRecord>, SimError> {
    let schedule = replay.schedule(scene)?;
    let cfg = with_horizon(planner, schedule.horizon_steps);
    let mut records = Vec::with_capacity(schedule.steps.len() * replay.modes.len());
    let mut critical = false;
    for &step in &schedule.steps {
        let cands = generate_candidates(scene, step, cfg.j, cfg.horizon_steps, &cfg.limits)?;
        critical |= baseline_split(scene, step, &cands, &cfg)?;
        for &mode in &replay.modes {
            let mut rng = ChaCha8Rng::seed_from_u64(record_seed(replay.seed, &scene.id, step));
            let res = plan_with_candidates(scene, step, mode, models, &cfg, &cands, &mut rng)?;
            let hindsight = hindsight_cost(&res.chosen, scene, step, &cfg.weights)?;
            records.push(EvalRecord {
                scene_id: scene.id.clone(),
                step,
                mode,
                loop_kind: LoopKind::Open,
                planned: *res.chosen_cost(),
                hindsight,
                critical: false,
                emergency: res.emergency,
            });
        }
    }
    for r in &mut records {
        r.critical = critical;
    }
    Ok(records)
}

/// Closed-loop evaluation of one mode: the ego executes the first replan
/// period of each chosen plan with perfect tracking, then replans from the
/// state it reached; non-ego agents replay their recordings unmodified.
/// Returns the executed ego trajectory and the per-step records.
pub fn run_closed_loop(
    scene: &Scene,
    mode: PlannerMode,
    models: &PlannerModels,
    replay: &ReplayConfig,
    planner: &PlannerConfig,
) -> Result<(Trajectory, Vec<EvalRecord>), SimError> {
    let schedule = replay.schedule(scene)?;
    let cfg = with_horizon(planner, schedule.horizon_steps);
    if scene.ego.trajectory.start_step != 0 {
        return Err(SimError::InvalidScene("ego recording must start at step 0".into()));
    }
    let critical = detect_critical(scene, replay, planner)?;

    let mut sim = scene.clone();
    let mut executed = vec![scene.ego.trajectory.states[0]];
    let mut records = Vec::with_capacity(schedule.steps.len());
    for &step in &schedule.steps {
        // The simulated ego: executed states so far, then the recorded
        // route ahead (it carries the goal at step + horizon).
        let mut states = executed.clone();
        if states.len() < scene.ego.trajectory.states.len() {
            states.extend_from_slice(&scene.ego.trajectory.states[states.len()..]);
        }
        sim.ego.trajectory.states = states;

        let cands = generate_candidates(&sim, step, cfg.j, cfg.horizon_steps, &cfg.limits)?;
        let mut rng = ChaCha8Rng::seed_from_u64(record_seed(replay.seed, &scene.id, step));
        let res = plan_with_candidates(&sim, step, mode, models, &cfg, &cands, &mut rng)?;
        // Hindsight against the original recording: same non-ego agents,
        // goal from the recorded route.
        let hindsight = hindsight_cost(&res.chosen, scene, step, &cfg.weights)?;
        records.push(EvalRecord {
            scene_id: scene.id.clone(),
            step,
            mode,
            loop_kind: LoopKind::Closed,
            planned: *res.chosen_cost(),
            hindsight,
            critical,
            emergency: res.emergency,
        });
        for i in 1..=schedule.replan_every {
            executed.push(res.chosen.states[i]);
        }
    }
    let executed = Trajectory::new(scene.ego.id.clone(), 0, scene.dt(), executed);
    Ok((executed, records))
}
