//! Mode dispatch. Every mode scores the same candidate set with the same
//! cost; they differ only in which agent futures they believe exist.
//!
//! Visible agents always contribute their ground-truth futures. The modes
//! disagree about the occluded ones: BiVO samples them from the generative
//! model conditioned on the fused grid, CvaeOnly conditions the same model
//! on the raw observed grid instead, DriverSensorHeuristic rolls constant
//! velocity profiles out of the most suspicious occluded cells, NoReasoning
//! pretends unseen space is empty, and Oracle reads the recording.

use bivo_core::{
    build_observed_ogm, build_road_raster, from_ego_frame, Agent, AgentState, ControlLimits,
    Scene, Trajectory, OCCLUDED,
};
use bivo_models::{
    agent_visible_to_ego, fuse_scene, sample_trajectories, DriverSensorModel, MiningConfig,
    OcclusionGenModel, SampleOptions, WeightedTrajectory,
};
use rand::Rng;

use crate::candidates::{generate_candidates, CandidateSet};
use crate::cost::{collision_cost, cost_components, CostBreakdown, CostWeights};
use crate::PlannerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerMode {
    Bivo,
    NoReasoning,
    CvaeOnly,
    DriverSensorHeuristic,
    Oracle,
}

impl PlannerMode {
    pub const ALL: [PlannerMode; 5] = [
        PlannerMode::Bivo,
        PlannerMode::NoReasoning,
        PlannerMode::CvaeOnly,
        PlannerMode::DriverSensorHeuristic,
        PlannerMode::Oracle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlannerMode::Bivo => "bivo",
            PlannerMode::NoReasoning => "no_reasoning",
            PlannerMode::CvaeOnly => "cvae_only",
            PlannerMode::DriverSensorHeuristic => "driver_sensor_heuristic",
            PlannerMode::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self, PlannerError> {
        PlannerMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| PlannerError::Alignment(format!("unknown planner mode {s:?}")))
    }
}

/// Trained models the planner may consult. Modes that need a model absent
/// here fail with `MissingModel` instead of silently degrading.
#[derive(Debug, Default)]
pub struct PlannerModels {
    pub driver_sensor: Option<DriverSensorModel>,
    pub generator: Option<OcclusionGenModel>,
}

#[derive(Debug, Clone)]
pub struct PlannerConfig {
    /// Candidate count J.
    pub j: usize,
    /// Occluded-future sample count K (BiVO and CvaeOnly).
    pub k: usize,
    /// Existence probability assigned to the occluded-agent hypothesis.
    pub pi_e: f64,
    pub weights: CostWeights,
    pub limits: ControlLimits,
    /// Planning horizon in steps; candidates carry horizon + 1 states.
    pub horizon_steps: usize,
    /// Draw z from N(0, I) instead of the learned conditional prior.
    pub force_standard_normal: bool,
    /// DriverSensorHeuristic: how many occluded cells to spawn from.
    pub heuristic_top_n: usize,
    /// DriverSensorHeuristic: minimum fused occupancy to count a cell.
    pub heuristic_threshold: f64,
    /// DriverSensorHeuristic: rollout speed, m/s.
    pub heuristic_speed: f64,
    /// Grid geometry and history depth shared with mining and fusion.
    pub mining: MiningConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            j: 64,
            k: 1000,
            pi_e: 0.1,
            weights: CostWeights::default(),
            limits: ControlLimits::default(),
            horizon_steps: 10,
            force_standard_normal: false,
            heuristic_top_n: 3,
            heuristic_threshold: 0.6,
            heuristic_speed: 5.0,
            mining: MiningConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub chosen: Trajectory,
    pub chosen_index: usize,
    /// Every candidate with its scored breakdown, in generation order.
    pub candidates: Vec<(Trajectory, CostBreakdown)>,
    /// Occluded-agent hypotheses this mode planned against, world frame.
    pub predicted: Vec<WeightedTrajectory>,
    /// The candidate set degenerated to the max-braking fallback.
    pub emergency: bool,
}

impl PlanResult {
    pub fn occluded_samples_used(&self) -> usize {
        self.predicted.len()
    }

    pub fn chosen_cost(&self) -> &CostBreakdown {
        &self.candidates[self.chosen_index].1
    }
}

/// The portion of an agent's recorded trajectory inside `[from, from +
/// horizon]`, or None when the recording does not reach `from`.
pub fn future_window(agent: &Agent, from: usize, horizon: usize) -> Option<Trajectory> {
    let traj = &agent.trajectory;
    let lo = from.max(traj.start_step);
    let hi = (from + horizon).min(traj.end_step());
    if hi < lo {
        return None;
    }
    let states = traj.window(lo, hi - lo + 1)?;
    Some(Trajectory::new(agent.id.clone(), lo, traj.dt, states.to_vec()))
}

/// First index with the strictly smallest total.
pub(crate) fn argmin_total(breakdowns: &[CostBreakdown]) -> usize {
    let mut best = 0;
    for (i, b) in breakdowns.iter().enumerate().skip(1) {
        if b.total < breakdowns[best].total {
            best = i;
        }
    }
    best
}

/// Generate candidates for `step`, then score them under `mode`.
pub fn plan(
    scene: &Scene,
    step: usize,
    mode: PlannerMode,
    models: &PlannerModels,
    config: &PlannerConfig,
    rng: &mut impl Rng,
) -> Result<PlanResult, PlannerError> {
    let candidates = generate_candidates(scene, step, config.j, config.horizon_steps, &config.limits)?;
    plan_with_candidates(scene, step, mode, models, config, &candidates, rng)
}

/// Score a prebuilt candidate set. Sharing one set across modes removes
/// candidate-generation noise from mode comparisons.
pub fn plan_with_candidates(
    scene: &Scene,
    step: usize,
    mode: PlannerMode,
    models: &PlannerModels,
    config: &PlannerConfig,
    candidates: &CandidateSet,
    rng: &mut impl Rng,
) -> Result<PlanResult, PlannerError> {
    config.weights.validate()?;
    if candidates.trajectories.is_empty() {
        return Err(PlannerError::Alignment("candidate set is empty".into()));
    }
    let ego_pose = *scene
        .ego
        .state_at(step)
        .ok_or(PlannerError::NoEgoState(step))?;
    let goal = *scene
        .ego
        .state_at(step + config.horizon_steps)
        .unwrap_or_else(|| scene.ego.trajectory.states.last().expect("nonempty trajectory"));

    let mut visible = Vec::new();
    for agent in &scene.agents {
        let include = match mode {
            PlannerMode::Oracle => true,
            _ => agent_visible_to_ego(scene, step, agent, &config.mining)?,
        };
        if include {
            if let Some(f) = future_window(agent, step, config.horizon_steps) {
                visible.push(f);
            }
        }
    }

    let predicted = match mode {
        PlannerMode::NoReasoning | PlannerMode::Oracle => Vec::new(),
        PlannerMode::Bivo => {
            let ds = require(&models.driver_sensor, mode, "driver_sensor")?;
            let gen = require(&models.generator, mode, "generator")?;
            let fused = fuse_scene(ds, scene, step, &config.mining)?;
            sample_world_futures(gen, scene, step, &ego_pose, &fused.fused, &fused.observed, config, rng)?
        }
        PlannerMode::CvaeOnly => {
            let gen = require(&models.generator, mode, "generator")?;
            let side = config.mining.ego_grid_side;
            let observed = build_observed_ogm(scene, step, &scene.ego.id, side, side, config.mining.resolution)?;
            sample_world_futures(gen, scene, step, &ego_pose, &observed, &observed, config, rng)?
        }
        PlannerMode::DriverSensorHeuristic => {
            let ds = require(&models.driver_sensor, mode, "driver_sensor")?;
            heuristic_futures(ds, scene, step, config)?
        }
    };

    let mut scored = Vec::with_capacity(candidates.trajectories.len());
    for cand in &candidates.trajectories {
        let base = cost_components(cand, &scene.lane_graph, &goal, &config.weights);
        let collision = collision_cost(cand, &visible, &predicted, &config.weights)?;
        let breakdown =
            CostBreakdown::assemble(base.heading, base.lane_dev, base.effort, collision, base.goal);
        scored.push((cand.clone(), breakdown));
    }
    let breakdowns: Vec<CostBreakdown> = scored.iter().map(|(_, b)| *b).collect();
    let chosen_index = argmin_total(&breakdowns);
    Ok(PlanResult {
        chosen: scored[chosen_index].0.clone(),
        chosen_index,
        candidates: scored,
        predicted,
        emergency: candidates.emergency,
    })
}

fn require<'a, T>(
    slot: &'a Option<T>,
    mode: PlannerMode,
    which: &'static str,
) -> Result<&'a T, PlannerError> {
    slot.as_ref().ok_or(PlannerError::MissingModel {
        mode: mode.as_str(),
        which,
    })
}

/// Draw occluded futures from the generator and lift them from the ego
/// frame at `step` into world coordinates.
fn sample_world_futures(
    gen: &OcclusionGenModel,
    scene: &Scene,
    step: usize,
    ego_pose: &AgentState,
    m_ego: &bivo_core::OccupancyGrid,
    m_obs: &bivo_core::OccupancyGrid,
    config: &PlannerConfig,
    rng: &mut impl Rng,
) -> Result<Vec<WeightedTrajectory>, PlannerError> {
    let side = config.mining.ego_grid_side;
    let road = build_road_raster(scene, *ego_pose, side, side, config.mining.resolution);
    let opts = SampleOptions {
        force_standard_normal: config.force_standard_normal,
        start_step: step,
        dt: scene.dt(),
    };
    let samples = sample_trajectories(
        gen,
        &road,
        m_ego,
        m_obs,
        ego_pose,
        config.k,
        config.pi_e,
        &config.limits,
        &opts,
        rng,
    )?;
    Ok(samples
        .into_iter()
        .map(|mut w| {
            for s in &mut w.trajectory.states {
                *s = from_ego_frame(s, ego_pose);
            }
            w
        })
        .collect())
}

/// Constant-velocity rollouts from the occluded cells the fused grid is
/// most confident about, headed along the nearest lane. Cells without any
/// lane nearby are skipped; each surviving rollout carries an equal share
/// of the existence probability.
fn heuristic_futures(
    ds: &DriverSensorModel,
    scene: &Scene,
    step: usize,
    config: &PlannerConfig,
) -> Result<Vec<WeightedTrajectory>, PlannerError> {
    let fused = fuse_scene(ds, scene, step, &config.mining)?;
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    for r in 0..fused.observed.height {
        for c in 0..fused.observed.width {
            if fused.observed.get(r, c) == OCCLUDED {
                let v = fused.fused.get(r, c);
                if v > config.heuristic_threshold {
                    cells.push((r, c, v));
                }
            }
        }
    }
    // Stable sort keeps row-major order among equal confidences.
    cells.sort_by(|a, b| b.2.partial_cmp(&a.2).expect("fused values are finite"));
    cells.truncate(config.heuristic_top_n);

    let dt = scene.dt();
    let mut rollouts = Vec::new();
    for (r, c, _) in cells {
        let (wx, wy) = fused.fused.cell_center_world(r, c);
        let Some(near) = scene.lane_graph.nearest_centerline(wx, wy) else {
            continue;
        };
        let (dx, dy) = (near.heading.cos(), near.heading.sin());
        let states = (0..=config.horizon_steps)
            .map(|i| {
                let t = i as f64 * dt;
                AgentState {
                    x: wx + t * config.heuristic_speed * dx,
                    y: wy + t * config.heuristic_speed * dy,
                    heading: near.heading,
                    speed: config.heuristic_speed,
                    accel: 0.0,
                }
            })
            .collect();
        rollouts.push(Trajectory::new("occluded", step, dt, states));
    }
    let n = rollouts.len();
    Ok(rollouts
        .into_iter()
        .map(|trajectory| WeightedTrajectory {
            trajectory,
            weight: config.pi_e / n as f64,
        })
        .collect())
}
