//! Occupancy-grid construction: footprint rasterization, observed grids with
//! occlusion, ground-truth grids, drivable-area rasters, and extraction of
//! occluded-agent training samples.

use crate::grid::{OccupancyGrid, FREE, OCCLUDED, OCCUPIED};
use crate::visibility::visibility_mask;
use crate::world::{to_ego_frame, AgentClass, AgentState, Scene, Trajectory};
use crate::CoreError;

/// Overlaps below this area proxy are treated as touching, not overlapping.
const OVERLAP_EPS: f64 = 1e-9;

/// Stamp an oriented `length x width` rectangle centered at `state` (given in
/// world coordinates) into the grid with `value`. A cell is covered iff the
/// rectangle and the cell square overlap with strictly positive area; cells
/// outside the grid are clipped.
pub fn stamp_footprint(grid: &mut OccupancyGrid, state: &AgentState, length: f64, width: f64, value: f64) {
    let local = to_ego_frame(state, &grid.center_pose);
    let (sin, cos) = local.heading.sin_cos();
    let (hl, hw) = (length * 0.5, width * 0.5);
    let res = grid.resolution;
    // Rectangle corners in the grid frame.
    let corners = [
        (local.x + cos * hl - sin * hw, local.y + sin * hl + cos * hw),
        (local.x + cos * hl + sin * hw, local.y + sin * hl - cos * hw),
        (local.x - cos * hl - sin * hw, local.y - sin * hl + cos * hw),
        (local.x - cos * hl + sin * hw, local.y - sin * hl - cos * hw),
    ];
    let min_x = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let max_x = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let max_y = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let half_w = (grid.width / 2) as f64;
    let half_h = (grid.height / 2) as f64;
    let c_lo = ((min_x / res).floor() + half_w).max(0.0) as i64;
    let c_hi = (((max_x / res).ceil() + half_w) as i64).min(grid.width as i64 - 1);
    let r_lo = ((min_y / res).floor() + half_h).max(0.0) as i64;
    let r_hi = (((max_y / res).ceil() + half_h) as i64).min(grid.height as i64 - 1);
    if c_lo >= grid.width as i64 || r_lo >= grid.height as i64 || c_hi < 0 || r_hi < 0 {
        return;
    }
    // Separating axes: the two rectangle axes and the two grid axes.
    let axes = [(cos, sin), (-sin, cos), (1.0, 0.0), (0.0, 1.0)];
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            let x0 = (c as f64 - half_w) * res;
            let y0 = (r as f64 - half_h) * res;
            let cell = [(x0, y0), (x0 + res, y0), (x0, y0 + res), (x0 + res, y0 + res)];
            let mut positive = true;
            for (ax, ay) in axes {
                let project = |pts: &[(f64, f64)]| {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for (px, py) in pts {
                        let p = px * ax + py * ay;
                        lo = lo.min(p);
                        hi = hi.max(p);
                    }
                    (lo, hi)
                };
                let (alo, ahi) = project(&corners);
                let (blo, bhi) = project(&cell);
                if ahi.min(bhi) - alo.max(blo) <= OVERLAP_EPS {
                    positive = false;
                    break;
                }
            }
            if positive {
                grid.set(r as usize, c as usize, value);
            }
        }
    }
}

/// Binary occupancy of every agent present at `step`, except `exclude_id`,
/// rasterized into a grid anchored at `center_pose`.
pub fn rasterize_agents(
    scene: &Scene,
    step: usize,
    exclude_id: &str,
    center_pose: AgentState,
    height: usize,
    width: usize,
    resolution: f64,
) -> OccupancyGrid {
    rasterize_agents_excluding(scene, step, &[exclude_id], center_pose, height, width, resolution)
}

/// [`rasterize_agents`] with several excluded agents.
pub fn rasterize_agents_excluding(
    scene: &Scene,
    step: usize,
    exclude_ids: &[&str],
    center_pose: AgentState,
    height: usize,
    width: usize,
    resolution: f64,
) -> OccupancyGrid {
    let mut grid = OccupancyGrid::filled(center_pose, resolution, height, width, FREE);
    for agent in scene.all_agents() {
        if exclude_ids.contains(&agent.id.as_str()) {
            continue;
        }
        if let Some(state) = agent.state_at(step) {
            stamp_footprint(&mut grid, state, agent.length, agent.width, OCCUPIED);
        }
    }
    grid
}

/// Whether `agent_id`'s position at `step` is hidden from the ego by other
/// geometry. The agent's own footprint is left out of the test so an agent
/// cannot shadow itself, and the verdict is false when it sits outside the
/// ego grid.
pub fn agent_occluded_from_ego(
    scene: &Scene,
    step: usize,
    agent_id: &str,
    height: usize,
    width: usize,
    resolution: f64,
) -> Result<bool, CoreError> {
    let agent = scene
        .agent(agent_id)
        .ok_or_else(|| CoreError::AgentNotFound(agent_id.to_string()))?;
    let ego_state = *scene.ego.trajectory.state_at(step)?;
    let now = agent.trajectory.state_at(step)?;
    let grid = rasterize_agents_excluding(
        scene,
        step,
        &[scene.ego.id.as_str(), agent_id],
        ego_state,
        height,
        width,
        resolution,
    );
    let cell = match grid.cell_of_world(now.x, now.y) {
        Some(cell) => cell,
        None => return Ok(false),
    };
    let visible = visibility_mask(&grid, None);
    Ok(!visible[grid.index(cell.0, cell.1)])
}

/// What `viewer_id` can see at `step`: occupied (1.0) and free (0.0) where
/// line of sight reaches, occluded (0.5) elsewhere. The viewer's own
/// footprint is excluded.
pub fn build_observed_ogm(
    scene: &Scene,
    step: usize,
    viewer_id: &str,
    height: usize,
    width: usize,
    resolution: f64,
) -> Result<OccupancyGrid, CoreError> {
    let viewer = scene
        .agent(viewer_id)
        .ok_or_else(|| CoreError::AgentNotFound(viewer_id.to_string()))?;
    let pose = *viewer.trajectory.state_at(step)?;
    let mut grid = rasterize_agents(scene, step, viewer_id, pose, height, width, resolution);
    let visible = visibility_mask(&grid, None);
    for (v, vis) in grid.values.iter_mut().zip(visible) {
        if !vis {
            *v = OCCLUDED;
        }
    }
    Ok(grid)
}

/// True occupancy around `agent_id` at `step`, no occlusion: values are
/// exactly {0.0, 1.0}. The agent's own footprint is excluded.
pub fn build_ground_truth_ogm(
    scene: &Scene,
    step: usize,
    agent_id: &str,
    height: usize,
    width: usize,
    resolution: f64,
) -> Result<OccupancyGrid, CoreError> {
    let agent = scene
        .agent(agent_id)
        .ok_or_else(|| CoreError::AgentNotFound(agent_id.to_string()))?;
    let pose = *agent.trajectory.state_at(step)?;
    Ok(rasterize_agents(scene, step, agent_id, pose, height, width, resolution))
}

/// Drivable-area mask (1.0 = drivable) in the frame of `center_pose`,
/// decided per cell by whether the cell center lies inside any drivable
/// polygon (even-odd rule).
pub fn build_road_raster(
    scene: &Scene,
    center_pose: AgentState,
    height: usize,
    width: usize,
    resolution: f64,
) -> OccupancyGrid {
    let mut grid = OccupancyGrid::filled(center_pose, resolution, height, width, FREE);
    for r in 0..height {
        for c in 0..width {
            let (wx, wy) = grid.cell_center_world(r, c);
            if scene
                .drivable_polygons
                .iter()
                .any(|poly| point_in_polygon(wx, wy, poly))
            {
                grid.set(r, c, 1.0);
            }
        }
    }
    grid
}

/// Even-odd point-in-polygon test; the closing edge is implicit.
pub fn point_in_polygon(x: f64, y: f64, poly: &[[f64; 2]]) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > y) != (yj > y) {
            let x_cross = xi + (y - yi) * (xj - xi) / (yj - yi);
            if x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// One training sample: an agent that was occluded from the ego at `step`
/// together with its future motion and the ego's view of the world.
#[derive(Debug, Clone)]
pub struct OccludedSample {
    pub scene_id: String,
    pub agent_id: String,
    pub agent_class: AgentClass,
    /// Extraction timestep; the trajectory starts here.
    pub step: usize,
    /// Future motion in the ego frame at `step`, `horizon_steps` states.
    pub trajectory: Trajectory,
    /// Ego observed grid at `step` ({0, 0.5, 1}).
    pub observed: OccupancyGrid,
    /// Drivable-area mask, same shape and frame.
    pub road: OccupancyGrid,
    /// Fused environment estimate; attached later by the sensing model.
    pub fused: Option<OccupancyGrid>,
}

/// Extraction parameters for [`extract_occluded_samples`].
#[derive(Debug, Clone, Copy)]
pub struct ExtractionConfig {
    pub horizon_steps: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    pub resolution: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            horizon_steps: crate::HORIZON_STEPS,
            grid_height: crate::EGO_GRID_SIZE,
            grid_width: crate::EGO_GRID_SIZE,
            resolution: crate::GRID_RESOLUTION,
        }
    }
}

/// Scan a scene for (timestep, agent) pairs where the agent is occluded
/// from the ego (per [`agent_occluded_from_ego`]) and has `horizon_steps`
/// of recorded future. Agents outside the ego grid are skipped.
pub fn extract_occluded_samples(scene: &Scene, cfg: &ExtractionConfig) -> Result<Vec<OccludedSample>, CoreError> {
    let mut samples = Vec::new();
    let ego = &scene.ego.trajectory;
    for step in ego.start_step..=ego.end_step() {
        let candidates: Vec<&crate::world::Agent> = scene
            .agents
            .iter()
            .filter(|a| a.trajectory.window(step, cfg.horizon_steps).is_some())
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let ego_state = *ego.state_at(step)?;
        let observed = build_observed_ogm(
            scene,
            step,
            &scene.ego.id,
            cfg.grid_height,
            cfg.grid_width,
            cfg.resolution,
        )?;
        let mut road: Option<OccupancyGrid> = None;
        for agent in candidates {
            if !agent_occluded_from_ego(scene, step, &agent.id, cfg.grid_height, cfg.grid_width, cfg.resolution)? {
                continue;
            }
            let states: Vec<AgentState> = agent
                .trajectory
                .window(step, cfg.horizon_steps)
                .unwrap()
                .iter()
                .map(|s| to_ego_frame(s, &ego_state))
                .collect();
            let road = road
                .get_or_insert_with(|| {
                    build_road_raster(scene, ego_state, cfg.grid_height, cfg.grid_width, cfg.resolution)
                })
                .clone();
            samples.push(OccludedSample {
                scene_id: scene.id.clone(),
                agent_id: agent.id.clone(),
                agent_class: agent.class,
                step,
                trajectory: Trajectory::new(agent.id.clone(), step, agent.trajectory.dt, states),
                observed: observed.clone(),
                road,
                fused: None,
            });
        }
    }
    Ok(samples)
}
