//! Terminal sampling along the lane graph and spline candidate generation.

use bivo_core::{
    kinematically_feasible, normalize_heading, AgentState, ControlLimits, LaneGraph, LanePoint,
    Scene, Trajectory,
};

use crate::PlannerError;

/// Terminals attach to the lane graph only within this distance.
pub const LANE_ATTACH_RADIUS: f64 = 10.0;
/// Fractions of the kinematic travel distance at which terminals sit.
const ARC_FRACTIONS: [f64; 3] = [0.6, 0.8, 1.0];
/// Terminal speeds as fractions of max(1.5 * current speed, 5 m/s).
const SPEED_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// Bound on distinct lane branches explored past forks.
const MAX_BRANCHES: usize = 8;

/// Projection of a point onto one lane's polyline.
struct LaneProjection {
    lane_idx: usize,
    /// Arc length from the lane start to the projected point.
    arc: f64,
    distance_sq: f64,
}

fn project_to_lanes(graph: &LaneGraph, x: f64, y: f64) -> Option<LaneProjection> {
    let mut best: Option<LaneProjection> = None;
    for (lane_idx, lane) in graph.lanes.iter().enumerate() {
        let mut arc_before = 0.0;
        if lane.centerline.len() == 1 {
            let p = lane.centerline[0];
            let d2 = (p.x - x).powi(2) + (p.y - y).powi(2);
            if best.as_ref().map_or(true, |b| d2 < b.distance_sq) {
                best = Some(LaneProjection {
                    lane_idx,
                    arc: 0.0,
                    distance_sq: d2,
                });
            }
            continue;
        }
        for w in lane.centerline.windows(2) {
            let (vx, vy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            let len2 = vx * vx + vy * vy;
            let t = if len2 > 0.0 {
                (((x - w[0].x) * vx + (y - w[0].y) * vy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (px, py) = (w[0].x + t * vx, w[0].y + t * vy);
            let d2 = (px - x).powi(2) + (py - y).powi(2);
            if best.as_ref().map_or(true, |b| d2 < b.distance_sq) {
                best = Some(LaneProjection {
                    lane_idx,
                    arc: arc_before + t * len2.sqrt(),
                    distance_sq: d2,
                });
            }
            arc_before += len2.sqrt();
        }
    }
    best
}

/// Polyline from an arc position on a lane forward, concatenating successor
/// lanes depth-first until `reach` meters are covered. One polyline per
/// maximal successor path, capped at [`MAX_BRANCHES`].
fn branches(graph: &LaneGraph, start: &LaneProjection, reach: f64) -> Vec<Vec<LanePoint>> {
    // Points of the start lane from the projection onward.
    let lane = &graph.lanes[start.lane_idx];
    let mut head = Vec::new();
    let mut arc = 0.0;
    let mut covered = -start.arc;
    for w in lane.centerline.windows(2) {
        let seg = ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt();
        if arc + seg > start.arc {
            if head.is_empty() {
                let t = if seg > 0.0 { (start.arc - arc) / seg } else { 0.0 };
                head.push(LanePoint {
                    x: w[0].x + t * (w[1].x - w[0].x),
                    y: w[0].y + t * (w[1].y - w[0].y),
                    heading: w[0].heading,
                });
            }
            head.push(w[1]);
        }
        arc += seg;
    }
    if head.is_empty() {
        // Projection at or past the lane end.
        if let Some(p) = lane.centerline.last() {
            head.push(*p);
        }
    }
    covered += lane.arc_length();

    let mut out = Vec::new();
    let mut stack = vec![(start.lane_idx, head, covered, vec![start.lane_idx])];
    while let Some((lane_idx, points, covered, visited)) = stack.pop() {
        let succs = &graph.lanes[lane_idx].successors;
        let mut extended = false;
        if covered < reach && out.len() + stack.len() < MAX_BRANCHES {
            for succ_id in succs {
                let Some(next_idx) = graph.lanes.iter().position(|l| &l.id == succ_id) else {
                    continue;
                };
                if visited.contains(&next_idx) {
                    continue;
                }
                let next = &graph.lanes[next_idx];
                let mut pts = points.clone();
                pts.extend(next.centerline.iter().copied());
                let mut vis = visited.clone();
                vis.push(next_idx);
                stack.push((next_idx, pts, covered + next.arc_length(), vis));
                extended = true;
            }
        }
        if !extended {
            out.push(points);
        }
    }
    out
}

/// Position and tangent heading at arc length `s` along a polyline; clamps
/// to the last point when `s` exceeds the length.
fn point_at_arc(points: &[LanePoint], s: f64) -> LanePoint {
    if points.len() == 1 {
        return points[0];
    }
    let mut remaining = s;
    for w in points.windows(2) {
        let (vx, vy) = (w[1].x - w[0].x, w[1].y - w[0].y);
        let seg = (vx * vx + vy * vy).sqrt();
        if remaining <= seg && seg > 0.0 {
            let t = remaining / seg;
            return LanePoint {
                x: w[0].x + t * vx,
                y: w[0].y + t * vy,
                heading: vy.atan2(vx),
            };
        }
        remaining -= seg;
    }
    *points.last().unwrap()
}

/// Evenly spread selection of at most `j` items, preserving order.
fn stratified_cap<T: Clone>(items: &[T], j: usize) -> Vec<T> {
    if items.len() <= j {
        return items.to_vec();
    }
    (0..j).map(|i| items[i * items.len() / j].clone()).collect()
}

/// Terminal states for the candidate splines.
///
/// Speeds span {0, 1/4, 1/2, 3/4, 1} of max(1.5 * current speed, 5 m/s)
/// (clamped to the speed limit); arc offsets are fractions of the mean-speed
/// travel distance over the horizon, floored at 1 m and capped at
/// `horizon_s * max_speed`. Terminals follow every lane branch reachable
/// from the nearest lane; with no lane within [`LANE_ATTACH_RADIUS`] they
/// fall back to the ego's straight-ahead ray. At most `j` terminals,
/// selected by stratified subsampling.
pub fn sample_terminals(
    graph: &LaneGraph,
    ego: &AgentState,
    j: usize,
    horizon_s: f64,
    limits: &ControlLimits,
) -> Vec<AgentState> {
    assert!(j >= 1, "at least one terminal required");
    let reach = horizon_s * limits.max_speed;
    let v0 = ego.speed;
    let top_speed = (1.5 * v0).max(5.0).min(limits.max_speed);

    let projection = project_to_lanes(graph, ego.x, ego.y)
        .filter(|p| p.distance_sq <= LANE_ATTACH_RADIUS * LANE_ATTACH_RADIUS);
    let mut terminals = Vec::new();
    match projection {
        Some(p) => {
            for branch in branches(graph, &p, reach) {
                for speed_frac in SPEED_FRACTIONS {
                    let v_t = speed_frac * top_speed;
                    for arc_frac in ARC_FRACTIONS {
                        let s = (arc_frac * 0.5 * (v0 + v_t) * horizon_s).clamp(1.0, reach);
                        let lp = point_at_arc(&branch, s);
                        terminals.push(AgentState::new(lp.x, lp.y, lp.heading, v_t, 0.0));
                    }
                }
            }
        }
        None => {
            let (dx, dy) = (ego.heading.cos(), ego.heading.sin());
            for speed_frac in SPEED_FRACTIONS {
                let v_t = speed_frac * top_speed;
                for arc_frac in ARC_FRACTIONS {
                    let s = (arc_frac * 0.5 * (v0 + v_t) * horizon_s).clamp(1.0, reach);
                    terminals.push(AgentState::new(
                        ego.x + s * dx,
                        ego.y + s * dy,
                        ego.heading,
                        v_t,
                        0.0,
                    ));
                }
            }
        }
    }
    stratified_cap(&terminals, j)
}

/// Cubic Hermite interpolation from the ego state to a terminal state:
/// position and velocity vector (speed along heading) match at both ends.
/// Headings come from the path tangent (falling back to the previous
/// heading where the tangent vanishes), speeds from the tangent magnitude,
/// accelerations from speed differencing with the last value repeated.
pub fn spline_connect(ego: &AgentState, terminal: &AgentState, steps: usize, dt: f64) -> Trajectory {
    assert!(steps >= 2, "a spline needs at least two samples");
    let t_total = (steps - 1) as f64 * dt;
    let p0 = (ego.x, ego.y);
    let p1 = (terminal.x, terminal.y);
    let m0 = (
        ego.speed * ego.heading.cos() * t_total,
        ego.speed * ego.heading.sin() * t_total,
    );
    let m1 = (
        terminal.speed * terminal.heading.cos() * t_total,
        terminal.speed * terminal.heading.sin() * t_total,
    );

    let mut xs = Vec::with_capacity(steps);
    let mut speeds = Vec::with_capacity(steps);
    let mut headings = Vec::with_capacity(steps);
    let mut prev_heading = ego.heading;
    for i in 0..steps {
        let u = i as f64 / (steps - 1) as f64;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        let x = h00 * p0.0 + h10 * m0.0 + h01 * p1.0 + h11 * m1.0;
        let y = h00 * p0.1 + h10 * m0.1 + h01 * p1.1 + h11 * m1.1;
        let d00 = 6.0 * u2 - 6.0 * u;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = -6.0 * u2 + 6.0 * u;
        let d11 = 3.0 * u2 - 2.0 * u;
        let dxdu = d00 * p0.0 + d10 * m0.0 + d01 * p1.0 + d11 * m1.0;
        let dydu = d00 * p0.1 + d10 * m0.1 + d01 * p1.1 + d11 * m1.1;
        let speed = if t_total > 0.0 {
            (dxdu * dxdu + dydu * dydu).sqrt() / t_total
        } else {
            0.0
        };
        let heading = if speed > 1e-9 {
            dydu.atan2(dxdu)
        } else {
            prev_heading
        };
        prev_heading = heading;
        xs.push((x, y));
        speeds.push(speed);
        headings.push(heading);
    }

    let mut states = Vec::with_capacity(steps);
    for i in 0..steps {
        let accel = if i + 1 < steps {
            (speeds[i + 1] - speeds[i]) / dt
        } else {
            (speeds[i] - speeds[i - 1]) / dt
        };
        states.push(AgentState::new(
            xs[i].0,
            xs[i].1,
            normalize_heading(headings[i]),
            speeds[i],
            accel,
        ));
    }
    Trajectory::new("candidate", 0, dt, states)
}

/// Straight max-braking trajectory from the ego state; always within the
/// control limits.
pub fn emergency_trajectory(
    ego: &AgentState,
    steps: usize,
    dt: f64,
    start_step: usize,
    limits: &ControlLimits,
) -> Trajectory {
    assert!(steps >= 2);
    let mut speeds = Vec::with_capacity(steps);
    let mut v = ego.speed;
    for _ in 0..steps {
        speeds.push(v);
        v = (v + limits.min_accel * dt).max(0.0);
    }
    let (dx, dy) = (ego.heading.cos(), ego.heading.sin());
    let mut states = Vec::with_capacity(steps);
    let (mut x, mut y) = (ego.x, ego.y);
    for i in 0..steps {
        let accel = if i + 1 < steps {
            (speeds[i + 1] - speeds[i]) / dt
        } else {
            0.0
        };
        states.push(AgentState::new(x, y, ego.heading, speeds[i], accel));
        if i + 1 < steps {
            // Trapezoidal position update.
            let ds = 0.5 * (speeds[i] + speeds[i + 1]) * dt;
            x += ds * dx;
            y += ds * dy;
        }
    }
    Trajectory::new("candidate", start_step, dt, states)
}

/// Candidate trajectories for one planning step, all kinematically
/// feasible. `emergency` marks the max-braking fallback used when no
/// sampled candidate survives the limits.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub trajectories: Vec<Trajectory>,
    pub emergency: bool,
}

/// Terminals -> splines -> control-limit filter, with the emergency
/// fallback when nothing survives. Deterministic: no randomness anywhere.
pub fn generate_candidates(
    scene: &Scene,
    step: usize,
    j: usize,
    horizon_steps: usize,
    limits: &ControlLimits,
) -> Result<CandidateSet, PlannerError> {
    let dt = scene.dt();
    let ego = *scene
        .ego
        .state_at(step)
        .ok_or(PlannerError::NoEgoState(step))?;
    let horizon_s = horizon_steps as f64 * dt;
    let terminals = sample_terminals(&scene.lane_graph, &ego, j, horizon_s, limits);
    let mut trajectories = Vec::new();
    for terminal in &terminals {
        let mut t = spline_connect(&ego, terminal, horizon_steps + 1, dt);
        t.start_step = step;
        if kinematically_feasible(&t, limits)? {
            trajectories.push(t);
        }
    }
    if trajectories.is_empty() {
        return Ok(CandidateSet {
            trajectories: vec![emergency_trajectory(&ego, horizon_steps + 1, dt, step, limits)],
            emergency: true,
        });
    }
    Ok(CandidateSet {
        trajectories,
        emergency: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use bivo_core::Lane;

    fn straight_lane(id: &str, x0: f64, x1: f64, y: f64) -> Lane {
        let n = ((x1 - x0) / 2.0).ceil() as usize + 1;
        let centerline = (0..n)
            .map(|i| {
                let x = x0 + (x1 - x0) * i as f64 / (n - 1) as f64;
                LanePoint { x, y, heading: 0.0 }
            })
            .collect();
        Lane {
            id: id.into(),
            centerline,
            successors: vec![],
        }
    }

    #[test]
    fn single_lane_five_terminals_distinct_speeds() {
        let graph = LaneGraph {
            lanes: vec![straight_lane("a", -10.0, 150.0, 0.0)],
        };
        let ego = AgentState::new(0.0, 0.0, 0.0, 8.0, 0.0);
        let limits = ControlLimits::default();
        let terms = sample_terminals(&graph, &ego, 5, 5.0, &limits);
        assert_eq!(terms.len(), 5);
        let mut speeds: Vec<f64> = terms.iter().map(|t| t.speed).collect();
        speeds.dedup();
        assert_eq!(speeds.len(), 5, "speeds not distinct: {speeds:?}");
        for t in &terms {
            assert!(t.y.abs() < 1e-9, "terminal off centerline: {}", t.y);
        }
    }

    #[test]
    fn terminals_respect_reach_bound() {
        let graph = LaneGraph {
            lanes: vec![straight_lane("a", -10.0, 500.0, 0.0)],
        };
        let limits = ControlLimits::default();
        for v0 in [0.0, 5.0, 19.0, 20.0] {
            let ego = AgentState::new(0.0, 0.0, 0.0, v0, 0.0);
            let terms = sample_terminals(&graph, &ego, 64, 5.0, &limits);
            let reach = 5.0 * limits.max_speed;
            for t in &terms {
                let d = ((t.x - ego.x).powi(2) + (t.y - ego.y).powi(2)).sqrt();
                assert!(d <= reach + 1e-9, "terminal {d} m away exceeds reach {reach}");
            }
        }
    }

    #[test]
    fn fork_reaches_both_branches() {
        let mut trunk = straight_lane("trunk", 0.0, 20.0, 0.0);
        trunk.successors = vec!["left".into(), "right".into()];
        // Branches diverge in y past the fork.
        let n = 26;
        let left = Lane {
            id: "left".into(),
            centerline: (0..n)
                .map(|i| {
                    let s = i as f64 * 2.0;
                    LanePoint {
                        x: 20.0 + s,
                        y: 0.1 * s,
                        heading: 0.1f64.atan(),
                    }
                })
                .collect(),
            successors: vec![],
        };
        let right = Lane {
            id: "right".into(),
            centerline: (0..n)
                .map(|i| {
                    let s = i as f64 * 2.0;
                    LanePoint {
                        x: 20.0 + s,
                        y: -0.1 * s,
                        heading: (-0.1f64).atan(),
                    }
                })
                .collect(),
            successors: vec![],
        };
        let graph = LaneGraph {
            lanes: vec![trunk, left, right],
        };
        let ego = AgentState::new(0.0, 0.0, 0.0, 15.0, 0.0);
        let terms = sample_terminals(&graph, &ego, 64, 5.0, &ControlLimits::default());
        let above = terms.iter().any(|t| t.y > 0.5);
        let below = terms.iter().any(|t| t.y < -0.5);
        assert!(above && below, "terminals missing a branch");
    }

    #[test]
    fn no_nearby_lane_falls_back_straight() {
        let graph = LaneGraph {
            lanes: vec![straight_lane("far", 0.0, 100.0, 50.0)],
        };
        let heading = 0.7;
        let ego = AgentState::new(0.0, 0.0, heading, 6.0, 0.0);
        let terms = sample_terminals(&graph, &ego, 64, 5.0, &ControlLimits::default());
        assert!(!terms.is_empty());
        for t in &terms {
            assert_eq!(t.heading, heading);
            // Terminal direction matches the ego ray.
            let along = (t.x - ego.x) * heading.cos() + (t.y - ego.y) * heading.sin();
            let across = -(t.x - ego.x) * heading.sin() + (t.y - ego.y) * heading.cos();
            assert!(along > 0.0);
            assert!(across.abs() < 1e-9);
        }
    }

    #[test]
    fn spline_degenerate_is_constant() {
        let ego = AgentState::new(3.0, -2.0, 1.2, 0.0, 0.0);
        let t = spline_connect(&ego, &ego, 11, 0.5);
        assert_eq!(t.len(), 11);
        for s in &t.states {
            assert!((s.x - 3.0).abs() < 1e-12);
            assert!((s.y + 2.0).abs() < 1e-12);
            assert_eq!(s.heading, 1.2);
            assert_eq!(s.speed, 0.0);
        }
    }

    #[test]
    fn spline_reproduces_straight_constant_velocity() {
        let v = 7.0;
        let heading = 0.4;
        let ego = AgentState::new(1.0, 2.0, heading, v, 0.0);
        let t_total = 5.0;
        let terminal = AgentState::new(
            1.0 + v * t_total * heading.cos(),
            2.0 + v * t_total * heading.sin(),
            heading,
            v,
            0.0,
        );
        let t = spline_connect(&ego, &terminal, 11, 0.5);
        for (i, s) in t.states.iter().enumerate() {
            let expect_x = 1.0 + v * (i as f64 * 0.5) * heading.cos();
            let expect_y = 2.0 + v * (i as f64 * 0.5) * heading.sin();
            // Lateral deviation from the straight line.
            let lat = -(s.x - expect_x) * heading.sin() + (s.y - expect_y) * heading.cos();
            assert!(lat.abs() < 1e-9, "lateral deviation {lat}");
            assert!((s.speed - v).abs() < 1e-9);
            assert!(s.accel.abs() < 1e-9);
        }
    }

    #[test]
    fn spline_interpolates_endpoints() {
        // Deterministic pseudo-random endpoint pairs.
        let mut seed = 0x12345u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let ego = AgentState::new(
                next() * 40.0 - 20.0,
                next() * 40.0 - 20.0,
                next() * 6.0 - 3.0,
                next() * 15.0,
                0.0,
            );
            let terminal = AgentState::new(
                next() * 40.0 - 20.0,
                next() * 40.0 - 20.0,
                next() * 6.0 - 3.0,
                next() * 15.0,
                0.0,
            );
            let t = spline_connect(&ego, &terminal, 11, 0.5);
            let first = &t.states[0];
            let last = t.states.last().unwrap();
            assert!((first.x - ego.x).abs() < 1e-9 && (first.y - ego.y).abs() < 1e-9);
            assert!((last.x - terminal.x).abs() < 1e-9 && (last.y - terminal.y).abs() < 1e-9);
        }
    }

    fn toy_scene() -> Scene {
        let lane = straight_lane("a", -20.0, 200.0, 0.0);
        let ego_states: Vec<AgentState> = (0..40)
            .map(|i| AgentState::new(i as f64 * 5.0 * 0.5, 0.0, 0.0, 5.0, 0.0))
            .collect();
        Scene {
            id: "toy".into(),
            lane_graph: LaneGraph { lanes: vec![lane] },
            drivable_polygons: vec![vec![[-30.0, -10.0], [210.0, -10.0], [210.0, 10.0], [-30.0, 10.0]]],
            agents: vec![],
            ego: bivo_core::Agent {
                id: "ego".into(),
                class: bivo_core::AgentClass::Vehicle,
                length: 4.0,
                width: 2.0,
                trajectory: Trajectory::new("ego", 0, 0.5, ego_states),
            },
            duration_steps: 40,
        }
    }

    #[test]
    fn candidates_are_feasible_and_capped() {
        let scene = toy_scene();
        let limits = ControlLimits::default();
        let set = generate_candidates(&scene, 0, 16, 10, &limits).unwrap();
        assert!(!set.emergency);
        assert!(set.trajectories.len() <= 16);
        assert!(!set.trajectories.is_empty());
        for t in &set.trajectories {
            assert_eq!(t.len(), 11);
            assert_eq!(t.start_step, 0);
            assert!(kinematically_feasible(t, &limits).unwrap());
        }
    }

    #[test]
    fn infeasible_everything_triggers_emergency() {
        let scene = toy_scene();
        // Ego moves at 5 m/s but the cap is far below: every sampled spline
        // starts above max_speed, so nothing survives.
        let limits = ControlLimits {
            max_speed: 1.0,
            ..ControlLimits::default()
        };
        let set = generate_candidates(&scene, 0, 8, 10, &limits).unwrap();
        assert!(set.emergency);
        assert_eq!(set.trajectories.len(), 1);
        let t = &set.trajectories[0];
        // Braking to zero and staying on heading.
        assert!(t.states.last().unwrap().speed < t.states[0].speed);
        assert!(kinematically_feasible(t, &limits).is_ok());
        for s in &t.states {
            assert_eq!(s.heading, 0.0);
            assert!(s.y.abs() < 1e-12);
        }
    }

    #[test]
    fn emergency_trajectory_brakes_to_zero() {
        let limits = ControlLimits::default();
        let ego = AgentState::new(0.0, 0.0, 0.3, 10.0, 0.0);
        let t = emergency_trajectory(&ego, 11, 0.5, 7, &limits);
        assert_eq!(t.start_step, 7);
        assert_eq!(t.len(), 11);
        assert!(kinematically_feasible(&t, &limits).unwrap());
        // 10 m/s at -8 m/s^2 stops within 3 steps.
        assert_eq!(t.states.last().unwrap().speed, 0.0);
        assert!(t.states[3].speed == 0.0);
    }
}
