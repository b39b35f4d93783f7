//! Scene primitives: agent states, trajectories, lane graphs, and the
//! kinematic feasibility check used to filter candidate plans.

use std::f64::consts::PI;

use crate::CoreError;

/// Normalize an angle to the half-open interval `[-PI, PI)`. In-range
/// angles pass through bit-exact, so normalization is idempotent.
pub fn normalize_heading(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let two_pi = 2.0 * PI;
    let r = (angle + PI).rem_euclid(two_pi) - PI;
    // rem_euclid can land exactly on 2*PI for inputs a hair below zero.
    if r >= PI {
        -PI
    } else {
        r
    }
}

/// Kinematic state of one agent at one timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    /// Radians in `[-PI, PI)`.
    pub heading: f64,
    /// Meters per second, non-negative.
    pub speed: f64,
    /// Meters per second squared (signed, along the path).
    pub accel: f64,
}

impl AgentState {
    /// Build a state with the heading normalized. Tiny negative speeds from
    /// floating-point differencing are clamped to zero; genuinely negative
    /// speeds are a caller bug.
    pub fn new(x: f64, y: f64, heading: f64, speed: f64, accel: f64) -> Self {
        debug_assert!(speed > -1e-9, "negative speed {speed}");
        AgentState {
            x,
            y,
            heading: normalize_heading(heading),
            speed: speed.max(0.0),
            accel,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    /// Euclidean distance between the positions of two states.
    pub fn distance_to(&self, other: &AgentState) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Rigid transform of `state` into the frame anchored at `frame`
/// (translate by -frame position, rotate by -frame heading).
pub fn to_ego_frame(state: &AgentState, frame: &AgentState) -> AgentState {
    let (sin, cos) = (-frame.heading).sin_cos();
    let dx = state.x - frame.x;
    let dy = state.y - frame.y;
    AgentState {
        x: cos * dx - sin * dy,
        y: sin * dx + cos * dy,
        heading: normalize_heading(state.heading - frame.heading),
        speed: state.speed,
        accel: state.accel,
    }
}

/// Inverse of [`to_ego_frame`]: map a frame-local state back to world
/// coordinates.
pub fn from_ego_frame(local: &AgentState, frame: &AgentState) -> AgentState {
    let (sin, cos) = frame.heading.sin_cos();
    AgentState {
        x: frame.x + cos * local.x - sin * local.y,
        y: frame.y + sin * local.x + cos * local.y,
        heading: normalize_heading(local.heading + frame.heading),
        speed: local.speed,
        accel: local.accel,
    }
}

/// Transform a bare point into the frame anchored at `frame`.
pub fn point_to_frame(x: f64, y: f64, frame: &AgentState) -> (f64, f64) {
    let (sin, cos) = (-frame.heading).sin_cos();
    let dx = x - frame.x;
    let dy = y - frame.y;
    (cos * dx - sin * dy, sin * dx + cos * dy)
}

/// Transform a frame-local point back to world coordinates.
pub fn point_from_frame(x: f64, y: f64, frame: &AgentState) -> (f64, f64) {
    let (sin, cos) = frame.heading.sin_cos();
    (frame.x + cos * x - sin * y, frame.y + sin * x + cos * y)
}

/// A time-indexed sequence of states at a fixed step size.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub agent_id: String,
    /// Absolute timestep of `states[0]`.
    pub start_step: usize,
    /// Seconds between consecutive states, > 0.
    pub dt: f64,
    /// Length >= 1.
    pub states: Vec<AgentState>,
}

impl Trajectory {
    pub fn new(agent_id: impl Into<String>, start_step: usize, dt: f64, states: Vec<AgentState>) -> Self {
        debug_assert!(dt > 0.0);
        debug_assert!(!states.is_empty());
        Trajectory {
            agent_id: agent_id.into(),
            start_step,
            dt,
            states,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Last timestep covered (inclusive).
    pub fn end_step(&self) -> usize {
        self.start_step + self.states.len() - 1
    }

    pub fn covers_step(&self, step: usize) -> bool {
        step >= self.start_step && step <= self.end_step()
    }

    /// The stored state at an absolute timestep; no interpolation.
    pub fn state_at(&self, step: usize) -> Result<&AgentState, CoreError> {
        if !self.covers_step(step) {
            return Err(CoreError::StepOutOfRange {
                step,
                start: self.start_step,
                len: self.states.len(),
            });
        }
        Ok(&self.states[step - self.start_step])
    }

    /// Contiguous slice of states for `[from, from + count)`, if covered.
    pub fn window(&self, from: usize, count: usize) -> Option<&[AgentState]> {
        if from < self.start_step || count == 0 {
            return None;
        }
        let lo = from - self.start_step;
        let hi = lo + count;
        if hi > self.states.len() {
            return None;
        }
        Some(&self.states[lo..hi])
    }
}

/// Control-limit envelope for feasibility filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlLimits {
    /// m/s^2, > 0.
    pub max_accel: f64,
    /// m/s^2, < 0 (braking).
    pub min_accel: f64,
    /// m/s, > 0.
    pub max_speed: f64,
    /// 1/m, > 0.
    pub max_curvature: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        ControlLimits {
            max_accel: 4.0,
            min_accel: -8.0,
            max_speed: 20.0,
            max_curvature: 0.3,
        }
    }
}

/// True iff every finite-difference acceleration, speed, and discrete
/// curvature along the trajectory respects the limits.
///
/// Curvature is heading change divided by traveled arc length per step.
/// Steps shorter than 1e-6 m count as zero curvature when the heading is
/// unchanged and as infeasible otherwise.
pub fn kinematically_feasible(traj: &Trajectory, limits: &ControlLimits) -> Result<bool, CoreError> {
    if traj.states.len() < 2 {
        return Err(CoreError::TrajectoryTooShort {
            len: traj.states.len(),
        });
    }
    let dt = traj.dt;
    for pair in traj.states.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.speed > limits.max_speed || b.speed > limits.max_speed {
            return Ok(false);
        }
        let accel = (b.speed - a.speed) / dt;
        if accel < limits.min_accel || accel > limits.max_accel {
            return Ok(false);
        }
        let arc = a.distance_to(b);
        let dheading = normalize_heading(b.heading - a.heading).abs();
        if arc < 1e-6 {
            if dheading > 1e-9 {
                return Ok(false);
            }
        } else if dheading / arc > limits.max_curvature {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Road-user category; footprint dimensions live on the agent itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentClass {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl AgentClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentClass::Vehicle => "vehicle",
            AgentClass::Pedestrian => "pedestrian",
            AgentClass::Cyclist => "cyclist",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match s {
            "vehicle" => Ok(AgentClass::Vehicle),
            "pedestrian" => Ok(AgentClass::Pedestrian),
            "cyclist" => Ok(AgentClass::Cyclist),
            other => Err(CoreError::InvalidScene(format!("unknown agent class {other:?}"))),
        }
    }
}

/// One road user with an oriented rectangular footprint and a recorded
/// trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    pub class: AgentClass,
    /// Footprint extent along the heading, meters, > 0.
    pub length: f64,
    /// Footprint extent across the heading, meters, > 0.
    pub width: f64,
    pub trajectory: Trajectory,
}

impl Agent {
    pub fn state_at(&self, step: usize) -> Option<&AgentState> {
        self.trajectory.state_at(step).ok()
    }
}

/// One centerline sample of a lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: String,
    /// Sampled at most 2 m apart.
    pub centerline: Vec<LanePoint>,
    pub successors: Vec<String>,
}

impl Lane {
    /// Total polyline length in meters.
    pub fn arc_length(&self) -> f64 {
        self.centerline
            .windows(2)
            .map(|w| ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt())
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LaneGraph {
    pub lanes: Vec<Lane>,
}

impl LaneGraph {
    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    /// Nearest centerline point over all lanes: `(lane index, point index,
    /// squared distance)`.
    pub fn nearest_point(&self, x: f64, y: f64) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (li, lane) in self.lanes.iter().enumerate() {
            for (pi, p) in lane.centerline.iter().enumerate() {
                let d2 = (p.x - x).powi(2) + (p.y - y).powi(2);
                if best.map_or(true, |(_, _, bd)| d2 < bd) {
                    best = Some((li, pi, d2));
                }
            }
        }
        best
    }

    /// Distance from a point to the nearest centerline segment, together
    /// with the heading of that segment's stored start point.
    pub fn nearest_centerline(&self, x: f64, y: f64) -> Option<NearestCenterline> {
        let mut best: Option<NearestCenterline> = None;
        for lane in &self.lanes {
            if lane.centerline.len() == 1 {
                let p = lane.centerline[0];
                let d2 = (p.x - x).powi(2) + (p.y - y).powi(2);
                if best.as_ref().map_or(true, |b| d2 < b.distance_sq) {
                    best = Some(NearestCenterline {
                        distance_sq: d2,
                        heading: p.heading,
                    });
                }
                continue;
            }
            for w in lane.centerline.windows(2) {
                let (ax, ay) = (w[0].x, w[0].y);
                let (bx, by) = (w[1].x, w[1].y);
                let (vx, vy) = (bx - ax, by - ay);
                let len2 = vx * vx + vy * vy;
                let t = if len2 > 0.0 {
                    (((x - ax) * vx + (y - ay) * vy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (px, py) = (ax + t * vx, ay + t * vy);
                let d2 = (px - x).powi(2) + (py - y).powi(2);
                if best.as_ref().map_or(true, |b| d2 < b.distance_sq) {
                    let heading = if len2 > 1e-12 {
                        vy.atan2(vx)
                    } else {
                        w[0].heading
                    };
                    best = Some(NearestCenterline {
                        distance_sq: d2,
                        heading,
                    });
                }
            }
        }
        best
    }
}

/// Result of a nearest-centerline query.
#[derive(Debug, Clone, Copy)]
pub struct NearestCenterline {
    pub distance_sq: f64,
    pub heading: f64,
}

/// A complete scenario: map geometry plus recorded agent motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub lane_graph: LaneGraph,
    /// Drivable area as simple polygons (closed, implicit last edge).
    pub drivable_polygons: Vec<Vec<[f64; 2]>>,
    /// Non-ego agents.
    pub agents: Vec<Agent>,
    pub ego: Agent,
    pub duration_steps: usize,
}

impl Scene {
    /// Ego plus all non-ego agents.
    pub fn all_agents(&self) -> impl Iterator<Item = &Agent> {
        std::iter::once(&self.ego).chain(self.agents.iter())
    }

    pub fn agent(&self, id: &str) -> Option<&Agent> {
        self.all_agents().find(|a| a.id == id)
    }

    pub fn dt(&self) -> f64 {
        self.ego.trajectory.dt
    }

    /// Check the structural invariants; returns the first violation.
    pub fn validate(&self) -> Result<(), CoreError> {
        let err = |msg: String| Err(CoreError::InvalidScene(msg));
        if self.duration_steps == 0 {
            return err("duration_steps must be positive".into());
        }
        for agent in self.agents.iter() {
            if agent.id == self.ego.id {
                return err(format!("agent id {:?} collides with ego id", agent.id));
            }
        }
        for agent in self.all_agents() {
            if !(agent.length > 0.0 && agent.width > 0.0) {
                return err(format!("agent {:?} has non-positive footprint", agent.id));
            }
            if agent.trajectory.dt <= 0.0 {
                return err(format!("agent {:?} has non-positive dt", agent.id));
            }
            if agent.trajectory.states.is_empty() {
                return err(format!("agent {:?} has an empty trajectory", agent.id));
            }
            if agent.trajectory.end_step() >= self.duration_steps {
                return err(format!(
                    "agent {:?} trajectory ends at step {} beyond duration {}",
                    agent.id,
                    agent.trajectory.end_step(),
                    self.duration_steps
                ));
            }
            for s in &agent.trajectory.states {
                if s.speed < 0.0 {
                    return err(format!("agent {:?} has negative speed", agent.id));
                }
                if !(s.heading >= -PI && s.heading < PI) {
                    return err(format!("agent {:?} has unnormalized heading", agent.id));
                }
            }
        }
        for lane in &self.lane_graph.lanes {
            if lane.centerline.is_empty() {
                return err(format!("lane {:?} has an empty centerline", lane.id));
            }
            for w in lane.centerline.windows(2) {
                let d = ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt();
                if d > 2.0 + 1e-9 {
                    return err(format!("lane {:?} centerline spacing {d:.3} m exceeds 2 m", lane.id));
                }
            }
            for succ in &lane.successors {
                if self.lane_graph.lane(succ).is_none() {
                    return err(format!("lane {:?} successor {:?} does not exist", lane.id, succ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: f64, y: f64, heading: f64, speed: f64) -> AgentState {
        AgentState::new(x, y, heading, speed, 0.0)
    }

    #[test]
    fn state_at_identity_case() {
        let s = state(1.0, 2.0, 0.3, 4.0);
        let traj = Trajectory::new("a", 0, 0.5, vec![s]);
        assert_eq!(*traj.state_at(0).unwrap(), s);
    }

    #[test]
    fn state_at_direct_indexing() {
        let states = vec![state(0.0, 0.0, 0.0, 2.0), state(1.0, 0.0, 0.0, 2.0), state(2.0, 0.0, 0.0, 2.0)];
        let traj = Trajectory::new("a", 0, 0.5, states);
        assert_eq!(traj.state_at(2).unwrap().x, 2.0);
    }

    #[test]
    fn state_at_out_of_range() {
        let traj = Trajectory::new("a", 3, 0.5, vec![state(0.0, 0.0, 0.0, 0.0)]);
        assert!(matches!(traj.state_at(4), Err(CoreError::StepOutOfRange { .. })));
        assert!(matches!(traj.state_at(2), Err(CoreError::StepOutOfRange { .. })));
    }

    #[test]
    fn ego_frame_self_transform_is_origin() {
        let ego = state(5.0, -3.0, 1.2, 7.0);
        let local = to_ego_frame(&ego, &ego);
        assert!(local.x.abs() < 1e-12);
        assert!(local.y.abs() < 1e-12);
        assert!(local.heading.abs() < 1e-12);
    }

    #[test]
    fn ego_frame_quarter_turn() {
        // Ego facing +y; a state one meter ahead of it lands on the local +x axis.
        let ego = state(0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let s = state(0.0, 1.0, std::f64::consts::FRAC_PI_2, 0.0);
        let local = to_ego_frame(&s, &ego);
        assert!((local.x - 1.0).abs() < 1e-12);
        assert!(local.y.abs() < 1e-12);
        assert!(local.heading.abs() < 1e-12);
    }

    #[test]
    fn ego_frame_round_trip() {
        let ego = state(3.0, 4.0, -2.1, 1.0);
        let s = state(-7.5, 2.25, 2.9, 3.0);
        let back = from_ego_frame(&to_ego_frame(&s, &ego), &ego);
        assert!((back.x - s.x).abs() < 1e-9);
        assert!((back.y - s.y).abs() < 1e-9);
        assert!(normalize_heading(back.heading - s.heading).abs() < 1e-9);
    }

    #[test]
    fn heading_normalization_range_and_idempotence() {
        for a in [-10.0, -PI, -1.0, 0.0, 1.0, PI, 10.0, 123.456] {
            let n = normalize_heading(a);
            assert!((-PI..PI).contains(&n), "{a} -> {n}");
            assert_eq!(normalize_heading(n), n);
        }
        assert_eq!(normalize_heading(PI), -PI);
    }

    #[test]
    fn feasible_constant_velocity() {
        let states: Vec<_> = (0..6).map(|i| state(i as f64 * 2.5, 0.0, 0.0, 5.0)).collect();
        let traj = Trajectory::new("a", 0, 0.5, states);
        let limits = ControlLimits {
            max_speed: 10.0,
            ..ControlLimits::default()
        };
        assert!(kinematically_feasible(&traj, &limits).unwrap());
    }

    #[test]
    fn infeasible_speed_jump() {
        let traj = Trajectory::new(
            "a",
            0,
            0.5,
            vec![state(0.0, 0.0, 0.0, 0.0), state(5.0, 0.0, 0.0, 20.0)],
        );
        let limits = ControlLimits::default();
        // 0 -> 20 m/s in 0.5 s is 40 m/s^2.
        assert!(!kinematically_feasible(&traj, &limits).unwrap());
    }

    #[test]
    fn infeasible_u_turn_in_place() {
        // Half-meter step with a PI heading flip: curvature PI / 0.5 >> 0.2.
        let traj = Trajectory::new(
            "a",
            0,
            0.5,
            vec![state(0.0, 0.0, 0.0, 1.0), state(0.5, 0.0, PI, 1.0)],
        );
        let limits = ControlLimits {
            max_curvature: 0.2,
            ..ControlLimits::default()
        };
        assert!(!kinematically_feasible(&traj, &limits).unwrap());
    }

    #[test]
    fn feasibility_requires_two_states() {
        let traj = Trajectory::new("a", 0, 0.5, vec![state(0.0, 0.0, 0.0, 0.0)]);
        assert!(matches!(
            kinematically_feasible(&traj, &ControlLimits::default()),
            Err(CoreError::TrajectoryTooShort { .. })
        ));
    }
}
