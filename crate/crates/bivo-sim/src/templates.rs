//! Synthetic scenario generators. Desk-scale stand-ins for a recorded
//! driving corpus: every scene is 30 s of straight-road traffic with
//! ground-truth trajectories for all agents, and the occlusion templates
//! place their hidden agent so that it is provably invisible from the ego
//! start pose.
//!
//! Geometry conventions shared by all templates: the ego drives +x along a
//! lane at y = 0 starting from the origin; an oncoming lane runs at y = 4;
//! +y is the ego's left. Occluders are parked on the left shoulder between
//! the two, so their shadows fall across the oncoming/crossing space.

use bivo_core::{
    Agent, AgentClass, AgentState, Lane, LaneGraph, LanePoint, Scene, Trajectory, DT,
};
use rand::Rng;
use std::f64::consts::{FRAC_PI_2, PI};

/// States per scene: 30 s at [`DT`].
pub const SCENE_STEPS: usize = 61;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    StraightEmpty,
    OccludingTruckCrossing,
    OncomingBehindOccluder,
    ParkedRowPedestrian,
    RandomTraffic,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [
        TemplateKind::StraightEmpty,
        TemplateKind::OccludingTruckCrossing,
        TemplateKind::OncomingBehindOccluder,
        TemplateKind::ParkedRowPedestrian,
        TemplateKind::RandomTraffic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateKind::StraightEmpty => "straight_empty",
            TemplateKind::OccludingTruckCrossing => "occluding_truck_crossing",
            TemplateKind::OncomingBehindOccluder => "oncoming_behind_occluder",
            TemplateKind::ParkedRowPedestrian => "parked_row_pedestrian",
            TemplateKind::RandomTraffic => "random_traffic",
        }
    }

    pub fn parse(s: &str) -> Option<TemplateKind> {
        TemplateKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Whether the template may place an agent hidden from the ego at t=0.
    pub fn has_hidden_agent(&self) -> bool {
        matches!(
            self,
            TemplateKind::OccludingTruckCrossing
                | TemplateKind::OncomingBehindOccluder
                | TemplateKind::ParkedRowPedestrian
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScenarioTemplate {
    pub kind: TemplateKind,
    /// Probability that the hidden agent exists (occlusion templates only).
    pub hidden_presence: f64,
    /// Ego speed is drawn uniformly from this range, m/s.
    pub ego_speed: (f64, f64),
}

impl ScenarioTemplate {
    pub fn new(kind: TemplateKind) -> Self {
        ScenarioTemplate {
            kind,
            hidden_presence: 1.0,
            ego_speed: (4.0, 8.0),
        }
    }
}

fn straight_lane(id: &str, y: f64, ascending: bool) -> Lane {
    let n = 141; // x from -20 to 260 every 2 m
    let centerline = (0..n)
        .map(|i| {
            let x = if ascending {
                -20.0 + 2.0 * i as f64
            } else {
                260.0 - 2.0 * i as f64
            };
            LanePoint {
                x,
                y,
                heading: if ascending { 0.0 } else { PI },
            }
        })
        .collect();
    Lane {
        id: id.into(),
        centerline,
        successors: vec![],
    }
}

fn road() -> (LaneGraph, Vec<Vec<[f64; 2]>>) {
    let graph = LaneGraph {
        lanes: vec![
            straight_lane("ego_lane", 0.0, true),
            straight_lane("oncoming_lane", 4.0, false),
        ],
    };
    let drivable = vec![vec![[-30.0, -10.0], [270.0, -10.0], [270.0, 10.0], [-30.0, 10.0]]];
    (graph, drivable)
}

/// Constant-velocity states from `(x, y)` along `heading`.
fn drive(x: f64, y: f64, heading: f64, speed: f64) -> Vec<AgentState> {
    let heading = bivo_core::normalize_heading(heading);
    let (dx, dy) = (heading.cos(), heading.sin());
    (0..SCENE_STEPS)
        .map(|i| {
            let t = i as f64 * DT;
            AgentState {
                x: x + t * speed * dx,
                y: y + t * speed * dy,
                heading,
                speed,
                accel: 0.0,
            }
        })
        .collect()
}

/// States for an agent that waits at `(x, y0)` facing -y, then crosses at
/// `speed` so that it passes y = 0 at `t_meet` seconds.
fn wait_then_cross(x: f64, y0: f64, speed: f64, t_meet: f64) -> Vec<AgentState> {
    let t_go = t_meet - y0 / speed;
    (0..SCENE_STEPS)
        .map(|i| {
            let t = i as f64 * DT;
            let moving = t >= t_go;
            AgentState {
                x,
                y: if moving { y0 - speed * (t - t_go) } else { y0 },
                heading: -FRAC_PI_2,
                speed: if moving { speed } else { 0.0 },
                accel: 0.0,
            }
        })
        .collect()
}

fn parked(x: f64, y: f64) -> Vec<AgentState> {
    vec![
        AgentState {
            x,
            y,
            heading: 0.0,
            speed: 0.0,
            accel: 0.0,
        };
        SCENE_STEPS
    ]
}

fn agent(id: &str, class: AgentClass, length: f64, width: f64, states: Vec<AgentState>) -> Agent {
    Agent {
        id: id.into(),
        class,
        length,
        width,
        trajectory: Trajectory::new(id, 0, DT, states),
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Build one fully specified 30 s scene. Randomization draws happen in a
/// fixed order, so a given rng state always yields the same scene.
pub fn generate_scene(template: &ScenarioTemplate, rng: &mut impl Rng) -> Scene {
    let tag: u32 = rng.gen();
    let ego_speed = uniform(rng, template.ego_speed.0, template.ego_speed.1);
    let (lane_graph, drivable_polygons) = road();
    let ego = agent("ego", AgentClass::Vehicle, 4.0, 2.0, drive(0.0, 0.0, 0.0, ego_speed));

    let mut agents = Vec::new();
    match template.kind {
        TemplateKind::StraightEmpty => {}
        TemplateKind::OccludingTruckCrossing => {
            // A truck parked nose-to-road (a driveway, in effect) forms a
            // tall wall beside the ego lane. A cyclist waits in its shadow,
            // then darts across the ego lane, crossing y = 0 exactly when
            // the ego reaches its x. The wall hides the whole descent until
            // the cyclist is nearly at the lane edge, and the fast crossing
            // keeps the conflict window narrow: a slightly delayed passage
            // clears it, which gives a full-knowledge planner an out that a
            // blind one cannot see. The truck itself stands far enough from
            // the lane that it barely registers in the collision kernel.
            let t_meet = uniform(rng, 2.4, 3.2);
            let cross_speed = uniform(rng, 3.8, 4.8);
            let y_wait = uniform(rng, 7.6, 8.4);
            let x_c = ego_speed * t_meet;
            agents.push(agent(
                "truck",
                AgentClass::Vehicle,
                8.0,
                3.0,
                drive(x_c - 3.0, 6.0, -FRAC_PI_2, 0.0),
            ));
            if rng.gen::<f64>() < template.hidden_presence {
                agents.push(agent(
                    "crosser",
                    AgentClass::Cyclist,
                    2.0,
                    0.8,
                    wait_then_cross(x_c, y_wait, cross_speed, t_meet),
                ));
            }
        }
        TemplateKind::OncomingBehindOccluder => {
            // A stopped trailer on the left shoulder shadows the oncoming
            // lane; the oncoming car emerges from that shadow as it closes.
            let x_t = uniform(rng, 18.0, 26.0);
            let x_on = uniform(rng, 45.0, 60.0);
            let v_on = uniform(rng, 4.0, 8.0);
            agents.push(agent("trailer", AgentClass::Vehicle, 8.0, 2.0, parked(x_t, 1.8)));
            if rng.gen::<f64>() < template.hidden_presence {
                agents.push(agent(
                    "oncoming",
                    AgentClass::Vehicle,
                    4.5,
                    1.9,
                    drive(x_on, 4.0, PI, v_on),
                ));
            }
        }
        TemplateKind::ParkedRowPedestrian => {
            // Parallel-parked cars on the left shoulder; a pedestrian steps
            // out of a gap between two of them, timed like the cyclist.
            let n_cars = rng.gen_range(3..=5usize);
            let x_p = uniform(rng, 12.0, 18.0);
            let gap = rng.gen_range(0..n_cars - 1);
            let jitter = uniform(rng, -0.5, 0.5);
            for k in 0..n_cars {
                agents.push(agent(
                    &format!("parked_{k}"),
                    AgentClass::Vehicle,
                    4.5,
                    1.8,
                    parked(x_p + 7.0 * k as f64, 2.8),
                ));
            }
            if rng.gen::<f64>() < template.hidden_presence {
                let x_ped = x_p + 7.0 * gap as f64 + 3.5 + jitter;
                let y0 = 3.2;
                let walk_speed = y0 * ego_speed / x_ped;
                agents.push(agent(
                    "pedestrian",
                    AgentClass::Pedestrian,
                    0.5,
                    0.5,
                    drive(x_ped, y0, -FRAC_PI_2, walk_speed),
                ));
            }
        }
        TemplateKind::RandomTraffic => {
            // Visible traffic only: leads pull away slowly, oncoming flows by.
            let n = rng.gen_range(2..=5usize);
            for k in 0..n {
                let same_lane = rng.gen::<bool>();
                if same_lane {
                    let x0 = 30.0 + 30.0 * k as f64 + uniform(rng, 0.0, 15.0);
                    let v = uniform(rng, ego_speed - 0.5, ego_speed + 2.0).max(0.5);
                    agents.push(agent(
                        &format!("lead_{k}"),
                        AgentClass::Vehicle,
                        4.5,
                        1.9,
                        drive(x0, 0.0, 0.0, v),
                    ));
                } else {
                    // Far carriageway, y = 7.5: routine passes stay outside
                    // the collision kernel's reach.
                    let x0 = uniform(rng, 60.0, 220.0);
                    let v = uniform(rng, 4.0, 9.0);
                    agents.push(agent(
                        &format!("oncoming_{k}"),
                        AgentClass::Vehicle,
                        4.5,
                        1.9,
                        drive(x0, 7.5, PI, v),
                    ));
                }
            }
        }
    }

    let scene = Scene {
        id: format!("{}-{tag:08x}", template.kind.as_str()),
        lane_graph,
        drivable_polygons,
        agents,
        ego,
        duration_steps: SCENE_STEPS,
    };
    scene.validate().expect("template scenes satisfy scene invariants");
    scene
}
