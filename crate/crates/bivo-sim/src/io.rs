//! Scene JSON and run-log serialization.
//!
//! Scene schema: `{id, lanes:[{id, centerline:[[x,y,heading]], successors:[]}],
//! drivable_polygons, agents:[{id, class, length, width, dt, start_step,
//! states:[[x,y,heading,speed,accel]]}], ego_id, duration_steps}`. The ego is
//! one of the `agents` entries, named by `ego_id`. Floats are written in
//! shortest round-trip form, so parse(serialize(scene)) is bit-exact.
//!
//! Run-logs are newline-delimited JSON, one [`EvalRecord`](crate::EvalRecord)
//! per line.

use bivo_core::{Agent, AgentClass, AgentState, Lane, LaneGraph, LanePoint, Scene, Trajectory};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::{EvalRecord, SimError};

#[derive(Serialize, Deserialize)]
struct SceneJson {
    id: String,
    lanes: Vec<LaneJson>,
    drivable_polygons: Vec<Vec<[f64; 2]>>,
    agents: Vec<AgentJson>,
    ego_id: String,
    duration_steps: usize,
}

#[derive(Serialize, Deserialize)]
struct LaneJson {
    id: String,
    centerline: Vec<[f64; 3]>,
    successors: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AgentJson {
    id: String,
    class: String,
    length: f64,
    width: f64,
    dt: f64,
    start_step: usize,
    states: Vec<[f64; 5]>,
}

fn agent_to_json(a: &Agent) -> AgentJson {
    AgentJson {
        id: a.id.clone(),
        class: a.class.as_str().into(),
        length: a.length,
        width: a.width,
        dt: a.trajectory.dt,
        start_step: a.trajectory.start_step,
        states: a
            .trajectory
            .states
            .iter()
            .map(|s| [s.x, s.y, s.heading, s.speed, s.accel])
            .collect(),
    }
}

fn agent_from_json(a: AgentJson) -> Result<Agent, SimError> {
    let class = AgentClass::parse(&a.class).map_err(|e| SimError::InvalidScene(e.to_string()))?;
    if a.states.is_empty() {
        return Err(SimError::InvalidScene(format!("agent {:?} has no states", a.id)));
    }
    // Literal field construction: states round-trip bit-exact, no
    // normalization on load.
    let states = a
        .states
        .into_iter()
        .map(|[x, y, heading, speed, accel]| AgentState {
            x,
            y,
            heading,
            speed,
            accel,
        })
        .collect();
    Ok(Agent {
        id: a.id.clone(),
        class,
        length: a.length,
        width: a.width,
        trajectory: Trajectory::new(a.id, a.start_step, a.dt, states),
    })
}

pub fn scene_to_json_string(scene: &Scene) -> Result<String, SimError> {
    let mut agents = Vec::with_capacity(scene.agents.len() + 1);
    agents.push(agent_to_json(&scene.ego));
    agents.extend(scene.agents.iter().map(agent_to_json));
    let json = SceneJson {
        id: scene.id.clone(),
        lanes: scene
            .lane_graph
            .lanes
            .iter()
            .map(|l| LaneJson {
                id: l.id.clone(),
                centerline: l.centerline.iter().map(|p| [p.x, p.y, p.heading]).collect(),
                successors: l.successors.clone(),
            })
            .collect(),
        drivable_polygons: scene.drivable_polygons.clone(),
        agents,
        ego_id: scene.ego.id.clone(),
        duration_steps: scene.duration_steps,
    };
    Ok(serde_json::to_string_pretty(&json)?)
}

pub fn scene_from_json_str(s: &str) -> Result<Scene, SimError> {
    let json: SceneJson = serde_json::from_str(s)?;
    let mut ego = None;
    let mut agents = Vec::new();
    for a in json.agents {
        if a.id == json.ego_id {
            if ego.is_some() {
                return Err(SimError::InvalidScene(format!("duplicate ego id {:?}", json.ego_id)));
            }
            ego = Some(agent_from_json(a)?);
        } else {
            agents.push(agent_from_json(a)?);
        }
    }
    let ego = ego.ok_or_else(|| {
        SimError::InvalidScene(format!("ego id {:?} not among agents", json.ego_id))
    })?;
    let scene = Scene {
        id: json.id,
        lane_graph: LaneGraph {
            lanes: json
                .lanes
                .into_iter()
                .map(|l| Lane {
                    id: l.id,
                    centerline: l
                        .centerline
                        .into_iter()
                        .map(|[x, y, heading]| LanePoint { x, y, heading })
                        .collect(),
                    successors: l.successors,
                })
                .collect(),
        },
        drivable_polygons: json.drivable_polygons,
        agents,
        ego,
        duration_steps: json.duration_steps,
    };
    scene.validate().map_err(|e| SimError::InvalidScene(e.to_string()))?;
    Ok(scene)
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<(), SimError> {
    std::fs::write(path, scene_to_json_string(scene)?)?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<Scene, SimError> {
    scene_from_json_str(&std::fs::read_to_string(path)?)
}

/// One compact JSON record per line.
pub fn write_run_log(path: &Path, records: &[EvalRecord]) -> Result<(), SimError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_run_log(path: &Path) -> Result<Vec<EvalRecord>, SimError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
