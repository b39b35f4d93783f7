//! Dempster-Shafer fusion of occupancy evidence.
//!
//! Each cell carries mass over {occupied}, {free}, and the full frame
//! {occupied, free}. Every source (the ego's own observation, each visible
//! agent's reconstruction) is discounted by a fixed base uncertainty before
//! Dempster's rule combines them, so no single sensor can saturate the
//! belief. Readout is the pignistic probability: committed occupied mass
//! plus half the unknown mass.

use bivo_core::{OccupancyGrid, FREE, OCCLUDED};

/// Mass reserved for the full frame when a source does report on a cell.
pub const DISCOUNT_U0: f64 = 0.2;

/// Basic belief assignment over {occupied}, {free}, {occupied, free}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefCell {
    pub occupied: f64,
    pub free: f64,
    pub unknown: f64,
}

impl BeliefCell {
    /// Fully uncommitted mass.
    pub fn vacuous() -> BeliefCell {
        BeliefCell {
            occupied: 0.0,
            free: 0.0,
            unknown: 1.0,
        }
    }
}

/// An occupancy probability as a discounted belief. Unobserved cells carry
/// no committed mass at all.
pub fn to_belief(p_occupied: f64, observed: bool) -> BeliefCell {
    debug_assert!((0.0..=1.0).contains(&p_occupied));
    if !observed {
        return BeliefCell::vacuous();
    }
    BeliefCell {
        occupied: (1.0 - DISCOUNT_U0) * p_occupied,
        free: (1.0 - DISCOUNT_U0) * (1.0 - p_occupied),
        unknown: DISCOUNT_U0,
    }
}

/// Dempster's rule. The boolean is true when the sources fully conflict
/// (normalizer at or below 1e-12), in which case the result is vacuous.
pub fn dempster_combine(a: BeliefCell, b: BeliefCell) -> (BeliefCell, bool) {
    let conflict = a.occupied * b.free + a.free * b.occupied;
    let norm = 1.0 - conflict;
    if norm <= 1e-12 {
        return (BeliefCell::vacuous(), true);
    }
    let occupied = (a.occupied * b.occupied + a.occupied * b.unknown + a.unknown * b.occupied) / norm;
    let free = (a.free * b.free + a.free * b.unknown + a.unknown * b.free) / norm;
    let unknown = (a.unknown * b.unknown) / norm;
    (
        BeliefCell {
            occupied,
            free,
            unknown,
        },
        false,
    )
}

/// Pignistic occupancy probability: committed mass plus half the unknown.
pub fn pignistic(cell: BeliefCell) -> f64 {
    cell.occupied + 0.5 * cell.unknown
}

/// Fuse per-agent reconstructions into the ego's observed grid.
///
/// The ego observation contributes evidence on every cell it did not mark
/// occluded. Each source grid contributes on the ego cells whose centers
/// fall inside it. Returns the fused grid (pignistic values) and the number
/// of fully conflicting cell combinations encountered.
pub fn fuse_to_ego(ego_observed: &OccupancyGrid, sources: &[OccupancyGrid]) -> (OccupancyGrid, usize) {
    let mut fused = ego_observed.clone();
    let mut conflicts = 0usize;
    for r in 0..fused.height {
        for c in 0..fused.width {
            let v = ego_observed.get(r, c);
            let mut belief = to_belief(if v == OCCLUDED { 0.0 } else { v }, v != OCCLUDED);
            let (wx, wy) = ego_observed.cell_center_world(r, c);
            for src in sources {
                let Some((sr, sc)) = src.cell_of_world(wx, wy) else {
                    continue;
                };
                let p = src.get(sr, sc).clamp(FREE, 1.0);
                let (combined, clash) = dempster_combine(belief, to_belief(p, true));
                belief = combined;
                conflicts += clash as usize;
            }
            fused.set(r, c, pignistic(belief));
        }
    }
    (fused, conflicts)
}

/// The observed grid, its fusion with `sources` reconstructions, and fusion
/// diagnostics for one scene step.
#[derive(Debug, Clone)]
pub struct FusedScene {
    pub observed: OccupancyGrid,
    pub fused: OccupancyGrid,
    /// Number of agent reconstructions that contributed.
    pub sources: usize,
    /// Fully conflicting combinations hit during fusion.
    pub conflicts: usize,
}
