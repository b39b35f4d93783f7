//! Viewer-centered occupancy grids.
//!
//! A grid is anchored at a viewer pose and axis-aligned with the viewer
//! heading: local +x is "ahead", +y is "left". Cell `(r, c)` covers the
//! half-open square
//!
//! ```text
//! x in [(c - w/2) * res, (c + 1 - w/2) * res)
//! y in [(r - h/2) * res, (r + 1 - h/2) * res)
//! ```
//!
//! so the viewer sits on the shared corner of the four central cells and
//! cell boundaries fall on integer multiples of the resolution. Values are
//! occupancy probabilities; observed grids use exactly {0.0, 0.5, 1.0} for
//! free / occluded / occupied.

use crate::world::{point_from_frame, point_to_frame, AgentState};
use crate::CoreError;

pub const FREE: f64 = 0.0;
pub const OCCLUDED: f64 = 0.5;
pub const OCCUPIED: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    /// Pose of the viewer; the grid frame is this pose's frame.
    pub center_pose: AgentState,
    /// Meters per cell, > 0.
    pub resolution: f64,
    pub height: usize,
    pub width: usize,
    /// Row-major, `height * width` values.
    pub values: Vec<f64>,
}

impl OccupancyGrid {
    pub fn filled(center_pose: AgentState, resolution: f64, height: usize, width: usize, value: f64) -> Self {
        assert!(resolution > 0.0 && height > 0 && width > 0);
        OccupancyGrid {
            center_pose,
            resolution,
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let i = self.index(row, col);
        self.values[i] = value;
    }

    /// Cell containing a point given in the grid's own frame, or None if it
    /// falls outside. Points exactly on the far edge are outside.
    pub fn cell_of_local(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = (x / self.resolution).floor() + (self.width / 2) as f64;
        let r = (y / self.resolution).floor() + (self.height / 2) as f64;
        if r < 0.0 || c < 0.0 || r >= self.height as f64 || c >= self.width as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    /// Cell containing a world-frame point.
    pub fn cell_of_world(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (lx, ly) = point_to_frame(x, y, &self.center_pose);
        self.cell_of_local(lx, ly)
    }

    /// Center of a cell in the grid's own frame.
    pub fn cell_center_local(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5 - (self.width / 2) as f64) * self.resolution,
            (row as f64 + 0.5 - (self.height / 2) as f64) * self.resolution,
        )
    }

    /// Center of a cell in world coordinates.
    pub fn cell_center_world(&self, row: usize, col: usize) -> (f64, f64) {
        let (x, y) = self.cell_center_local(row, col);
        point_from_frame(x, y, &self.center_pose)
    }

    /// The viewer's own cell (the one whose lower-left corner is the viewer).
    pub fn viewer_cell(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }

    /// Mean-pool by an integer factor; dimensions must divide evenly.
    pub fn downsample_mean(&self, factor: usize) -> Result<OccupancyGrid, CoreError> {
        if factor == 0 || self.height % factor != 0 || self.width % factor != 0 {
            return Err(CoreError::GridShape(format!(
                "cannot downsample {}x{} by {factor}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let mut values = vec![0.0; h * w];
        let norm = 1.0 / (factor * factor) as f64;
        for r in 0..self.height {
            for c in 0..self.width {
                values[(r / factor) * w + c / factor] += self.values[r * self.width + c];
            }
        }
        for v in &mut values {
            *v *= norm;
        }
        Ok(OccupancyGrid {
            center_pose: self.center_pose,
            resolution: self.resolution * factor as f64,
            height: h,
            width: w,
            values,
        })
    }

    /// Render to a binary portable graymap (P5). Row 0 is emitted last so
    /// +y points up in the image; free maps to 0, occluded to 128,
    /// occupied to 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for r in (0..self.height).rev() {
            for c in 0..self.width {
                let v = self.get(r, c).clamp(0.0, 1.0);
                out.push((v * 255.0).round() as u8);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(x: f64, y: f64, heading: f64) -> AgentState {
        AgentState::new(x, y, heading, 0.0, 0.0)
    }

    #[test]
    fn cell_lookup_round_trips_cell_centers() {
        let g = OccupancyGrid::filled(pose(0.0, 0.0, 0.0), 1.0, 6, 4, FREE);
        for r in 0..6 {
            for c in 0..4 {
                let (x, y) = g.cell_center_local(r, c);
                assert_eq!(g.cell_of_local(x, y), Some((r, c)));
            }
        }
    }

    #[test]
    fn viewer_sits_on_central_corner() {
        let g = OccupancyGrid::filled(pose(0.0, 0.0, 0.0), 1.0, 4, 4, FREE);
        // Just inside each of the four cells around the origin.
        assert_eq!(g.cell_of_local(0.01, 0.01), Some((2, 2)));
        assert_eq!(g.cell_of_local(-0.01, 0.01), Some((2, 1)));
        assert_eq!(g.cell_of_local(0.01, -0.01), Some((1, 2)));
        assert_eq!(g.cell_of_local(-0.01, -0.01), Some((1, 1)));
        assert_eq!(g.viewer_cell(), (2, 2));
    }

    #[test]
    fn world_lookup_respects_viewer_heading() {
        // Viewer at (10, 0) facing +y: world (10, 2) is 2 m ahead, local (2, 0).
        let g = OccupancyGrid::filled(pose(10.0, 0.0, std::f64::consts::FRAC_PI_2), 1.0, 8, 8, FREE);
        assert_eq!(g.cell_of_world(10.0 + 0.01, 2.5), Some((3, 6)));
    }

    #[test]
    fn out_of_bounds_is_none() {
        let g = OccupancyGrid::filled(pose(0.0, 0.0, 0.0), 1.0, 4, 4, FREE);
        assert_eq!(g.cell_of_local(2.0, 0.0), None); // far edge is exclusive
        assert_eq!(g.cell_of_local(-2.01, 0.0), None);
        assert_eq!(g.cell_of_local(0.0, 7.3), None);
    }

    #[test]
    fn downsample_averages_blocks() {
        let mut g = OccupancyGrid::filled(pose(0.0, 0.0, 0.0), 1.0, 4, 4, FREE);
        g.set(0, 0, 1.0);
        g.set(0, 1, 1.0);
        g.set(1, 0, 1.0);
        g.set(1, 1, 0.0);
        let d = g.downsample_mean(2).unwrap();
        assert_eq!(d.height, 2);
        assert_eq!(d.width, 2);
        assert!((d.get(0, 0) - 0.75).abs() < 1e-12);
        assert_eq!(d.get(1, 1), 0.0);
        assert!(g.downsample_mean(3).is_err());
    }

    #[test]
    fn pgm_uses_three_levels() {
        let mut g = OccupancyGrid::filled(pose(0.0, 0.0, 0.0), 1.0, 2, 2, FREE);
        g.set(0, 0, OCCUPIED);
        g.set(0, 1, OCCLUDED);
        let bytes = g.to_pgm();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        // Row 1 (all free) renders first, then row 0.
        assert_eq!(&bytes[header.len()..], &[0, 0, 255, 128]);
    }
}
