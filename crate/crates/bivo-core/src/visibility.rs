//! Line-of-sight visibility on binary occupancy grids.
//!
//! Rays run from the viewer cell center to every boundary cell center. Each
//! ray is discretized at `N = ceil(10 * L)` equal substeps (L = ray length in
//! cells, so substeps are at most 0.1 cells) and the sample points are binned
//! into cells; consecutive duplicates collapse. Cells along the chain up to
//! and including the first occupied cell are visible. The viewer cell is
//! always visible and never blocks, even when occupied.
//!
//! Sample positions are rationals with denominator `2N`, so binning is exact
//! integer arithmetic: no floating-point error can move a sample across a
//! cell boundary.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::grid::OccupancyGrid;

/// Smallest non-negative integer n with n^2 >= v.
fn ceil_isqrt(v: i64) -> i64 {
    debug_assert!(v >= 0);
    let s = v.isqrt();
    if s * s >= v {
        s
    } else {
        s + 1
    }
}

/// Cells traversed by the ray between two cell centers, endpoints included,
/// consecutive duplicates removed. Grid bounds are not consulted; callers
/// pass in-grid endpoints and the ray stays inside the hull of the two cells.
pub fn ray_cells(from: (usize, usize), to: (usize, usize)) -> Vec<(usize, usize)> {
    let (ar, ac) = (from.0 as i64, from.1 as i64);
    let (br, bc) = (to.0 as i64, to.1 as i64);
    let dx = bc - ac;
    let dy = br - ar;
    let n = ceil_isqrt(100 * (dx * dx + dy * dy));
    let mut chain = Vec::with_capacity((dx.abs() + dy.abs()) as usize + 2);
    chain.push(from);
    if n == 0 {
        return chain;
    }
    let d = 2 * n;
    // Sample m has x = ((2*ac + 1)*n + 2*m*dx) / (2n);|2*dx| <= d/10, so a
    // single step crosses at most one cell boundary.
    let (step_x, step_y) = (2 * dx, 2 * dy);
    let mut x_num = (2 * ac + 1) * n;
    let mut y_num = (2 * ar + 1) * n;
    let (mut col, mut row) = (ac, ar);
    let (mut col_lo, mut col_hi) = (col * d, (col + 1) * d);
    let (mut row_lo, mut row_hi) = (row * d, (row + 1) * d);
    for _ in 0..n {
        x_num += step_x;
        if x_num >= col_hi {
            col += 1;
            col_lo = col_hi;
            col_hi += d;
        } else if x_num < col_lo {
            col -= 1;
            col_hi = col_lo;
            col_lo -= d;
        }
        y_num += step_y;
        if y_num >= row_hi {
            row += 1;
            row_lo = row_hi;
            row_hi += d;
        } else if y_num < row_lo {
            row -= 1;
            row_hi = row_lo;
            row_lo -= d;
        }
        let cell = (row as usize, col as usize);
        if *chain.last().unwrap() != cell {
            chain.push(cell);
        }
    }
    chain
}

/// Precomputed ray chains from one viewer cell to every boundary cell of an
/// `height x width` grid. Chains are flattened into `cells` (row * width +
/// col) with per-ray extents in `offsets`.
#[derive(Debug)]
pub struct RayTable {
    pub height: usize,
    pub width: usize,
    pub viewer: (usize, usize),
    offsets: Vec<u32>,
    cells: Vec<u32>,
}

impl RayTable {
    pub fn build(height: usize, width: usize, viewer: (usize, usize)) -> RayTable {
        assert!(height > 0 && width > 0);
        assert!(viewer.0 < height && viewer.1 < width);
        let mut offsets = vec![0u32];
        let mut cells = Vec::new();
        let mut push_ray = |to: (usize, usize)| {
            for (r, c) in ray_cells(viewer, to) {
                cells.push((r * width + c) as u32);
            }
            offsets.push(cells.len() as u32);
        };
        for c in 0..width {
            push_ray((0, c));
        }
        if height > 1 {
            for c in 0..width {
                push_ray((height - 1, c));
            }
        }
        for r in 1..height.saturating_sub(1) {
            push_ray((r, 0));
            if width > 1 {
                push_ray((r, width - 1));
            }
        }
        RayTable {
            height,
            width,
            viewer,
            offsets,
            cells,
        }
    }

    pub fn rays(&self) -> impl Iterator<Item = &[u32]> {
        self.offsets
            .windows(2)
            .map(|w| &self.cells[w[0] as usize..w[1] as usize])
    }
}

fn table_cache() -> &'static Mutex<HashMap<(usize, usize, usize, usize), Arc<RayTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize, usize), Arc<RayTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared ray table, built once per (shape, viewer) combination.
pub fn shared_ray_table(height: usize, width: usize, viewer: (usize, usize)) -> Arc<RayTable> {
    let key = (height, width, viewer.0, viewer.1);
    let mut cache = table_cache().lock().unwrap();
    cache
        .entry(key)
        .or_insert_with(|| Arc::new(RayTable::build(height, width, viewer)))
        .clone()
}

/// Visibility of every cell of a binary occupancy field (`true` = occupied),
/// row-major, from the given viewer cell.
pub fn visibility_from_cells(
    occupied: &[bool],
    height: usize,
    width: usize,
    viewer: (usize, usize),
) -> Vec<bool> {
    assert_eq!(occupied.len(), height * width);
    let table = shared_ray_table(height, width, viewer);
    let viewer_idx = (viewer.0 * width + viewer.1) as u32;
    let mut visible = vec![false; height * width];
    visible[viewer_idx as usize] = true;
    for ray in table.rays() {
        for &cell in ray {
            visible[cell as usize] = true;
            if cell != viewer_idx && occupied[cell as usize] {
                break;
            }
        }
    }
    visible
}

/// Visibility mask for a grid whose values are occupancy probabilities;
/// cells with value > 0.5 block. Viewer defaults to the grid's own
/// viewer cell.
pub fn visibility_mask(grid: &OccupancyGrid, viewer: Option<(usize, usize)>) -> Vec<bool> {
    let occupied: Vec<bool> = grid.values.iter().map(|&v| v > 0.5).collect();
    visibility_from_cells(
        &occupied,
        grid.height,
        grid.width,
        viewer.unwrap_or_else(|| grid.viewer_cell()),
    )
}
