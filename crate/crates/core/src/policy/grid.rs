//! Occupancy grid over the field and A* planning on it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{PlanarPoint, Pose2D};
use crate::sim::{Action, FieldState, SimConfig};

/// Fixed-point cost of an orthogonal step between adjacent cells.
pub const ORTHO_COST: u64 = 1_000_000_000;
/// Fixed-point cost of a diagonal step; rounded up from sqrt(2) so the
/// Euclidean heuristic never overestimates.
pub const DIAG_COST: u64 = 1_414_213_563;

/// Occupancy grid covering the square field.
#[derive(Debug, Clone)]
pub struct GridMap {
    pub resolution: f64,
    pub nx: usize,
    pub nz: usize,
    origin: (f64, f64),
    occupied: Vec<bool>,
}

impl GridMap {
    /// An all-free grid spanning `[-half_width, half_width]` per axis.
    pub fn empty(half_width: f64, resolution: f64) -> Self {
        let n = ((2.0 * half_width) / resolution).ceil().max(1.0) as usize;
        GridMap {
            resolution,
            nx: n,
            nz: n,
            origin: (-half_width, -half_width),
            occupied: vec![false; n * n],
        }
    }

    /// Grid for one robot's planning problem: mobile goals and the
    /// opposing robot are inflated by the robot half-extent so the path
    /// keeps the footprint clear.
    pub fn from_field(state: &FieldState, cfg: &SimConfig, robot: usize, resolution: f64) -> Self {
        let mut grid = GridMap::empty(cfg.half_width(), resolution);
        let inflation = cfg.robot_half_extent;
        for gz in 0..grid.nz {
            for gx in 0..grid.nx {
                let c = grid.cell_center(gx, gz);
                let mut blocked = false;
                for goal in &state.goals {
                    if c.distance_to(&goal.position) <= goal.radius + inflation {
                        blocked = true;
                        break;
                    }
                }
                if !blocked {
                    let opp = &state.robots[1 - robot].pose;
                    let reach = cfg.robot_half_extent + inflation;
                    if (c.x - opp.x).abs() <= reach && (c.z - opp.z).abs() <= reach {
                        blocked = true;
                    }
                }
                if blocked {
                    grid.set_occupied(gx, gz, true);
                }
            }
        }
        grid
    }

    #[inline]
    fn index(&self, gx: usize, gz: usize) -> usize {
        gz * self.nx + gx
    }

    pub fn set_occupied(&mut self, gx: usize, gz: usize, occupied: bool) {
        let i = self.index(gx, gz);
        self.occupied[i] = occupied;
    }

    pub fn is_free(&self, gx: usize, gz: usize) -> bool {
        !self.occupied[self.index(gx, gz)]
    }

    /// Cell containing a world point, or an error when it falls outside.
    pub fn world_to_cell(&self, p: PlanarPoint) -> Result<(usize, usize)> {
        let gx = ((p.x - self.origin.0) / self.resolution).floor();
        let gz = ((p.z - self.origin.1) / self.resolution).floor();
        if gx < 0.0 || gz < 0.0 || gx >= self.nx as f64 || gz >= self.nz as f64 {
            return Err(Error::NoPath(format!("point ({}, {}) outside the grid", p.x, p.z)));
        }
        Ok((gx as usize, gz as usize))
    }

    pub fn cell_center(&self, gx: usize, gz: usize) -> PlanarPoint {
        PlanarPoint::new(
            self.origin.0 + (gx as f64 + 0.5) * self.resolution,
            self.origin.1 + (gz as f64 + 0.5) * self.resolution,
        )
    }
}

/// Ordered waypoints from start to goal at grid resolution.
#[derive(Debug, Clone)]
pub struct Path {
    pub waypoints: Vec<PlanarPoint>,
    /// Path cost in fixed-point step units: [`ORTHO_COST`] per orthogonal
    /// move, [`DIAG_COST`] per diagonal, both per cell of resolution.
    pub cost_units: u64,
}

impl Path {
    /// Metric length of the waypoint polyline.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance_to(&w[1])).sum()
    }
}

#[derive(Debug)]
struct OpenNode {
    f: f64,
    h: f64,
    seq: u64,
    cell: usize,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl Ord for OpenNode {
    // BinaryHeap is a max-heap; reverse so the smallest f pops first,
    // ties broken by smaller heuristic, then insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(other.h.total_cmp(&self.h))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(i64, i64, u64); 8] = [
    (1, 0, ORTHO_COST),
    (-1, 0, ORTHO_COST),
    (0, 1, ORTHO_COST),
    (0, -1, ORTHO_COST),
    (1, 1, DIAG_COST),
    (1, -1, DIAG_COST),
    (-1, 1, DIAG_COST),
    (-1, -1, DIAG_COST),
];

/// Optimal 8-connected path under Euclidean step costs.
///
/// Diagonal moves are forbidden from cutting corners: both orthogonal
/// neighbors must be free. The heuristic is the straight-line distance,
/// which never exceeds the (rounded-up) step costs, so the result is
/// optimal; ties in f break toward the smaller heuristic, then insertion
/// order.
pub fn astar_plan(grid: &GridMap, start: PlanarPoint, goal: PlanarPoint) -> Result<Path> {
    let (sx, sz) = grid.world_to_cell(start)?;
    let (gx, gz) = grid.world_to_cell(goal)?;
    if !grid.is_free(sx, sz) {
        return Err(Error::NoPath("start cell is occupied".into()));
    }
    if !grid.is_free(gx, gz) {
        return Err(Error::NoPath("goal cell is occupied".into()));
    }
    if (sx, sz) == (gx, gz) {
        return Ok(Path { waypoints: vec![grid.cell_center(sx, sz)], cost_units: 0 });
    }

    let n = grid.nx * grid.nz;
    let mut g = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;

    let heuristic = |cell: usize| -> f64 {
        let cx = (cell % grid.nx) as f64;
        let cz = (cell / grid.nx) as f64;
        let dx = cx - gx as f64;
        let dz = cz - gz as f64;
        (dx * dx + dz * dz).sqrt() * ORTHO_COST as f64
    };

    let start_cell = sz * grid.nx + sx;
    let goal_cell = gz * grid.nx + gx;
    g[start_cell] = 0;
    open.push(OpenNode { f: heuristic(start_cell), h: heuristic(start_cell), seq, cell: start_cell });

    while let Some(node) = open.pop() {
        let cell = node.cell;
        if closed[cell] {
            continue;
        }
        closed[cell] = true;
        if cell == goal_cell {
            break;
        }
        let cx = (cell % grid.nx) as i64;
        let cz = (cell / grid.nx) as i64;
        for (dx, dz, step) in NEIGHBORS {
            let (nx, nz) = (cx + dx, cz + dz);
            if nx < 0 || nz < 0 || nx >= grid.nx as i64 || nz >= grid.nz as i64 {
                continue;
            }
            let (nxu, nzu) = (nx as usize, nz as usize);
            if !grid.is_free(nxu, nzu) {
                continue;
            }
            if dx != 0 && dz != 0 {
                // No corner cutting.
                if !grid.is_free(nxu, cz as usize) || !grid.is_free(cx as usize, nzu) {
                    continue;
                }
            }
            let next = nzu * grid.nx + nxu;
            let cand = g[cell] + step;
            if cand < g[next] {
                g[next] = cand;
                parent[next] = cell;
                seq += 1;
                let h = heuristic(next);
                open.push(OpenNode { f: cand as f64 + h, h, seq, cell: next });
            }
        }
    }

    if g[goal_cell] == u64::MAX {
        return Err(Error::NoPath("goal is unreachable".into()));
    }
    let mut cells = vec![goal_cell];
    let mut cur = goal_cell;
    while cur != start_cell {
        cur = parent[cur];
        cells.push(cur);
    }
    cells.reverse();
    Ok(Path {
        waypoints: cells
            .into_iter()
            .map(|c| grid.cell_center(c % grid.nx, c / grid.nx))
            .collect(),
        cost_units: g[goal_cell],
    })
}

/// Pursue the first waypoint beyond the lookahead distance; stop inside
/// the arrival tolerance of the terminal waypoint.
pub fn follow_path(path: &Path, pose: &Pose2D, lookahead: f64, turn_gain: f64) -> Action {
    const ARRIVAL_TOL: f64 = 0.05;
    let Some(last) = path.waypoints.last() else {
        return Action::ZERO;
    };
    let here = pose.position();
    if here.distance_to(last) <= ARRIVAL_TOL {
        return Action::ZERO;
    }
    let target = path
        .waypoints
        .iter()
        .find(|wp| here.distance_to(wp) > lookahead)
        .unwrap_or(last);
    let local = crate::geometry::ring_to_robot_frame(*target, pose);
    super::steer_toward(local, turn_gain)
}
