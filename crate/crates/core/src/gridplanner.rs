//! Shortest paths over the free voxels of a grid.
//!
//! [`plan`] is a plain A* search. [`CostToGo`] runs one Dijkstra sweep from a
//! goal and then answers any number of start queries by steepest descent,
//! which is what the mission loop uses since every agent replans towards a
//! fixed goal many times per mission.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::voxelmap::{Point, VoxelGrid, VoxelIndex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no path between start and goal")]
    NoPath,
    #[error("{which} ({x:.3}, {y:.3}, {z:.3}) is occupied or outside the map")]
    BlockedEndpoint { which: &'static str, x: f64, y: f64, z: f64 },
}

fn blocked(which: &'static str, p: &Point) -> PlanError {
    PlanError::BlockedEndpoint { which, x: p.x, y: p.y, z: p.z }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPath {
    pub points: Vec<Point>,
    pub cost: f64,
}

impl GridPath {
    pub fn from_points(points: Vec<Point>) -> Self {
        let cost = path_length(&points);
        Self { points, cost }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Option<&Point> {
        self.points.first()
    }

    pub fn last(&self) -> Option<&Point> {
        self.points.last()
    }
}

pub fn path_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

fn edge_cost(res: f64, off: [i64; 3]) -> f64 {
    match off[0].abs() + off[1].abs() + off[2].abs() {
        1 => res,
        2 => res * std::f64::consts::SQRT_2,
        _ => res * 3f64.sqrt(),
    }
}

/// A diagonal step is allowed only when every voxel of the unit block it
/// crosses is free, so the straight segment between the two centres never
/// clips an occupied corner.
pub fn step_allowed(grid: &VoxelGrid, from: VoxelIndex, off: [i64; 3]) -> bool {
    let nz: Vec<usize> = (0..3).filter(|&a| off[a] != 0).collect();
    if nz.len() <= 1 {
        return true;
    }
    for mask in 1..(1u32 << nz.len()) - 1 {
        let mut v = [from[0] as i64, from[1] as i64, from[2] as i64];
        for (bit, &a) in nz.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                v[a] += off[a];
            }
        }
        if grid.get([v[0] as usize, v[1] as usize, v[2] as usize]) {
            return false;
        }
    }
    true
}

fn free_voxel(grid: &VoxelGrid, p: &Point, which: &'static str) -> Result<VoxelIndex, PlanError> {
    match grid.voxel_of(p) {
        Some(idx) if !grid.get(idx) => Ok(idx),
        _ => Err(blocked(which, p)),
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    h: f64,
    lin: usize,
}

impl Eq for Open {}

impl Ord for Open {
    // Reversed so the max-heap pops the lowest f, then lowest h, then lowest index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.lin.cmp(&self.lin))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// 26-connected A* from the voxel containing `start` to the voxel containing
/// `goal`, with Euclidean edge costs and a straight-line heuristic. The path
/// runs between voxel centres; diagonal steps obey [`step_allowed`].
pub fn plan(grid: &VoxelGrid, start: &Point, goal: &Point) -> Result<GridPath, PlanError> {
    let s = free_voxel(grid, start, "start")?;
    let g = free_voxel(grid, goal, "goal")?;
    let res = grid.resolution();
    let goal_c = grid.center(g);
    let s_lin = grid.linear(s);
    let g_lin = grid.linear(g);
    let n = grid.len();
    let mut cost = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    cost[s_lin] = 0.0;
    let h0 = (grid.center(s) - goal_c).norm();
    open.push(Open { f: h0, h: h0, lin: s_lin });
    while let Some(Open { lin, .. }) = open.pop() {
        if closed[lin] {
            continue;
        }
        if lin == g_lin {
            return Ok(reconstruct(grid, &parent, s_lin, g_lin));
        }
        closed[lin] = true;
        let idx = grid.unlinear(lin);
        for (nb, off) in grid.neighbors26(idx) {
            let nl = grid.linear(nb);
            if closed[nl] || grid.get_linear(nl) || !step_allowed(grid, idx, off) {
                continue;
            }
            let c = cost[lin] + edge_cost(res, off);
            if c < cost[nl] {
                cost[nl] = c;
                parent[nl] = lin;
                let h = (grid.center(nb) - goal_c).norm();
                open.push(Open { f: c + h, h, lin: nl });
            }
        }
    }
    Err(PlanError::NoPath)
}

fn reconstruct(grid: &VoxelGrid, parent: &[usize], start: usize, goal: usize) -> GridPath {
    let mut rev = vec![goal];
    let mut cur = goal;
    while cur != start {
        cur = parent[cur];
        rev.push(cur);
    }
    GridPath::from_points(rev.iter().rev().map(|&l| grid.center_linear(l)).collect())
}

/// Greedily drops interior points: from each kept anchor, the path jumps to
/// the furthest following point that is still visible from the anchor.
pub fn shortcut(path: &GridPath, grid: &VoxelGrid, agent_radius: f64) -> GridPath {
    let pts = &path.points;
    if pts.len() <= 2 {
        return path.clone();
    }
    let visible = |a: &Point, b: &Point| grid.is_visible(a, b, agent_radius).unwrap_or(false);
    let mut out = vec![pts[0]];
    let mut anchor = 0;
    while anchor + 1 < pts.len() {
        let mut next = anchor + 1;
        while next + 1 < pts.len() && visible(&pts[anchor], &pts[next + 1]) {
            next += 1;
        }
        out.push(pts[next]);
        anchor = next;
    }
    GridPath::from_points(out)
}

/// Exact shortest-path distances from every free voxel to one goal voxel.
#[derive(Clone, Debug)]
pub struct CostToGo {
    goal: usize,
    dist: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    d: f64,
    lin: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.d.total_cmp(&self.d).then_with(|| other.lin.cmp(&self.lin))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl CostToGo {
    pub fn new(grid: &VoxelGrid, goal: &Point) -> Result<Self, PlanError> {
        let g = free_voxel(grid, goal, "goal")?;
        let res = grid.resolution();
        let goal = grid.linear(g);
        let mut dist = vec![f64::INFINITY; grid.len()];
        let mut heap = BinaryHeap::new();
        dist[goal] = 0.0;
        heap.push(Frontier { d: 0.0, lin: goal });
        while let Some(Frontier { d, lin }) = heap.pop() {
            if d > dist[lin] {
                continue;
            }
            let idx = grid.unlinear(lin);
            for (nb, off) in grid.neighbors26(idx) {
                let nl = grid.linear(nb);
                if grid.get_linear(nl) || !step_allowed(grid, idx, off) {
                    continue;
                }
                let c = d + edge_cost(res, off);
                if c < dist[nl] {
                    dist[nl] = c;
                    heap.push(Frontier { d: c, lin: nl });
                }
            }
        }
        Ok(Self { goal, dist })
    }

    /// Shortest-path distance from the voxel containing `p`, if reachable.
    pub fn distance(&self, grid: &VoxelGrid, p: &Point) -> Option<f64> {
        let idx = grid.voxel_of(p)?;
        let d = self.dist[grid.linear(idx)];
        d.is_finite().then_some(d)
    }

    pub fn is_reachable(&self, grid: &VoxelGrid, p: &Point) -> bool {
        self.distance(grid, p).is_some()
    }

    /// Shortest path from the voxel containing `start` to the goal, by
    /// following the neighbour that minimises edge cost plus remaining
    /// distance (lowest linear index on ties).
    pub fn path_from(&self, grid: &VoxelGrid, start: &Point) -> Result<GridPath, PlanError> {
        let s = free_voxel(grid, start, "start")?;
        let res = grid.resolution();
        let mut cur = grid.linear(s);
        if !self.dist[cur].is_finite() {
            return Err(PlanError::NoPath);
        }
        let mut pts = vec![grid.center_linear(cur)];
        while cur != self.goal {
            let mut best = (f64::INFINITY, usize::MAX);
            let idx = grid.unlinear(cur);
            for (nb, off) in grid.neighbors26(idx) {
                let nl = grid.linear(nb);
                if grid.get_linear(nl) || !step_allowed(grid, idx, off) {
                    continue;
                }
                let c = edge_cost(res, off) + self.dist[nl];
                if c < best.0 || (c == best.0 && nl < best.1) {
                    best = (c, nl);
                }
            }
            // Remaining distance strictly decreases along the descent, so this terminates.
            cur = best.1;
            pts.push(grid.center_linear(cur));
        }
        Ok(GridPath::from_points(pts))
    }
}

/// Labels the components of free voxels under the same moves as [`plan`]. Occupied voxels get
/// `u32::MAX`; free components are numbered from 0 in linear-index order.
pub fn connected_components(grid: &VoxelGrid) -> Vec<u32> {
    let mut label = vec![u32::MAX; grid.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for seed in 0..grid.len() {
        if grid.get_linear(seed) || label[seed] != u32::MAX {
            continue;
        }
        label[seed] = next;
        stack.push(seed);
        while let Some(lin) = stack.pop() {
            let idx = grid.unlinear(lin);
            for (nb, off) in grid.neighbors26(idx) {
                let nl = grid.linear(nb);
                if !grid.get_linear(nl) && label[nl] == u32::MAX && step_allowed(grid, idx, off) {
                    label[nl] = next;
                    stack.push(nl);
                }
            }
        }
        next += 1;
    }
    label
}
