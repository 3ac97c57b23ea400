//! Reference implementations and random instance generators shared by the
//! integration tests. Nothing here calls into the code it checks except to
//! build inputs.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxswarm::am::polar::{constraint_rhs, direction, distance_bounds, family_vectors};
use voxswarm::am::{init_polar, AgentSnapshot, NeighborTrajectory, Planner, PlannerConfig, PolarVars, ProblemInstance, WarmStart};
use voxswarm::gridplanner::step_allowed;
use voxswarm::guidance::GuidanceResult;
use voxswarm::mapgen::{self, ObstacleShape};
use voxswarm::sim::World;
use voxswarm::voxelmap::{Point, VoxelGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut ChaCha8Rng) -> Point {
    loop {
        let v = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random box map with chunky obstacles.
pub fn box_map(seed: u64, size: [f64; 3], count: usize) -> VoxelGrid {
    let shape = ObstacleShape { min_side: 0.3, max_side: 1.0, pillar_fraction: 0.0 };
    mapgen::random_boxes(size, 0.1, count, seed, &shape).unwrap().0
}

/// Uniform point inside the grid bounds.
pub fn point_in(rng: &mut ChaCha8Rng, grid: &VoxelGrid) -> Point {
    let b = grid.bounds();
    Point::new(
        rng.gen_range(b.min.x..b.max.x),
        rng.gen_range(b.min.y..b.max.y),
        rng.gen_range(b.min.z..b.max.z),
    )
}

/// Rejection-sampled point whose `radius` sphere is clear of obstacles.
pub fn free_point(rng: &mut ChaCha8Rng, grid: &VoxelGrid, radius: f64) -> Point {
    loop {
        let p = point_in(rng, grid);
        if grid.is_free(&p) && sphere_clear(grid, &p, radius) {
            return p;
        }
    }
}

/// Brute-force test that no occupied voxel centre lies within
/// `radius + resolution / 2` of the centre of the voxel holding `p`.
pub fn sphere_clear(grid: &VoxelGrid, p: &Point, radius: f64) -> bool {
    let Some(idx) = grid.voxel_of(p) else {
        return false;
    };
    let c = grid.center(idx);
    let reach = radius + 0.5 * grid.resolution() + 1e-9 * grid.resolution();
    grid.occupied_voxels().all(|o| (grid.center(o) - c).norm() > reach)
}

/// Marches along a ray in steps of `step` and reports the first distance at
/// which the point leaves the bounds or enters an occupied voxel.
pub fn march(grid: &VoxelGrid, origin: &Point, dir: &Point, max_range: f64, step: f64) -> (bool, f64) {
    let mut t = 0.0;
    while t <= max_range {
        let p = origin + dir * t;
        match grid.voxel_of(&p) {
            Some(idx) if !grid.get(idx) => {}
            _ => return (true, t),
        }
        t += step;
    }
    (false, max_range)
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over the free voxels with 26-connectivity and centre-to-centre
/// Euclidean edge costs, using the planner's diagonal-step rule.
pub fn dijkstra(grid: &VoxelGrid, start: &Point, goal: &Point) -> Option<f64> {
    let s = grid.voxel_of(start)?;
    let g = grid.voxel_of(goal)?;
    if grid.get(s) || grid.get(g) {
        return None;
    }
    let dims = grid.dims();
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    let s_lin = grid.linear(s);
    dist[s_lin] = 0.0;
    heap.push(Item(0.0, s_lin));
    while let Some(Item(d, lin)) = heap.pop() {
        if d > dist[lin] {
            continue;
        }
        let v = grid.unlinear(lin);
        if v == g {
            return Some(d);
        }
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let n = [v[0] as i64 + dx, v[1] as i64 + dy, v[2] as i64 + dz];
                    if (0..3).any(|a| n[a] < 0 || n[a] >= dims[a] as i64) {
                        continue;
                    }
                    let n = [n[0] as usize, n[1] as usize, n[2] as usize];
                    if grid.get(n) || !step_allowed(grid, v, [dx, dy, dz]) {
                        continue;
                    }
                    let nd = d + (grid.center(n) - grid.center(v)).norm();
                    let nl = grid.linear(n);
                    if nd < dist[nl] {
                        dist[nl] = nd;
                        heap.push(Item(nd, nl));
                    }
                }
            }
        }
    }
    None
}

/// de Casteljau evaluation of one coordinate of a Bézier curve at `tau`.
pub fn de_casteljau(ctrl: &[f64], tau: f64) -> f64 {
    let mut b = ctrl.to_vec();
    for r in 1..b.len() {
        for i in 0..b.len() - r {
            b[i] = (1.0 - tau) * b[i] + tau * b[i + 1];
        }
    }
    b[0]
}

/// Planner and planning grid for optimizer checks: a cluttered 6 × 6 × 2.5 m
/// room.
pub struct Bench {
    pub planner: Planner,
    pub grid: VoxelGrid,
}

impl Bench {
    pub fn new(seed: u64) -> Self {
        let cfg = PlannerConfig::default();
        let raw = box_map(seed, [6.0, 6.0, 2.5], 6);
        let grid = World::new(raw, &cfg).planning;
        Self { planner: Planner::new(cfg).unwrap(), grid }
    }

    /// Random agent state, goal and up to two neighbours moving in straight lines.
    pub fn problem(&self, rng: &mut ChaCha8Rng) -> ProblemInstance<'_> {
        let p = free_point(rng, &self.grid, 0.0);
        let goal = loop {
            let g = p + unit_vector(rng) * rng.gen_range(0.3..3.0);
            if self.grid.is_free(&g) {
                break g;
            }
        };
        let snap = AgentSnapshot {
            position: p,
            velocity: unit_vector(rng) * rng.gen_range(0.0..0.9),
            acceleration: unit_vector(rng) * rng.gen_range(0.0..2.0),
            final_goal: goal,
        };
        let guidance = GuidanceResult { attractor: p, intermediate_goal: goal, attractor_index: None, goal_index: None };
        let times = self.planner.basis.sample_times();
        let neighbors = (0..rng.gen_range(0..=2))
            .map(|j| {
                let start = p + unit_vector(rng) * rng.gen_range(0.3..1.5);
                let vel = unit_vector(rng) * rng.gen_range(0.0..1.0);
                NeighborTrajectory { agent_id: j + 1, positions: times.iter().map(|t| start + vel * *t).collect() }
            })
            .collect();
        self.planner.build_problem(&snap, &guidance, neighbors).unwrap()
    }
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Cold-start polar variables.
pub fn cold_polar(problem: &ProblemInstance<'_>, grid: &VoxelGrid) -> PolarVars {
    init_polar(problem, grid, WarmStart::Cold).unwrap()
}

/// Objective of one polar sample: `‖v − d ω(α, β)‖²`.
pub fn sample_objective(v: &Point, d: f64, alpha: f64, beta: f64) -> f64 {
    (v - direction(alpha, beta) * d).norm_squared()
}

/// Smallest sample objective over a regular `(α, β)` grid with spacing `step`.
pub fn angle_grid_min(v: &Point, d: f64, step: f64) -> f64 {
    let na = (2.0 * PI / step).ceil() as usize;
    let nb = (PI / step).ceil() as usize;
    let mut best = f64::INFINITY;
    for i in 0..=na {
        let a = -PI + (i as f64 * step).min(2.0 * PI);
        for j in 0..=nb {
            let b = (j as f64 * step).min(PI);
            best = best.min(sample_objective(v, d, a, b));
        }
    }
    best
}

/// Grid search for `argmin_{d ∈ [lo, hi]} ‖v − d ω‖²` at spacing `step`,
/// followed by successively finer grids around the incumbent.
pub fn distance_grid_search(v: &Point, omega: &Point, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let f = |d: f64| (v - omega * d).norm_squared();
    let mut best = (lo, f(lo));
    let n = ((hi - lo) / step).ceil() as usize;
    for i in 0..=n {
        let d = (lo + i as f64 * step).min(hi);
        let val = f(d);
        if val < best.1 {
            best = (d, val);
        }
    }
    let mut h = step;
    for _ in 0..4 {
        let (a, b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
        let m = 200;
        for i in 0..=m {
            let d = a + (b - a) * i as f64 / m as f64;
            let val = f(d);
            if val < best.1 {
                best = (d, val);
            }
        }
        h /= 100.0;
    }
    best
}

/// Stationarity residual of the coefficient update: the gradient of the
/// relaxed objective projected off the initial-condition rows, together with
/// the violation of those rows. Built from the explicit stacked matrices.
pub fn step3_kkt_residual(
    problem: &ProblemInstance<'_>,
    polar: &PolarVars,
    lambda: &DVector<f64>,
    rho: f64,
    zeta: &DVector<f64>,
) -> (f64, f64) {
    let a = problem.constraint_matrix();
    let b = constraint_rhs(problem, polar);
    let q = problem.cost_matrix();
    let (c, c_rhs) = problem.init_system();
    let grad = &q * zeta + &problem.linear - lambda + (a.transpose() * (&a * zeta - &b)) * rho;
    // Multipliers of the equality rows in the least-squares sense.
    let cct = &c * c.transpose();
    let nu = cct.lu().solve(&(-(&c * &grad))).unwrap();
    let stationarity = (&grad + c.transpose() * nu).amax();
    let feas = (&c * zeta - c_rhs).amax();
    (stationarity.max(feas), b.norm())
}

/// Relaxed objective from the explicit stacked matrices.
pub fn explicit_objective(
    problem: &ProblemInstance<'_>,
    polar: &PolarVars,
    lambda: &DVector<f64>,
    rho: f64,
    zeta: &DVector<f64>,
) -> f64 {
    let a = problem.constraint_matrix();
    let b = constraint_rhs(problem, polar);
    let q: DMatrix<f64> = problem.cost_matrix();
    let e = &a * zeta - b;
    0.5 * zeta.dot(&(&q * zeta)) + problem.linear.dot(zeta) - lambda.dot(zeta) + 0.5 * rho * e.norm_squared()
}

/// Per-sample vectors, angles and bounds for one family block and sample,
/// as seen by the closed-form steps.
pub struct PolarSample {
    pub v: Point,
    pub alpha: f64,
    pub beta: f64,
    pub d: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn polar_sample(problem: &ProblemInstance<'_>, zeta: &DVector<f64>, polar: &PolarVars, block: usize, k: usize) -> PolarSample {
    let v = family_vectors(problem, zeta)[block][k];
    let blk = &polar.blocks[block];
    let ds = blk.d_star.as_ref().map_or(f64::INFINITY, |d| d[k]);
    let (lo, hi) = distance_bounds(problem, blk.family, ds);
    PolarSample { v, alpha: blk.alpha[k], beta: blk.beta[k], d: blk.d[k], lo, hi }
}
