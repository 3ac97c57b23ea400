mod common;

use common::*;
use nalgebra::DVector;
use rand::Rng;
use voxswarm::am::polar::{step1_update_angles, step2_update_distances};
use voxswarm::am::solver::{constraint_residual, residual_max_norm, step3_solve_trajectory, step4_update_multiplier};
use voxswarm::am::{
    init_polar, solve, AgentSnapshot, Family, NeighborTrajectory, Planner, PlannerConfig, SolveDiagnostics, TrajectoryPlan,
    WarmStart,
};
use voxswarm::gridplanner::{self, shortcut};
use voxswarm::guidance::{self, GuidanceResult};
use voxswarm::mapgen;
use voxswarm::sim::{
    advance, generate_antipodal_scenario, generate_random_scenario, min_separation, run_mission, AgentStep, Mission,
    MissionOptions, Scenario, ScenarioOptions, SwarmState, World,
};
use voxswarm::voxelmap::{Aabb, Point, VoxelGrid};

fn p(x: f64, y: f64, z: f64) -> Point {
    Point::new(x, y, z)
}

fn boxes(size: [f64; 3], blocks: &[([f64; 3], [f64; 3])]) -> VoxelGrid {
    let b: Vec<Aabb> = blocks.iter().map(|(lo, hi)| Aabb::from_arrays(*lo, *hi)).collect();
    VoxelGrid::from_primitives(&b, &Aabb::from_arrays([0.0; 3], size), 0.1).unwrap()
}

fn scaled(cfg: &PlannerConfig, d: Point) -> f64 {
    let s = cfg.separation_scale();
    p(d.x * s[0], d.y * s[1], d.z * s[2]).norm()
}

// Maps

#[test]
fn single_voxel_inflation_shapes() {
    let mut g = VoxelGrid::new(Point::zeros(), 0.1, [7, 7, 7]).unwrap();
    g.set([3, 3, 3], true);
    // Half a voxel of growth reaches the six face neighbours only.
    let plus = g.inflate(0.05);
    assert_eq!(plus.occupied_count(), 7);
    for off in [[1i64, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]] {
        let n = [(3 + off[0]) as usize, (3 + off[1]) as usize, (3 + off[2]) as usize];
        assert!(plus.get(n));
    }
    // A full voxel of growth also takes the edge neighbours, per the
    // centre-distance rule `|c - o| <= r + res / 2`.
    let full = g.inflate(0.1);
    let want = g
        .occupied_voxels()
        .next()
        .map(|o| (0..g.len()).filter(|&l| (g.center_linear(l) - g.center(o)).norm() <= 0.15 + 1e-9).count())
        .unwrap();
    assert_eq!(full.occupied_count(), want);
    assert_eq!(want, 19);
}

#[test]
fn single_small_box_is_one_voxel() {
    let g = boxes([2.0, 2.0, 2.0], &[([1.0, 1.0, 1.0], [1.1, 1.1, 1.1])]);
    assert_eq!(g.occupied_count(), 1);
}

#[test]
fn oversized_inflation_fills_the_grid() {
    let mut g = VoxelGrid::new(Point::zeros(), 0.1, [8, 6, 4]).unwrap();
    g.set([0, 0, 0], true);
    assert_eq!(g.inflate(2.0).occupied_count(), g.len());
}

#[test]
fn ray_to_single_voxel() {
    let g = boxes([5.0, 5.0, 2.0], &[([3.0, 2.5, 1.0], [3.1, 2.6, 1.1])]);
    let hit = g.cast_ray(&p(2.05, 2.55, 1.05), &p(1.0, 0.0, 0.0), 4.0).unwrap();
    assert!(hit.hit);
    assert!((0.9..=1.0).contains(&hit.distance), "{}", hit.distance);
}

#[test]
fn empty_map_ray_misses() {
    let g = mapgen::empty([10.0, 10.0, 2.0], 0.1).unwrap();
    let mut rng = rng(5);
    for _ in 0..50 {
        let o = p(rng.gen_range(4.0..6.0), rng.gen_range(4.0..6.0), 1.0);
        let d = unit_vector(&mut rng);
        let dir = p(d.x, d.y, 0.0).normalize();
        let hit = g.cast_ray(&o, &dir, 3.0).unwrap();
        assert!(!hit.hit);
        assert_eq!(hit.distance, 3.0);
    }
}

#[test]
fn clearance_to_wall() {
    let g = boxes([5.0, 5.0, 2.0], &[([3.0, 0.0, 0.0], [3.1, 5.0, 2.0])]);
    let a = p(1.0, 2.55, 1.05);
    let d = g.directional_clearance(&a, &p(2.0, 2.55, 1.05), 0.15, 4.0).unwrap();
    assert!((1.75..=1.90).contains(&d), "{d}");
    // Target behind the wall.
    let t = p(4.0, 2.55, 1.05);
    assert!(g.directional_clearance(&a, &t, 0.15, 4.0).unwrap() < (t - a).norm());
    // Nothing in the way.
    let e = mapgen::empty([5.0, 5.0, 2.0], 0.1).unwrap();
    assert_eq!(e.directional_clearance(&a, &p(2.0, 2.55, 1.05), 0.15, 1.5).unwrap(), 1.5);
}

#[test]
fn nearest_obstacle_examples() {
    let g = boxes([5.0, 5.0, 2.0], &[([3.0, 2.5, 1.0], [3.1, 2.6, 1.1])]);
    let d = g.nearest_obstacle_distance(&p(2.05, 2.55, 1.05), 3.0).unwrap();
    assert!((d - 1.0).abs() <= 0.1, "{d}");
    assert_eq!(g.nearest_obstacle_distance(&p(3.05, 2.55, 1.05), 3.0).unwrap(), 0.0);
    let e = mapgen::empty([5.0, 5.0, 2.0], 0.1).unwrap();
    assert_eq!(e.nearest_obstacle_distance(&p(2.0, 2.0, 1.0), 0.7).unwrap(), 0.7);
}

#[test]
fn visibility_examples() {
    let e = mapgen::empty([5.0, 5.0, 2.0], 0.1).unwrap();
    assert!(e.is_visible(&p(1.0, 1.0, 1.0), &p(4.0, 3.5, 1.2), 0.15).unwrap());
    let wall = boxes([5.0, 5.0, 2.0], &[([2.5, 0.0, 0.0], [2.6, 5.0, 2.0])]);
    assert!(!wall.is_visible(&p(1.0, 1.0, 1.0), &p(4.0, 1.0, 1.0), 0.15).unwrap());
    // A corridor narrower than the sphere blocks the tangent rays but not the centre ray.
    let corridor = boxes([5.0, 5.0, 2.0], &[([0.0, 0.0, 0.0], [5.0, 2.0, 2.0]), ([0.0, 2.2, 0.0], [5.0, 5.0, 2.0])]);
    let (a, b) = (p(0.5, 2.1, 1.0), p(4.5, 2.1, 1.0));
    assert!(corridor.is_visible(&a, &b, 0.0).unwrap());
    assert!(!corridor.is_visible(&a, &b, 0.15).unwrap());
}

// Grid paths and guidance

#[test]
fn shortcut_around_a_wall() {
    let grid = boxes([4.0, 4.0, 1.0], &[([1.5, 0.0, 0.0], [1.7, 3.0, 1.0])]);
    let (s, g) = (p(0.55, 0.55, 0.55), p(3.05, 0.55, 0.55));
    let path = gridplanner::plan(&grid, &s, &g).unwrap();
    let short = shortcut(&path, &grid, 0.1);
    assert!(short.len() >= 3, "{} points", short.len());
    for w in short.points.windows(2) {
        assert!(grid.is_visible(&w[0], &w[1], 0.1).unwrap());
    }
    assert_eq!(short.points.first(), path.points.first());
    assert_eq!(short.points.last(), path.points.last());
    let two = voxswarm::gridplanner::GridPath::from_points(vec![s, p(1.0, 0.55, 0.55)]);
    assert_eq!(shortcut(&two, &grid, 0.1).points, two.points);
}

#[test]
fn guidance_stops_before_second_corner() {
    // Two walls force an S-shaped route.
    let grid = boxes(
        [6.0, 4.0, 1.0],
        &[([2.0, 0.0, 0.0], [2.2, 3.0, 1.0]), ([4.0, 1.0, 0.0], [4.2, 4.0, 1.0])],
    );
    let (s, g) = (p(1.05, 0.55, 0.55), p(5.05, 3.55, 0.55));
    let path = gridplanner::plan(&grid, &s, &g).unwrap();
    let sel = guidance::select(&path, &s, &grid, 0.05);
    let (ai, gi) = (sel.attractor_index.unwrap(), sel.goal_index.unwrap());
    assert!(ai < gi && gi < path.len() - 1, "attractor {ai}, goal {gi}, len {}", path.len());
    // Nothing beyond the intermediate goal is visible from the attractor.
    for q in &path.points[gi + 1..] {
        assert!(!grid.is_visible(&sel.attractor, q, 0.05).unwrap());
    }
}

// Optimizer

fn open_world() -> (PlannerConfig, VoxelGrid) {
    let cfg = PlannerConfig::default();
    let grid = World::new(mapgen::empty([8.0, 6.0, 3.0], 0.1).unwrap(), &cfg).planning;
    (cfg, grid)
}

fn at(pos: Point, goal: Point) -> GuidanceResult {
    GuidanceResult { attractor: pos, intermediate_goal: goal, attractor_index: None, goal_index: None }
}

#[test]
fn step2_clips_into_family_intervals() {
    let (cfg, grid) = open_world();
    let planner = Planner::new(cfg.clone()).unwrap();
    let start = p(2.0, 3.0, 1.5);
    let ahead = start + p(1.5, 0.0, 0.0);
    let snap = AgentSnapshot { position: start, velocity: p(0.5, 0.0, 0.0), acceleration: Point::zeros(), final_goal: ahead };
    let neighbor = NeighborTrajectory { agent_id: 1, positions: vec![start + p(0.09, 0.0, 0.0); cfg.horizon] };
    let problem = planner.build_problem(&snap, &at(start, ahead), vec![neighbor]).unwrap();
    // A straight line at 0.5 m/s.
    let zeta = planner.basis.line(&start, &ahead);
    let mut polar = init_polar(&problem, &grid, WarmStart::Cold).unwrap();
    step1_update_angles(&problem, &zeta, &mut polar);
    step2_update_distances(&problem, &zeta, &mut polar, &grid).unwrap();
    let w = cfg.kinematic_weight;
    let vel = polar.block(Family::Velocity).unwrap();
    assert!(vel.d.iter().all(|d| (d - w * 0.5).abs() < 1e-9), "{:?}", vel.d);
    // The neighbour is 9 cm away at the start; the line leaves it behind.
    let inter = polar.block(Family::Inter(0)).unwrap();
    assert_eq!(inter.d[0], cfg.inter_agent_distance());
    assert!(inter.d.iter().all(|d| *d >= cfg.inter_agent_distance()));
}

#[test]
fn multiplier_unchanged_without_residual_or_penalty() {
    let (cfg, grid) = open_world();
    let planner = Planner::new(cfg.clone()).unwrap();
    let pos = p(3.0, 3.0, 1.5);
    let problem = planner.build_problem(&AgentSnapshot::at_rest(pos, pos), &at(pos, pos), Vec::new()).unwrap();
    let zeta = planner.basis.constant(&pos);
    let mut polar = init_polar(&problem, &grid, WarmStart::Cold).unwrap();
    step1_update_angles(&problem, &zeta, &mut polar);
    step2_update_distances(&problem, &zeta, &mut polar, &grid).unwrap();
    assert!(residual_max_norm(&constraint_residual(&problem, &zeta, &polar)) < 1e-12);
    let mut rng = rng(9);
    let lambda = random_vector(&mut rng, planner.n_vars(), 1.0);
    let after = step4_update_multiplier(&problem, &zeta, &polar, &lambda, 5.0);
    assert!((after - &lambda).amax() < 1e-9);
    let moved = zeta + random_vector(&mut rng, planner.n_vars(), 0.3);
    assert_eq!(step4_update_multiplier(&problem, &moved, &polar, &lambda, 0.0), lambda);
}

fn residual_history(bench: &Bench, problem: &voxswarm::am::ProblemInstance, sign: f64, iters: usize) -> Vec<f64> {
    let cfg = problem.config();
    let mut polar = init_polar(problem, &bench.grid, WarmStart::Cold).unwrap();
    let mut lambda = DVector::zeros(bench.planner.n_vars());
    let mut rho = cfg.rho_init;
    let mut norms = Vec::new();
    for _ in 0..iters {
        let zeta = step3_solve_trajectory(problem, &polar, &lambda, rho).unwrap();
        step1_update_angles(problem, &zeta, &mut polar);
        step2_update_distances(problem, &zeta, &mut polar, &bench.grid).unwrap();
        let e: f64 = constraint_residual(problem, &zeta, &polar).iter().flatten().map(|v| v.norm_squared()).sum();
        norms.push(e.sqrt());
        let next = step4_update_multiplier(problem, &zeta, &polar, &lambda, rho);
        lambda = &lambda + (next - &lambda) * sign;
        rho += cfg.rho_step;
    }
    norms
}

#[test]
fn multiplier_update_drives_residual_down() {
    let bench = Bench::new(21);
    let mut rng = rng(77);
    let mut diverged = 0;
    for _ in 0..20 {
        let problem = bench.problem(&mut rng);
        let good = residual_history(&bench, &problem, 1.0, 40);
        assert!(good[39] <= good[0] + 1e-9, "{good:?}");
        if good[0] > 1e-6 {
            // The reversed update must do worse.
            let bad = residual_history(&bench, &problem, -1.0, 40);
            assert!(bad[39] > good[39], "{bad:?} vs {good:?}");
            diverged += 1;
        }
    }
    assert!(diverged >= 3);
}

#[test]
fn reaches_goal_one_metre_away() {
    let (cfg, grid) = open_world();
    let planner = Planner::new(cfg.clone()).unwrap();
    let start = p(3.0, 3.0, 1.5);
    let goal = p(3.6, 2.4, 1.9);
    let problem = planner.build_problem(&AgentSnapshot::at_rest(start, goal), &at(start, goal), Vec::new()).unwrap();
    let plan = solve(&problem, &grid, WarmStart::Cold).unwrap();
    assert!(plan.diagnostics.converged);
    assert!((plan.positions.last().unwrap() - goal).norm() <= cfg.goal_tol);
    // Identical inputs, identical plan.
    let again = solve(&problem, &grid, WarmStart::Cold).unwrap();
    assert_eq!(again.coeffs, plan.coeffs);
}

#[test]
fn goal_behind_wall_stays_clear() {
    let cfg = PlannerConfig::default();
    let raw = boxes([6.0, 4.0, 2.0], &[([2.5, 0.0, 0.0], [2.7, 2.6, 2.0])]);
    let world = World::new(raw, &cfg);
    let planner = Planner::new(cfg.clone()).unwrap();
    let (start, goal) = (p(1.0, 1.0, 1.0), p(4.5, 1.0, 1.0));
    let path = gridplanner::plan(&world.planning, &start, &goal).unwrap();
    let g = guidance::select(&path, &start, &world.planning, cfg.ray_radius);
    let problem = planner.build_problem(&AgentSnapshot::at_rest(start, goal), &g, Vec::new()).unwrap();
    let plan = solve(&problem, &world.planning, WarmStart::Cold).unwrap();
    assert!(plan.diagnostics.converged, "{:?}", plan.diagnostics);
    for q in &plan.positions {
        assert!(world.clearance(q) > cfg.agent_radius, "{q:?}");
    }
}

/// Runs `rounds` synchronous rounds. Every converged plan must keep its
/// distance from the neighbour trajectories it was given, and the executed
/// positions must stay apart.
fn exchange_rounds(cfg: &PlannerConfig, world: &World, starts: &[Point], goals: &[Point], rounds: usize) -> usize {
    let planner = Planner::new(cfg.clone()).unwrap();
    let mission = Mission::new(&planner, world, goals, 0.1, MissionOptions::default()).unwrap();
    let mut state = SwarmState::new(&planner, starts, goals);
    let n = starts.len();
    let mut converged = 0;
    for _ in 0..rounds {
        let steps = mission.planning_round(&state).unwrap();
        let shift = if state.bootstrapped { 0.1 } else { 0.0 };
        for (i, s) in steps.iter().enumerate().filter(|(_, s)| !s.held && s.plan.diagnostics.converged) {
            converged += 1;
            for j in (0..n).filter(|&j| j != i) {
                let xi = state.shared[j].positions_shifted(&planner.basis, shift);
                if (xi[0] - state.agents[i].position).norm() > cfg.neighbor_radius {
                    continue;
                }
                for k in 1..cfg.horizon {
                    let sep = scaled(cfg, s.plan.positions[k] - xi[k]);
                    assert!(sep >= 0.95, "round {} agent {i} vs {j} sample {k}: {sep}", state.round);
                }
            }
        }
        advance(&planner, &mut state, &steps, 0.1);
        for i in 0..n {
            for j in i + 1..n {
                assert!(scaled(cfg, state.agents[i].position - state.agents[j].position) >= 0.95);
            }
        }
    }
    converged
}

#[test]
fn head_on_pair_keeps_apart() {
    let cfg = PlannerConfig::default();
    let world = World::new(mapgen::empty([8.0, 4.0, 2.0], 0.1).unwrap(), &cfg);
    let starts = [p(1.0, 2.0, 1.0), p(7.0, 2.0, 1.0)];
    let goals = [starts[1], starts[0]];
    assert!(exchange_rounds(&cfg, &world, &starts, &goals, 120) > 100);
}

#[test]
fn four_agent_exchange_keeps_apart() {
    let (cfg, sc) = exchange(4);
    let world = World::new(sc.map.clone(), &cfg);
    assert!(exchange_rounds(&cfg, &world, &sc.starts, &sc.goals, 60) > 100);
}

// Simulation

fn line_step(planner: &Planner, from: Point, to: Point) -> AgentStep {
    let diag = SolveDiagnostics { iterations: 1, residual: 0.0, converged: true, solve_ms: 0.0 };
    let plan = TrajectoryPlan::from_coeffs(&planner.basis, planner.basis.line(&from, &to), DVector::zeros(planner.n_vars()), diag);
    AgentStep { plan, guidance: at(from, to), held: false }
}

#[test]
fn advance_examples() {
    let cfg = PlannerConfig::default();
    let planner = Planner::new(cfg.clone()).unwrap();
    let start = p(1.0, 1.0, 1.0);
    let far = start + p(cfg.v_max * cfg.duration, 0.0, 0.0);

    let mut state = SwarmState::new(&planner, &[start], &[far]);
    let hold = AgentStep { plan: TrajectoryPlan::hold(&planner.basis, &start), guidance: at(start, far), held: true };
    advance(&planner, &mut state, &[hold], 0.1);
    assert_eq!(state.agents[0].position, start);
    assert_eq!(state.agents[0].velocity, Point::zeros());

    let mut state = SwarmState::new(&planner, &[start], &[far]);
    advance(&planner, &mut state, &[line_step(&planner, start, far)], 0.1);
    let moved = (state.agents[0].position - start).norm();
    assert!((moved - cfg.v_max * 0.1).abs() <= 0.02 * cfg.v_max * 0.1, "{moved}");

    let mut state = SwarmState::new(&planner, &[start], &[far]);
    let before = state.agents.clone();
    advance(&planner, &mut state, &[line_step(&planner, start, far)], 0.0);
    assert_eq!(state.agents, before);
}

fn exchange(agents: usize) -> (PlannerConfig, Scenario) {
    let cfg = PlannerConfig::default();
    let map = mapgen::empty([10.0, 10.0, 2.0], 0.1).unwrap();
    let sc = generate_antipodal_scenario(&map, agents, 3, &cfg, &ScenarioOptions::default()).unwrap();
    (cfg, sc)
}

#[test]
fn round_is_order_independent() {
    let (cfg, sc) = exchange(4);
    let planner = Planner::new(cfg.clone()).unwrap();
    let world = World::new(sc.map.clone(), &cfg);
    let mission = Mission::new(&planner, &world, &sc.goals, sc.replan_dt, MissionOptions::default()).unwrap();
    let mut state = SwarmState::new(&planner, &sc.starts, &sc.goals);
    for _ in 0..15 {
        let steps = mission.planning_round(&state).unwrap();
        let reversed: Vec<AgentStep> = (0..4).rev().map(|i| mission.plan_agent(&state, i).unwrap()).collect();
        for (i, s) in steps.iter().enumerate() {
            assert_eq!(s.plan.coeffs, reversed[3 - i].plan.coeffs);
        }
        advance(&planner, &mut state, &steps, sc.replan_dt);
    }
}

#[test]
fn agents_at_goal_hold() {
    let cfg = PlannerConfig::default();
    let planner = Planner::new(cfg.clone()).unwrap();
    let world = World::new(mapgen::empty([6.0, 6.0, 2.0], 0.1).unwrap(), &cfg);
    let spots = [p(1.0, 1.0, 1.0), p(4.0, 4.0, 1.0)];
    let mission = Mission::new(&planner, &world, &spots, 0.1, MissionOptions::default()).unwrap();
    let mut state = SwarmState::new(&planner, &spots, &spots);
    let steps = mission.planning_round(&state).unwrap();
    assert!(steps.iter().all(|s| s.held));
    advance(&planner, &mut state, &steps, 0.1);
    assert_eq!(state.agents[0].position, spots[0]);
    assert_eq!(state.agents[1].position, spots[1]);
}

#[test]
fn random_scenario_is_separated() {
    let cfg = PlannerConfig::default();
    let (map, _) = mapgen::random_room([10.0, 10.0, 2.0], 0.1, 0.2, 5, &Default::default()).unwrap();
    let sc = generate_random_scenario(&map, 20, 5, &cfg, &ScenarioOptions::default()).unwrap();
    let sep = min_separation(&cfg);
    for pts in [&sc.starts, &sc.goals] {
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                assert!((pts[i] - pts[j]).norm() >= sep);
            }
        }
    }
    let again = generate_random_scenario(&map, 20, 5, &cfg, &ScenarioOptions::default()).unwrap();
    assert_eq!(again, sc);
}

#[test]
fn single_agent_transit() {
    let cfg = PlannerConfig::default();
    let sc = Scenario {
        map: mapgen::empty([10.0, 10.0, 2.0], 0.1).unwrap(),
        starts: vec![p(2.5, 5.0, 1.0)],
        goals: vec![p(7.5, 5.0, 1.0)],
        seed: 0,
        time_limit: 60.0,
        replan_dt: 0.1,
    };
    let m = run_mission(&sc, &cfg, &MissionOptions::default()).unwrap().metrics;
    assert!(m.success, "{m:?}");
    assert!(m.mission_time < 60.0);
    assert_eq!(m.collision_events, 0);
    assert_eq!(m.min_inter_agent_scaled, None);
}

#[test]
fn sealed_start_fails_cleanly() {
    let cfg = PlannerConfig::default();
    let walls = [
        ([1.0, 1.0, 0.2], [4.0, 1.2, 2.8]),
        ([1.0, 3.8, 0.2], [4.0, 4.0, 2.8]),
        ([1.0, 1.0, 0.2], [1.2, 4.0, 2.8]),
        ([3.8, 1.0, 0.2], [4.0, 4.0, 2.8]),
        ([1.0, 1.0, 0.2], [4.0, 4.0, 0.4]),
        ([1.0, 1.0, 2.6], [4.0, 4.0, 2.8]),
    ];
    let sc = Scenario {
        map: boxes([6.0, 6.0, 3.0], &walls),
        starts: vec![p(2.5, 2.5, 1.5)],
        goals: vec![p(5.0, 5.0, 1.5)],
        seed: 0,
        time_limit: 10.0,
        replan_dt: 0.1,
    };
    let m = run_mission(&sc, &cfg, &MissionOptions::default()).unwrap().metrics;
    assert!(!m.success);
    assert!(m.failure.as_deref().unwrap_or("").contains("no path"), "{:?}", m.failure);
}
