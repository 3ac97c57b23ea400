use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use clap::Args;
use serde::Serialize;
use voxswarm::am::{solve, AgentSnapshot, Planner, WarmStart};
use voxswarm::gridplanner;
use voxswarm::guidance;
use voxswarm::parallel::map_indexed;
use voxswarm::sim::{generate_antipodal_scenario, generate_random_scenario, run_mission_with, write_jsonl, MissionMetrics, Scenario, World};
use voxswarm::voxelmap::{Point, VoxelGrid};

use crate::config::{Layout, MapKind, RunConfig};
use crate::{resolve, CliError, Common};

#[derive(Args, Debug)]
pub struct MapArgs {
    #[command(flatten)]
    common: Common,
    /// All-free map with the given extent in metres.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], conflicts_with_all = ["random_boxes", "random_room"])]
    empty: Option<Vec<f64>>,
    /// Map with this many random boxes.
    #[arg(long, value_name = "COUNT", conflicts_with = "random_room")]
    random_boxes: Option<usize>,
    /// Random room filled to this occupied fraction.
    #[arg(long, value_name = "FRACTION")]
    random_room: Option<f64>,
    /// Map extent in metres for the random generators.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"])]
    size: Option<Vec<f64>>,
    /// Voxel edge length in metres.
    #[arg(long)]
    res: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
    start: Option<Vec<f64>>,
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
    goal: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the configured number of agents.
    #[arg(long)]
    agents: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Swarm sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Trial seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

fn triple(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn internal(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| internal(path, e))?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| internal(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| internal(path, e))
}

fn build_map(cfg: &RunConfig) -> Result<VoxelGrid, CliError> {
    cfg.map.build(cfg.seed).map_err(|e| CliError::Usage(format!("map: {e}")))
}

pub fn map(args: MapArgs) -> Result<(), CliError> {
    let (mut cfg, out) = resolve(&args.common)?;
    if let Some(e) = &args.empty {
        cfg.map.kind = MapKind::Empty;
        cfg.map.size = triple(e);
    }
    if let Some(n) = args.random_boxes {
        cfg.map.kind = MapKind::RandomBoxes;
        cfg.map.count = n;
    }
    if let Some(f) = args.random_room {
        cfg.map.kind = MapKind::RandomRoom;
        cfg.map.occupancy = f;
    }
    if let Some(s) = &args.size {
        cfg.map.size = triple(s);
    }
    if let Some(r) = args.res {
        cfg.map.resolution = r;
    }
    let grid = build_map(&cfg)?;
    let path = out.join("map.voxmap");
    grid.save(&path).map_err(|e| internal(&path, e))?;
    let d = grid.dims();
    println!(
        "wrote {} ({}x{}x{} voxels, {:.1}% occupied)",
        path.display(),
        d[0],
        d[1],
        d[2],
        100.0 * grid.occupied_fraction()
    );
    Ok(())
}

#[derive(Serialize)]
struct Sample {
    t: f64,
    pos: [f64; 3],
    vel: [f64; 3],
    acc: [f64; 3],
}

#[derive(Serialize)]
struct PlanReport {
    start: [f64; 3],
    goal: [f64; 3],
    attractor: [f64; 3],
    intermediate_goal: [f64; 3],
    path: Vec<[f64; 3]>,
    converged: bool,
    iterations: usize,
    residual: f64,
    solve_ms: f64,
    /// Smallest distance from a sample to a raw obstacle or the map boundary,
    /// minus the agent radius.
    min_obstacle_clearance: f64,
    samples: Vec<Sample>,
}

fn arr(p: &Point) -> [f64; 3] {
    [p.x, p.y, p.z]
}

pub fn plan(args: PlanArgs) -> Result<(), CliError> {
    let (mut cfg, out) = resolve(&args.common)?;
    if let Some(s) = &args.start {
        cfg.plan.start = triple(s);
    }
    if let Some(g) = &args.goal {
        cfg.plan.goal = triple(g);
    }
    let grid = build_map(&cfg)?;
    let world = World::new(grid, &cfg.planner);
    let start = Point::from(cfg.plan.start);
    let goal = Point::from(cfg.plan.goal);
    for (name, p) in [("start", &start), ("goal", &goal)] {
        if !world.planning.is_free(p) {
            return Err(CliError::Usage(format!(
                "{name} {:?} is occupied or too close to an obstacle",
                arr(p)
            )));
        }
    }
    let planner = Planner::new(cfg.planner.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let path = gridplanner::plan(&world.planning, &start, &goal).map_err(|e| CliError::Failure(e.to_string()))?;
    let mut g = guidance::select(&path, &start, &world.planning, cfg.planner.ray_radius);
    if g.goal_index == Some(path.len() - 1) {
        g.intermediate_goal = goal;
    }
    let snap = AgentSnapshot::at_rest(start, goal);
    let problem = planner.build_problem(&snap, &g, Vec::new()).map_err(|e| CliError::Internal(e.to_string()))?;
    let result = solve(&problem, &world.planning, WarmStart::Cold).map_err(|e| CliError::Internal(e.to_string()))?;
    let times = planner.basis.sample_times();
    let s = cfg.planner.agent_radius;
    let report = PlanReport {
        start: cfg.plan.start,
        goal: cfg.plan.goal,
        attractor: arr(&g.attractor),
        intermediate_goal: arr(&g.intermediate_goal),
        path: path.points.iter().map(arr).collect(),
        converged: result.diagnostics.converged,
        iterations: result.diagnostics.iterations,
        residual: result.diagnostics.residual,
        solve_ms: result.diagnostics.solve_ms,
        min_obstacle_clearance: result.positions.iter().map(|p| world.clearance(p) - s).fold(f64::INFINITY, f64::min),
        samples: (0..times.len())
            .map(|k| Sample {
                t: times[k],
                pos: arr(&result.positions[k]),
                vel: arr(&result.velocities[k]),
                acc: arr(&result.accelerations[k]),
            })
            .collect(),
    };
    let file = out.join("plan.json");
    write_json(&file, &report)?;
    println!(
        "wrote {}: converged {} after {} iterations, residual {:.2e}",
        file.display(),
        report.converged,
        report.iterations,
        report.residual
    );
    if report.converged {
        Ok(())
    } else {
        Err(CliError::Failure(format!("solver did not converge (residual {:.3e})", report.residual)))
    }
}

fn scenario(cfg: &RunConfig, map: &VoxelGrid, agents: usize, seed: u64) -> Result<Scenario, CliError> {
    let opts = cfg.scenario.options();
    let r = match cfg.scenario.layout {
        Layout::Antipodal => generate_antipodal_scenario(map, agents, seed, &cfg.planner, &opts),
        Layout::Random => generate_random_scenario(map, agents, seed, &cfg.planner, &opts),
    };
    r.map_err(|e| CliError::Usage(format!("scenario: {e}")))
}

pub fn sim(args: SimArgs) -> Result<(), CliError> {
    let (mut cfg, out) = resolve(&args.common)?;
    if let Some(n) = args.agents {
        cfg.scenario.agents = n;
    }
    let map = build_map(&cfg)?;
    let sc = scenario(&cfg, &map, cfg.scenario.agents, cfg.seed)?;
    let planner = Planner::new(cfg.planner.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let world = World::new(map, &cfg.planner);
    let outcome = run_mission_with(&planner, &world, &sc, &cfg.mission).map_err(|e| CliError::Usage(e.to_string()))?;
    let log_path = out.join("trajectory.jsonl");
    let mut w = BufWriter::new(File::create(&log_path).map_err(|e| internal(&log_path, e))?);
    write_jsonl(&outcome.log, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| internal(&log_path, e))?;
    let metrics_path = out.join("metrics.json");
    write_json(&metrics_path, &outcome.metrics)?;
    let m = &outcome.metrics;
    println!(
        "{} agents, seed {}: success {} in {:.1} s, {} collisions, mean solve {:.2} ms",
        m.agents, cfg.seed, m.success, m.mission_time, m.collision_events, m.per_agent_solve_ms.mean
    );
    if m.success {
        Ok(())
    } else {
        Err(CliError::Failure(m.failure.clone().unwrap_or_else(|| "mission failed".into())))
    }
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    let (mut cfg, out) = resolve(&args.common)?;
    if let Some(s) = args.sizes {
        cfg.bench.sizes = s;
    }
    if let Some(s) = args.seeds {
        cfg.bench.seeds = s;
    }
    let trials: Vec<(usize, u64)> =
        cfg.bench.sizes.iter().flat_map(|&n| cfg.bench.seeds.iter().map(move |&s| (n, s))).collect();
    let planner = Planner::new(cfg.planner.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    // Trials run in parallel; each mission plans its agents sequentially.
    let mut mission_opts = cfg.mission.clone();
    mission_opts.execution = voxswarm::Execution::Sequential;
    let results: Vec<Result<MissionMetrics, CliError>> = map_indexed(cfg.mission.execution, trials.len(), |i| {
        let (n, seed) = trials[i];
        let map = cfg.map.build(seed).map_err(|e| CliError::Usage(format!("map: {e}")))?;
        let sc = scenario(&cfg, &map, n, seed)?;
        let world = World::new(map, &cfg.planner);
        run_mission_with(&planner, &world, &sc, &mission_opts)
            .map(|o| o.metrics)
            .map_err(|e| CliError::Usage(e.to_string()))
    });
    let path = out.join("bench.csv");
    let mut w = BufWriter::new(File::create(&path).map_err(|e| internal(&path, e))?);
    writeln!(w, "size,seed,success,mission_time,mean_solve_ms").map_err(|e| internal(&path, e))?;
    for ((n, seed), r) in trials.iter().zip(results) {
        let m = r?;
        writeln!(w, "{n},{seed},{},{:.1},{:.4}", m.success, m.mission_time, m.per_agent_solve_ms.mean)
            .map_err(|e| internal(&path, e))?;
        eprintln!("size {n} seed {seed}: success {} in {:.1} s", m.success, m.mission_time);
    }
    w.flush().map_err(|e| internal(&path, e))?;
    println!("wrote {} ({} trials)", path.display(), trials.len());
    Ok(())
}
