use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::log::LogRecord;
use super::scenario::Scenario;
use super::World;
use crate::am::{
    solve, AgentSnapshot, NeighborTrajectory, Planner, PlannerConfig, ProblemError, SolveError, TrajectoryPlan, WarmStart,
};
use crate::gridplanner::{self, CostToGo, PlanError};
use crate::guidance::{self, GuidanceResult};
use crate::parallel::{map_indexed, Execution};
use crate::voxelmap::Point;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("agent {agent}: {source}")]
    Path { agent: usize, source: PlanError },
    #[error("agent {agent}: {source}")]
    Problem { agent: usize, source: ProblemError },
    #[error("agent {agent}: {source}")]
    Solve { agent: usize, source: SolveError },
    #[error("agent {agent} has no free planning voxel nearby")]
    Stranded { agent: usize },
    #[error("scenario has {starts} starts but {goals} goals")]
    Shape { starts: usize, goals: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionOptions {
    pub execution: Execution,
    /// Write wall-clock solve times into the log. Off makes logs
    /// reproducible byte for byte.
    pub record_timing: bool,
    /// Reuse one cost-to-go field per agent instead of running A* every round.
    pub path_cache: bool,
    /// Collision checks per executed interval.
    pub substeps: usize,
    /// Agents within goal tolerance and slower than this hold position.
    pub hold_speed: f64,
}

impl Default for MissionOptions {
    fn default() -> Self {
        Self { execution: Execution::Parallel, record_timing: true, path_cache: true, substeps: 10, hold_speed: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTimeStats {
    pub mean: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionMetrics {
    pub success: bool,
    /// Time at which all agents were at their goals, or the time the mission stopped.
    pub mission_time: f64,
    pub agents: usize,
    pub rounds: usize,
    pub per_agent_solve_ms: SolveTimeStats,
    /// Smallest inter-agent distance in units of the separation ellipsoid;
    /// `None` with a single agent.
    pub min_inter_agent_scaled: Option<f64>,
    /// Smallest distance from an agent's surface to a raw obstacle or the boundary.
    pub min_obstacle_clearance: f64,
    pub collision_events: usize,
    pub deadlock: bool,
    /// Optimizer runs (holds excluded).
    pub solves: usize,
    pub converged_solves: usize,
    /// Solves whose sampled speed or thrust leaves the tolerance bands
    /// (2 % on each limit), split by convergence.
    pub converged_band_violations: usize,
    pub nonconverged_band_violations: usize,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct MissionOutcome {
    pub metrics: MissionMetrics,
    pub log: Vec<LogRecord>,
}

/// Result of one agent's planning step.
#[derive(Clone, Debug)]
pub struct AgentStep {
    pub plan: TrajectoryPlan,
    pub guidance: GuidanceResult,
    pub held: bool,
}

#[derive(Clone, Debug)]
pub struct SwarmState {
    pub round: usize,
    pub agents: Vec<AgentSnapshot>,
    /// Plans shared in the previous round; constant holds before the first.
    pub shared: Vec<TrajectoryPlan>,
    /// Whether `shared` holds real plans made one `replan_dt` ago.
    pub bootstrapped: bool,
}

impl SwarmState {
    pub fn new(planner: &Planner, starts: &[Point], goals: &[Point]) -> Self {
        Self {
            round: 0,
            agents: starts.iter().zip(goals).map(|(s, g)| AgentSnapshot::at_rest(*s, *g)).collect(),
            shared: starts.iter().map(|s| TrajectoryPlan::hold(&planner.basis, s)).collect(),
            bootstrapped: false,
        }
    }
}

enum PathSource {
    Cached(CostToGo),
    Search,
}

/// Per-mission planning context shared by all agents.
pub struct Mission<'a> {
    pub planner: &'a Planner,
    pub world: &'a World,
    pub options: MissionOptions,
    pub replan_dt: f64,
    paths: Vec<PathSource>,
}

impl<'a> Mission<'a> {
    pub fn new(
        planner: &'a Planner,
        world: &'a World,
        goals: &[Point],
        replan_dt: f64,
        options: MissionOptions,
    ) -> Result<Self, SimError> {
        let paths = map_indexed(options.execution, goals.len(), |i| {
            if options.path_cache {
                CostToGo::new(&world.planning, &goals[i])
                    .map(PathSource::Cached)
                    .map_err(|source| SimError::Path { agent: i, source })
            } else {
                Ok(PathSource::Search)
            }
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { planner, world, options, replan_dt, paths })
    }

    fn config(&self) -> &PlannerConfig {
        &self.planner.config
    }

    /// Plans one agent from the round's shared snapshot. Pure in `state`, so
    /// agents can be planned in any order or concurrently.
    pub fn plan_agent(&self, state: &SwarmState, i: usize) -> Result<AgentStep, SimError> {
        let cfg = self.config();
        let basis = &self.planner.basis;
        let snap = state.agents[i];
        let pos = snap.position;
        if (pos - snap.final_goal).norm() <= cfg.goal_tol && snap.velocity.norm() <= self.options.hold_speed {
            return Ok(AgentStep {
                plan: TrajectoryPlan::hold(basis, &pos),
                guidance: GuidanceResult {
                    attractor: pos,
                    intermediate_goal: snap.final_goal,
                    attractor_index: None,
                    goal_index: None,
                },
                held: true,
            });
        }
        let grid = &self.world.planning;
        let current = if grid.is_free(&pos) {
            pos
        } else {
            grid.nearest_free(&pos, 1.0).ok_or(SimError::Stranded { agent: i })?
        };
        let path = match &self.paths[i] {
            PathSource::Cached(ctg) => ctg.path_from(grid, &current),
            PathSource::Search => gridplanner::plan(grid, &current, &snap.final_goal),
        }
        .map_err(|source| SimError::Path { agent: i, source })?;
        let mut g = guidance::select(&path, &current, grid, cfg.ray_radius);
        if g.goal_index == Some(path.len() - 1) {
            g.intermediate_goal = snap.final_goal;
        }

        let shift = if state.bootstrapped { self.replan_dt } else { 0.0 };
        let neighbors: Vec<NeighborTrajectory> = (0..state.agents.len())
            .filter(|&j| j != i)
            .filter_map(|j| {
                let positions = state.shared[j].positions_shifted(basis, shift);
                ((positions[0] - pos).norm() <= cfg.neighbor_radius)
                    .then_some(NeighborTrajectory { agent_id: j, positions })
            })
            .collect();
        let problem = self
            .planner
            .build_problem(&snap, &g, neighbors)
            .map_err(|source| SimError::Problem { agent: i, source })?;
        let warm = if state.bootstrapped {
            WarmStart::Previous { plan: &state.shared[i], shift }
        } else {
            WarmStart::Cold
        };
        let plan = solve(&problem, grid, warm).map_err(|source| SimError::Solve { agent: i, source })?;
        Ok(AgentStep { plan, guidance: g, held: false })
    }

    /// One synchronous round: every agent plans from the same state.
    pub fn planning_round(&self, state: &SwarmState) -> Result<Vec<AgentStep>, SimError> {
        map_indexed(self.options.execution, state.agents.len(), |i| self.plan_agent(state, i))
            .into_iter()
            .collect()
    }
}

/// Moves every agent along its new plan for `dt` seconds and makes the new
/// plans the shared ones.
pub fn advance(planner: &Planner, state: &mut SwarmState, steps: &[AgentStep], dt: f64) {
    let basis = &planner.basis;
    for (agent, step) in state.agents.iter_mut().zip(steps) {
        if dt > 0.0 && !step.held {
            let (p, v, a) = step.plan.state_at(basis, dt);
            agent.position = p;
            agent.velocity = v;
            agent.acceleration = a;
        } else if step.held {
            agent.velocity = Point::zeros();
            agent.acceleration = Point::zeros();
        }
    }
    state.shared = steps.iter().map(|s| s.plan.clone()).collect();
    state.bootstrapped = true;
    state.round += 1;
}

struct Tracker {
    min_scaled: f64,
    min_clearance: f64,
    collisions: usize,
}

impl Tracker {
    fn check(&mut self, world: &World, cfg: &PlannerConfig, positions: &[Point]) {
        let sep = cfg.separation_scale();
        let mut hit = false;
        for (i, p) in positions.iter().enumerate() {
            let c = world.clearance(p) - cfg.agent_radius;
            self.min_clearance = self.min_clearance.min(c);
            hit |= c < 0.0;
            for q in &positions[i + 1..] {
                let d = p - q;
                let scaled = Point::new(d.x * sep[0], d.y * sep[1], d.z * sep[2]).norm();
                self.min_scaled = self.min_scaled.min(scaled);
                hit |= scaled < 1.0;
            }
        }
        if hit {
            self.collisions += 1;
        }
    }
}

fn within_bands(cfg: &PlannerConfig, plan: &TrajectoryPlan) -> bool {
    let g = Point::new(0.0, 0.0, cfg.gravity);
    plan.velocities[1..].iter().all(|v| v.norm() <= cfg.v_max * 1.02)
        && plan.accelerations[1..].iter().all(|a| {
            let f = (a + g).norm();
            f >= cfg.f_min * 0.98 && f <= cfg.f_max * 1.02
        })
}

fn arr(p: &Point) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Runs a mission until every agent is within goal tolerance or the time
/// limit passes. Planning failures end the mission as a failed trial; only
/// an inconsistent scenario or config is reported as an error.
pub fn run_mission(scenario: &Scenario, config: &PlannerConfig, options: &MissionOptions) -> Result<MissionOutcome, SimError> {
    let n = scenario.agent_count();
    if scenario.goals.len() != n {
        return Err(SimError::Shape { starts: n, goals: scenario.goals.len() });
    }
    let planner = Planner::new(config.clone()).map_err(|source| SimError::Problem { agent: 0, source })?;
    let world = World::new(scenario.map.clone(), config);
    run_mission_with(&planner, &world, scenario, options)
}

/// [`run_mission`] with a prebuilt planner and world.
pub fn run_mission_with(
    planner: &Planner,
    world: &World,
    scenario: &Scenario,
    options: &MissionOptions,
) -> Result<MissionOutcome, SimError> {
    let cfg = &planner.config;
    let n = scenario.agent_count();
    let dt = scenario.replan_dt;
    let mut metrics = MissionMetrics {
        success: false,
        mission_time: 0.0,
        agents: n,
        rounds: 0,
        per_agent_solve_ms: SolveTimeStats::default(),
        min_inter_agent_scaled: None,
        min_obstacle_clearance: f64::INFINITY,
        collision_events: 0,
        deadlock: false,
        solves: 0,
        converged_solves: 0,
        converged_band_violations: 0,
        nonconverged_band_violations: 0,
        failure: None,
    };
    let mut log = Vec::new();
    let mut tracker = Tracker { min_scaled: f64::INFINITY, min_clearance: f64::INFINITY, collisions: 0 };
    let mut state = SwarmState::new(planner, &scenario.starts, &scenario.goals);
    tracker.check(world, cfg, &scenario.starts);
    let mut solve_ms_total = 0.0;
    let mission = match Mission::new(planner, world, &scenario.goals, dt, options.clone()) {
        Ok(m) => Some(m),
        Err(e) => {
            metrics.failure = Some(e.to_string());
            None
        }
    };
    if let Some(mission) = mission {
        loop {
            let t = state.round as f64 * dt;
            metrics.mission_time = t;
            let done = state.agents.iter().all(|a| (a.position - a.final_goal).norm() <= cfg.goal_tol);
            if done {
                metrics.success = true;
                break;
            }
            if t >= scenario.time_limit - 1e-9 || dt <= 0.0 {
                metrics.failure = Some("time limit reached".into());
                metrics.deadlock = state
                    .agents
                    .iter()
                    .filter(|a| (a.position - a.final_goal).norm() > cfg.goal_tol)
                    .all(|a| a.velocity.norm() < 0.05);
                break;
            }
            let steps = match mission.planning_round(&state) {
                Ok(s) => s,
                Err(e) => {
                    metrics.failure = Some(e.to_string());
                    break;
                }
            };
            for (i, step) in steps.iter().enumerate() {
                let a = &state.agents[i];
                let d = &step.plan.diagnostics;
                log.push(LogRecord {
                    t,
                    id: i,
                    pos: arr(&a.position),
                    vel: arr(&a.velocity),
                    acc: arr(&a.acceleration),
                    attractor: arr(&step.guidance.attractor),
                    goal: arr(&step.guidance.intermediate_goal),
                    solve_ms: options.record_timing.then_some(d.solve_ms),
                    residual: d.residual,
                    converged: d.converged,
                });
                if step.held {
                    continue;
                }
                metrics.solves += 1;
                solve_ms_total += d.solve_ms;
                metrics.per_agent_solve_ms.max = metrics.per_agent_solve_ms.max.max(d.solve_ms);
                let ok = within_bands(cfg, &step.plan);
                if d.converged {
                    metrics.converged_solves += 1;
                    metrics.converged_band_violations += usize::from(!ok);
                } else {
                    metrics.nonconverged_band_violations += usize::from(!ok);
                }
            }
            let sub = options.substeps.max(1);
            for m in 1..=sub {
                let ts = dt * m as f64 / sub as f64;
                let positions: Vec<Point> = steps
                    .iter()
                    .zip(&state.agents)
                    .map(|(s, a)| if s.held { a.position } else { s.plan.state_at(&planner.basis, ts).0 })
                    .collect();
                tracker.check(world, cfg, &positions);
            }
            advance(planner, &mut state, &steps, dt);
            metrics.rounds += 1;
        }
    }
    if metrics.solves > 0 {
        metrics.per_agent_solve_ms.mean = solve_ms_total / metrics.solves as f64;
    }
    metrics.collision_events = tracker.collisions;
    metrics.min_obstacle_clearance = tracker.min_clearance;
    metrics.min_inter_agent_scaled = (n > 1).then_some(tracker.min_scaled);
    if metrics.success && metrics.collision_events > 0 {
        metrics.success = false;
        metrics.failure = Some(format!("{} collision events", metrics.collision_events));
    }
    Ok(MissionOutcome { metrics, log })
}
