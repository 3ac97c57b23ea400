//! Seeded start/goal generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::World;
use crate::am::PlannerConfig;
use crate::voxelmap::{Point, VoxelGrid};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("could not place {agents} agents after {attempts} attempts")]
    Placement { agents: usize, attempts: usize },
    #[error("scenario needs at least one agent")]
    NoAgents,
    #[error("starts and goals differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// A mission: map, per-agent starts and goals, and timing.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub map: VoxelGrid,
    pub starts: Vec<Point>,
    pub goals: Vec<Point>,
    pub seed: u64,
    pub time_limit: f64,
    pub replan_dt: f64,
}

impl Scenario {
    pub fn agent_count(&self) -> usize {
        self.starts.len()
    }
}

/// Timing and placement knobs shared by the generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOptions {
    pub time_limit: f64,
    pub replan_dt: f64,
    /// Circle radius of the antipodal exchange (clamped to fit the map).
    pub circle_radius: f64,
    /// Flight height of the circle.
    pub height: f64,
    /// Uniform jitter applied to each antipodal start and goal, horizontally.
    pub jitter: f64,
    /// Extra jitter along each agent's spoke, towards or away from the centre.
    pub radial_jitter: f64,
    /// Vertical jitter for antipodal placements.
    pub height_jitter: f64,
    pub max_attempts: usize,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            time_limit: 60.0,
            replan_dt: 0.1,
            circle_radius: 4.0,
            height: 1.0,
            jitter: 0.3,
            radial_jitter: 1.0,
            height_jitter: 0.2,
            max_attempts: 2000,
        }
    }
}

/// Minimum pairwise distance between starts (and between goals).
pub fn min_separation(config: &PlannerConfig) -> f64 {
    2.0 * config.agent_radius * config.theta.iter().cloned().fold(0.0, f64::max)
}

struct Placer<'a> {
    world: &'a World,
    sep: f64,
}

impl Placer<'_> {
    fn admissible(&self, p: &Point, others: &[Point]) -> bool {
        self.world.planning.is_free(p) && others.iter().all(|q| (p - q).norm() >= self.sep)
    }

    fn connected(&self, a: &Point, b: &Point) -> bool {
        self.world.component(a).is_some() && self.world.component(a) == self.world.component(b)
    }
}

/// Uniformly random free starts and goals, mutually separated and connected
/// through the planning grid.
pub fn generate_random_scenario(
    map: &VoxelGrid,
    agents: usize,
    seed: u64,
    config: &PlannerConfig,
    options: &ScenarioOptions,
) -> Result<Scenario, ScenarioError> {
    if agents == 0 {
        return Err(ScenarioError::NoAgents);
    }
    let world = World::new(map.clone(), config);
    let placer = Placer { world: &world, sep: min_separation(config) };
    let bounds = map.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| {
        Point::from_fn(|a, _| rng.gen_range(bounds.min[a]..bounds.max[a]))
    };
    let mut starts = Vec::with_capacity(agents);
    let mut goals = Vec::with_capacity(agents);
    let mut attempts = 0;
    while starts.len() < agents {
        attempts += 1;
        if attempts > options.max_attempts * agents {
            return Err(ScenarioError::Placement { agents, attempts });
        }
        let s = sample(&mut rng);
        let g = sample(&mut rng);
        if placer.admissible(&s, &starts) && placer.admissible(&g, &goals) && placer.connected(&s, &g) {
            starts.push(s);
            goals.push(g);
        }
    }
    Ok(Scenario {
        map: map.clone(),
        starts,
        goals,
        seed,
        time_limit: options.time_limit,
        replan_dt: options.replan_dt,
    })
}

/// Agents evenly spaced on a horizontal circle around the map centre, each
/// flying to the diametrically opposite point. The circle's rotation and a
/// per-point jitter (mostly inwards along the spoke) are drawn from the seed; placements that are not
/// free, separated and connected are redrawn.
pub fn generate_antipodal_scenario(
    map: &VoxelGrid,
    agents: usize,
    seed: u64,
    config: &PlannerConfig,
    options: &ScenarioOptions,
) -> Result<Scenario, ScenarioError> {
    if agents == 0 {
        return Err(ScenarioError::NoAgents);
    }
    let world = World::new(map.clone(), config);
    let placer = Placer { world: &world, sep: min_separation(config) };
    let bounds = map.bounds();
    let centre = (bounds.min + bounds.max) / 2.0;
    let half = bounds.extent() / 2.0;
    let margin = config.planning_inflation() + options.jitter + map.resolution();
    let radius = options.circle_radius.min(half.x - margin).min(half.y - margin).max(0.0);
    let height = options.height.clamp(bounds.min.z, bounds.max.z);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    'rotation: loop {
        let rotation = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut starts: Vec<Point> = Vec::with_capacity(agents);
        let mut goals: Vec<Point> = Vec::with_capacity(agents);
        for i in 0..agents {
            let phi = rotation + std::f64::consts::TAU * i as f64 / agents as f64;
            let dir = Point::new(phi.cos(), phi.sin(), 0.0);
            let mut placed = false;
            for _ in 0..options.max_attempts {
                attempts += 1;
                let jitter = |rng: &mut ChaCha8Rng| {
                    Point::new(
                        rng.gen_range(-options.jitter..=options.jitter),
                        rng.gen_range(-options.jitter..=options.jitter),
                        rng.gen_range(-options.height_jitter..=options.height_jitter),
                    )
                };
                let rs = radius - rng.gen_range(0.0..=options.radial_jitter);
                let rg = radius - rng.gen_range(0.0..=options.radial_jitter);
                let s = Point::new(centre.x, centre.y, height) + dir * rs + jitter(&mut rng);
                let g = Point::new(centre.x, centre.y, height) - dir * rg + jitter(&mut rng);
                if placer.admissible(&s, &starts) && placer.admissible(&g, &goals) && placer.connected(&s, &g) {
                    starts.push(s);
                    goals.push(g);
                    placed = true;
                    break;
                }
            }
            if !placed {
                if attempts > options.max_attempts * agents * 4 {
                    return Err(ScenarioError::Placement { agents, attempts });
                }
                continue 'rotation;
            }
        }
        return Ok(Scenario {
            map: map.clone(),
            starts,
            goals,
            seed,
            time_limit: options.time_limit,
            replan_dt: options.replan_dt,
        });
    }
}
