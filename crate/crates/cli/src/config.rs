//! TOML run configuration. Every table and key is optional; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voxswarm::am::PlannerConfig;
use voxswarm::mapgen::{self, ObstacleShape};
use voxswarm::sim::{MissionOptions, ScenarioOptions};
use voxswarm::voxelmap::{MapError, VoxelGrid};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory; `--out` overrides.
    pub out: Option<PathBuf>,
    /// Seed for map generation and scenario placement; `--seed` overrides.
    pub seed: u64,
    pub map: MapSpec,
    pub planner: PlannerConfig,
    pub scenario: ScenarioSpec,
    pub mission: MissionOptions,
    pub plan: PlanSpec,
    pub bench: BenchSpec,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Empty,
    RandomBoxes,
    #[default]
    RandomRoom,
    /// Load `path`.
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSpec {
    pub kind: MapKind,
    /// Extent in metres, anchored at the origin.
    pub size: [f64; 3],
    pub resolution: f64,
    /// Target occupied fraction for `random_room`.
    pub occupancy: f64,
    /// Box count for `random_boxes`.
    pub count: usize,
    pub path: Option<PathBuf>,
    pub shape: ObstacleShape,
}

impl Default for MapSpec {
    fn default() -> Self {
        Self {
            kind: MapKind::RandomRoom,
            size: [10.0, 10.0, 2.0],
            resolution: 0.1,
            occupancy: 0.2,
            count: 20,
            path: None,
            shape: ObstacleShape::default(),
        }
    }
}

impl MapSpec {
    pub fn build(&self, seed: u64) -> Result<VoxelGrid, MapError> {
        match self.kind {
            MapKind::Empty => mapgen::empty(self.size, self.resolution),
            MapKind::RandomBoxes => Ok(mapgen::random_boxes(self.size, self.resolution, self.count, seed, &self.shape)?.0),
            MapKind::RandomRoom => Ok(mapgen::random_room(self.size, self.resolution, self.occupancy, seed, &self.shape)?.0),
            MapKind::File => match &self.path {
                Some(p) => VoxelGrid::load(p),
                None => Err(MapError::Parse { line: 0, msg: "map kind `file` needs `path`".into() }),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    Antipodal,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub agents: usize,
    pub layout: Layout,
    pub time_limit: f64,
    pub replan_dt: f64,
    pub circle_radius: f64,
    pub height: f64,
    pub jitter: f64,
    pub radial_jitter: f64,
    pub height_jitter: f64,
    pub max_attempts: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        let o = ScenarioOptions::default();
        Self {
            agents: 8,
            layout: Layout::Antipodal,
            time_limit: o.time_limit,
            replan_dt: o.replan_dt,
            circle_radius: o.circle_radius,
            height: o.height,
            jitter: o.jitter,
            radial_jitter: o.radial_jitter,
            height_jitter: o.height_jitter,
            max_attempts: o.max_attempts,
        }
    }
}

impl ScenarioSpec {
    pub fn options(&self) -> ScenarioOptions {
        ScenarioOptions {
            time_limit: self.time_limit,
            replan_dt: self.replan_dt,
            circle_radius: self.circle_radius,
            height: self.height,
            jitter: self.jitter,
            radial_jitter: self.radial_jitter,
            height_jitter: self.height_jitter,
            max_attempts: self.max_attempts,
        }
    }
}

/// Single-agent planning query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSpec {
    pub start: [f64; 3],
    pub goal: [f64; 3],
}

impl Default for PlanSpec {
    fn default() -> Self {
        Self { start: [1.0, 1.0, 1.0], goal: [2.0, 1.0, 1.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self { sizes: vec![2, 4, 8], seeds: (0..5).collect() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.planner.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}
