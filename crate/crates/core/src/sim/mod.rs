//! Synchronous multi-agent mission simulation.
//!
//! Every round, each agent plans against the trajectories its neighbours
//! shared in the previous round; all agents then execute the first
//! `replan_dt` seconds of their new plan with perfect tracking.

mod log;
mod mission;
mod scenario;

pub use log::{write_jsonl, LogRecord};
pub use mission::{
    advance, run_mission, run_mission_with, AgentStep, Mission, MissionMetrics, MissionOptions, MissionOutcome, SimError, SolveTimeStats,
    SwarmState,
};
pub use scenario::{
    generate_antipodal_scenario, generate_random_scenario, min_separation, Scenario, ScenarioError, ScenarioOptions,
};

use crate::am::PlannerConfig;
use crate::gridplanner::connected_components;
use crate::voxelmap::{DistanceField, Point, VoxelGrid};

/// A raw map plus everything derived from it for planning and scoring.
#[derive(Clone, Debug)]
pub struct World {
    pub raw: VoxelGrid,
    /// Raw obstacles grown by the planning inflation, with a border of the
    /// same width. Guiding paths, visibility and clearances use this grid.
    pub planning: VoxelGrid,
    pub distance: DistanceField,
    components: Vec<u32>,
}

impl World {
    pub fn new(raw: VoxelGrid, config: &PlannerConfig) -> Self {
        let infl = config.planning_inflation();
        let planning = raw.inflate(infl).occupy_border(infl);
        let distance = DistanceField::new(&raw);
        let components = connected_components(&planning);
        Self { raw, planning, distance, components }
    }

    /// Free-space component of the planning grid containing `p`.
    pub fn component(&self, p: &Point) -> Option<u32> {
        let idx = self.planning.voxel_of(p)?;
        let c = self.components[self.planning.linear(idx)];
        (c != u32::MAX).then_some(c)
    }

    /// Distance from `p` to the nearest raw obstacle or the map boundary.
    pub fn clearance(&self, p: &Point) -> f64 {
        let b = self.raw.bounds();
        let mut wall = f64::INFINITY;
        for a in 0..3 {
            wall = wall.min(p[a] - b.min[a]).min(b.max[a] - p[a]);
        }
        self.distance.nearest_obstacle_distance(p).min(wall)
    }
}
