//! Attractor and intermediate-goal selection along a guiding path.

use crate::gridplanner::GridPath;
use crate::voxelmap::{Point, VoxelGrid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceResult {
    pub attractor: Point,
    pub intermediate_goal: Point,
    /// Path index of the attractor; `None` when the current position was used.
    pub attractor_index: Option<usize>,
    pub goal_index: Option<usize>,
}

fn visible(grid: &VoxelGrid, a: &Point, b: &Point, radius: f64) -> bool {
    grid.is_visible(a, b, radius).unwrap_or(false)
}

/// Last path point visible from `current`, scanning from the end. Falls back
/// to `current` itself when nothing is visible.
pub fn select_attractor(path: &GridPath, current: &Point, grid: &VoxelGrid, agent_radius: f64) -> (Point, Option<usize>) {
    for (i, p) in path.points.iter().enumerate().rev() {
        if visible(grid, current, p, agent_radius) {
            return (*p, Some(i));
        }
    }
    (*current, None)
}

/// Last path point at or after `attractor_index` that is visible from the
/// attractor. With no attractor index the scan covers the whole path; if
/// nothing qualifies the attractor itself is returned.
pub fn select_intermediate_goal(
    path: &GridPath,
    attractor: &Point,
    attractor_index: Option<usize>,
    grid: &VoxelGrid,
    agent_radius: f64,
) -> (Point, Option<usize>) {
    let from = attractor_index.unwrap_or(0);
    for i in (from..path.len()).rev() {
        let p = &path.points[i];
        if Some(i) == attractor_index || visible(grid, attractor, p, agent_radius) {
            return (*p, Some(i));
        }
    }
    (*attractor, attractor_index)
}

/// Both selections in sequence.
pub fn select(path: &GridPath, current: &Point, grid: &VoxelGrid, agent_radius: f64) -> GuidanceResult {
    let (attractor, attractor_index) = select_attractor(path, current, grid, agent_radius);
    let (intermediate_goal, goal_index) = select_intermediate_goal(path, &attractor, attractor_index, grid, agent_radius);
    GuidanceResult { attractor, intermediate_goal, attractor_index, goal_index }
}
