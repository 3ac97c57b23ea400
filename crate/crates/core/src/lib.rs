//! Distributed quadrotor swarm trajectory planning on voxel occupancy maps.
//!
//! Each agent plans a Bernstein-polynomial trajectory over a receding horizon
//! by alternating between closed-form angle and distance updates of a polar
//! constraint reformulation and an equality-constrained QP for the polynomial
//! coefficients. Obstacle avoidance comes from directional clearances ray-cast
//! from an attractor point picked off an A* guiding path; inter-agent
//! avoidance uses the trajectories neighbours shared in the previous round.
//!
//! Modules, bottom up:
//!
//! - [`voxelmap`]: occupancy grid, ray casting, clearance and visibility.
//! - [`bernstein`]: basis matrices and trajectory sampling.
//! - [`gridplanner`]: 26-connected A* and a cached cost-to-go field.
//! - [`guidance`]: attractor and intermediate-goal selection.
//! - [`am`]: the per-agent optimizer.
//! - [`sim`]: scenario generation, synchronous mission loop, metrics, logs.
//! - [`mapgen`]: synthetic maps.

pub mod am;
pub mod bernstein;
pub mod gridplanner;
pub mod guidance;
pub mod mapgen;
pub mod parallel;
pub mod sim;
pub mod voxelmap;

pub use am::{PlannerConfig, TrajectoryPlan};
pub use bernstein::BasisSet;
pub use parallel::Execution;
pub use voxelmap::{Aabb, Point, VoxelGrid};
