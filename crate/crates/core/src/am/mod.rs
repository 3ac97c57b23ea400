//! Per-agent trajectory optimizer.
//!
//! The kinematic, obstacle and inter-agent constraints are written in polar
//! form (`v = d ω(α, β)` with `d` bounded) and the resulting problem is solved
//! by alternating exact minimisation over the coefficients, the angles and
//! the distances, with a multiplier update and a growing penalty.

mod config;
pub mod polar;
mod problem;
pub mod solver;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use config::{ConfigError, PlannerConfig};
pub use polar::{init_polar, step1_update_angles, step2_update_distances, PolarBlock, PolarVars, WarmStart};
pub use problem::{AgentSnapshot, Family, NeighborTrajectory, Planner, ProblemError, ProblemInstance};
pub use solver::{relaxed_objective, solve, step3_solve_trajectory, step4_update_multiplier, SolveError};

use crate::bernstein::BasisSet;
use crate::voxelmap::Point;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// Max-norm constraint violation at exit.
    pub residual: f64,
    pub converged: bool,
    pub solve_ms: f64,
}

/// Optimised trajectory with its samples and solver diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPlan {
    /// x, y and z Bernstein coefficients, stacked.
    pub coeffs: DVector<f64>,
    pub positions: Vec<Point>,
    pub velocities: Vec<Point>,
    pub accelerations: Vec<Point>,
    pub lambda: DVector<f64>,
    pub diagnostics: SolveDiagnostics,
}

impl TrajectoryPlan {
    pub fn from_coeffs(basis: &BasisSet, coeffs: DVector<f64>, lambda: DVector<f64>, diagnostics: SolveDiagnostics) -> Self {
        let sample = |q| basis.sample(&coeffs, q).expect("coefficient count matches basis");
        Self {
            positions: sample(0),
            velocities: sample(1),
            accelerations: sample(2),
            coeffs,
            lambda,
            diagnostics,
        }
    }

    /// Stationary plan at `p`.
    pub fn hold(basis: &BasisSet, p: &Point) -> Self {
        let diag = SolveDiagnostics { iterations: 0, residual: 0.0, converged: true, solve_ms: 0.0 };
        Self::from_coeffs(basis, basis.constant(p), DVector::zeros(3 * basis.n_coeffs()), diag)
    }

    /// Position, velocity and acceleration at time `t` (clamped to the horizon).
    pub fn state_at(&self, basis: &BasisSet, t: f64) -> (Point, Point, Point) {
        let at = |q| basis.eval(&self.coeffs, t, q).expect("coefficient count matches basis");
        (at(0), at(1), at(2))
    }

    /// Positions at the basis sample times shifted by `shift` seconds.
    pub fn positions_shifted(&self, basis: &BasisSet, shift: f64) -> Vec<Point> {
        basis
            .sample_times()
            .iter()
            .map(|t| basis.eval(&self.coeffs, t + shift, 0).expect("coefficient count matches basis"))
            .collect()
    }
}
