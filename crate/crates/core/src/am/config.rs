use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("invalid planner config: {0}")]
pub struct ConfigError(pub String);

/// Planner parameters. Every field has a default; config files may override
/// any subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Weight of the squared distance to the intermediate goal over the
    /// trailing `goal_steps` samples.
    pub goal_weight: f64,
    pub smoothness_weight: f64,
    /// Derivative order penalised by the smoothness term (3 = jerk).
    pub smoothness_order: usize,
    /// Samples per horizon.
    pub horizon: usize,
    pub goal_steps: usize,
    /// Bernstein polynomial degree.
    pub degree: usize,
    /// Horizon length in seconds.
    pub duration: f64,
    pub v_max: f64,
    /// Bounds on the magnitude of commanded thrust acceleration.
    pub f_min: f64,
    pub f_max: f64,
    pub gravity: f64,
    pub agent_radius: f64,
    /// Extra radius used when planning against neighbours, absorbing the gap
    /// between shared and executed trajectories.
    pub inter_agent_margin: f64,
    /// Ellipsoid stretch per axis; z > 1 keeps agents out of each other's downwash.
    pub theta: [f64; 3],
    /// Row scale of the velocity and thrust families. Leaves the feasible set
    /// unchanged; larger values favour kinematic limits when the constraints
    /// cannot all be met.
    pub kinematic_weight: f64,
    pub rho_init: f64,
    pub rho_step: f64,
    pub max_iters: usize,
    /// Max-norm constraint violation that counts as converged.
    pub residual_tol: f64,
    pub neighbor_radius: f64,
    pub goal_tol: f64,
    /// Radius of the ray fan used for visibility queries on the (already
    /// inflated) planning grid.
    pub ray_radius: f64,
    /// Radius subtracted from directional clearances on the planning grid.
    pub clearance_radius: f64,
    /// Upper bound on directional clearance queries.
    pub clearance_range: f64,
    /// Obstacle inflation on top of `agent_radius` when building the planning grid.
    pub inflation_margin: f64,
    pub tangent_rays: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            goal_weight: 1.0,
            smoothness_weight: 0.01,
            smoothness_order: 3,
            horizon: 30,
            goal_steps: 5,
            degree: 8,
            duration: 3.0,
            v_max: 1.0,
            f_min: 5.0,
            f_max: 15.0,
            gravity: 9.81,
            agent_radius: 0.12,
            inter_agent_margin: 0.08,
            theta: [1.0, 1.0, 2.0],
            kinematic_weight: 2.0,
            rho_init: 0.1,
            rho_step: 1.0,
            max_iters: 300,
            residual_tol: 1e-2,
            neighbor_radius: 6.0,
            goal_tol: 0.1,
            ray_radius: 0.05,
            clearance_radius: 0.0,
            clearance_range: 12.0,
            inflation_margin: 0.1,
            tangent_rays: 4,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError(m));
        let positive = [
            ("duration", self.duration),
            ("v_max", self.v_max),
            ("f_min", self.f_min),
            ("agent_radius", self.agent_radius),
            ("rho_init", self.rho_init),
            ("kinematic_weight", self.kinematic_weight),
            ("residual_tol", self.residual_tol),
            ("clearance_range", self.clearance_range),
            ("goal_tol", self.goal_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("goal_weight", self.goal_weight),
            ("smoothness_weight", self.smoothness_weight),
            ("rho_step", self.rho_step),
            ("inter_agent_margin", self.inter_agent_margin),
            ("neighbor_radius", self.neighbor_radius),
            ("ray_radius", self.ray_radius),
            ("clearance_radius", self.clearance_radius),
            ("inflation_margin", self.inflation_margin),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.degree < 3 {
            return fail(format!("degree must be at least 3, got {}", self.degree));
        }
        if self.horizon < 2 {
            return fail(format!("horizon must be at least 2, got {}", self.horizon));
        }
        if self.goal_steps == 0 || self.goal_steps >= self.horizon {
            return fail(format!("goal_steps must be in 1..{}, got {}", self.horizon, self.goal_steps));
        }
        if self.smoothness_order > 3 {
            return fail(format!("smoothness_order must be at most 3, got {}", self.smoothness_order));
        }
        if !(self.f_min < self.gravity && self.gravity < self.f_max) {
            return fail(format!(
                "thrust bounds must bracket gravity: {} < {} < {}",
                self.f_min, self.gravity, self.f_max
            ));
        }
        if self.theta.iter().any(|t| !(*t > 0.0)) {
            return fail(format!("theta entries must be positive, got {:?}", self.theta));
        }
        if self.max_iters == 0 {
            return fail("max_iters must be at least 1".into());
        }
        Ok(())
    }

    /// Per-axis factors mapping a position offset into the sphere frame of the
    /// inter-agent ellipsoid.
    pub fn inter_agent_scale(&self) -> [f64; 3] {
        self.theta.map(|t| 1.0 / t)
    }

    /// Minimum scaled distance to a neighbour while planning.
    pub fn inter_agent_distance(&self) -> f64 {
        2.0 * (self.agent_radius + self.inter_agent_margin)
    }

    /// Same scaling without the planning margin, used to judge separation.
    pub fn separation_scale(&self) -> [f64; 3] {
        self.theta.map(|t| 1.0 / (2.0 * self.agent_radius * t))
    }

    /// Radius by which raw obstacles are grown to form the planning grid.
    pub fn planning_inflation(&self) -> f64 {
        self.agent_radius + self.inflation_margin
    }
}
