//! Problem data for one agent and one planning step.
//!
//! The decision vector stacks the x, y and z coefficient vectors. Every
//! constraint family acts on one axis at a time through the same sample
//! matrix, so the stacked constraint matrix is block diagonal per axis and
//! its Gram matrix reduces to a few precomputed `(n+1) × (n+1)` blocks.
//! Sample 0 is pinned by the initial-condition system, so the families only
//! constrain samples `1..K`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, PlannerConfig};
use crate::bernstein::{BasisError, BasisSet};
use crate::guidance::GuidanceResult;
use crate::voxelmap::Point;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("neighbour {agent_id} shares {got} samples, expected {expected}")]
    NeighborLength { agent_id: usize, got: usize, expected: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Current state of an agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub position: Point,
    pub velocity: Point,
    pub acceleration: Point,
    pub final_goal: Point,
}

impl AgentSnapshot {
    pub fn at_rest(position: Point, final_goal: Point) -> Self {
        Self { position, velocity: Point::zeros(), acceleration: Point::zeros(), final_goal }
    }

    fn is_finite(&self) -> bool {
        [self.position, self.velocity, self.acceleration, self.final_goal]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Positions a neighbour shared, one per horizon sample.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborTrajectory {
    pub agent_id: usize,
    pub positions: Vec<Point>,
}

/// Constraint family of a block of rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Velocity,
    Acceleration,
    Static,
    /// Separation from the neighbour at this index of the problem's neighbour list.
    Inter(usize),
}

/// Agent-independent planner data: configuration, basis and the matrices
/// derived from them. Build once and share across agents.
#[derive(Clone, Debug)]
pub struct Planner {
    pub config: PlannerConfig,
    pub basis: BasisSet,
    // Rows 1..K of the position, velocity and acceleration bases.
    pub(crate) pos: DMatrix<f64>,
    pub(crate) vel: DMatrix<f64>,
    pub(crate) acc: DMatrix<f64>,
    pub(crate) gram_pos: DMatrix<f64>,
    pub(crate) gram_vel: DMatrix<f64>,
    pub(crate) gram_acc: DMatrix<f64>,
    /// Per-axis quadratic cost block.
    pub(crate) cost_block: DMatrix<f64>,
    /// Sum of the position-basis rows in the goal window.
    pub(crate) goal_row_sum: DVector<f64>,
    /// Initial-condition rows for one axis: position, velocity, acceleration at t = 0.
    pub(crate) init_block: DMatrix<f64>,
}

impl Planner {
    pub fn new(config: PlannerConfig) -> Result<Self, ProblemError> {
        config.validate()?;
        let basis = BasisSet::new(config.degree, config.horizon, config.duration)?;
        let k = config.horizon;
        let nc = basis.n_coeffs();
        let tail = |m: &DMatrix<f64>| m.rows(1, k - 1).into_owned();
        let pos = tail(basis.matrix(0)?);
        let vel = tail(basis.matrix(1)?);
        let acc = tail(basis.matrix(2)?);
        let gram_pos = pos.transpose() * &pos;
        let gram_vel = vel.transpose() * &vel;
        let gram_acc = acc.transpose() * &acc;

        let w = basis.matrix(0)?;
        let goal_rows = w.rows(k - config.goal_steps, config.goal_steps);
        let smooth = basis.matrix(config.smoothness_order)?;
        let cost_block = 2.0 * config.goal_weight * goal_rows.transpose() * goal_rows
            + 2.0 * config.smoothness_weight * smooth.transpose() * smooth;
        let goal_row_sum = goal_rows.row_sum().transpose();

        let mut init_block = DMatrix::zeros(3, nc);
        for q in 0..3 {
            init_block.row_mut(q).copy_from(&basis.matrix(q)?.row(0));
        }
        Ok(Self {
            config,
            basis,
            pos,
            vel,
            acc,
            gram_pos,
            gram_vel,
            gram_acc,
            cost_block,
            goal_row_sum,
            init_block,
        })
    }

    pub fn n_coeffs(&self) -> usize {
        self.basis.n_coeffs()
    }

    /// Number of decision variables, `3 (n + 1)`.
    pub fn n_vars(&self) -> usize {
        3 * self.basis.n_coeffs()
    }

    /// Samples subject to the polar constraints (all but the first).
    pub fn constrained_samples(&self) -> usize {
        self.config.horizon - 1
    }

    /// Assembles the problem for one agent.
    pub fn build_problem(
        &self,
        snapshot: &AgentSnapshot,
        guidance: &GuidanceResult,
        neighbors: Vec<NeighborTrajectory>,
    ) -> Result<ProblemInstance<'_>, ProblemError> {
        if !snapshot.is_finite() {
            return Err(ProblemError::NonFinite("agent snapshot"));
        }
        if !(guidance.attractor.iter().chain(guidance.intermediate_goal.iter())).all(|v| v.is_finite()) {
            return Err(ProblemError::NonFinite("guidance"));
        }
        for nb in &neighbors {
            if nb.positions.len() != self.config.horizon {
                return Err(ProblemError::NeighborLength {
                    agent_id: nb.agent_id,
                    got: nb.positions.len(),
                    expected: self.config.horizon,
                });
            }
            if nb.positions.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(ProblemError::NonFinite("neighbour trajectory"));
            }
        }
        let nc = self.n_coeffs();
        let mut linear = DVector::zeros(3 * nc);
        let gw = self.config.goal_weight;
        for a in 0..3 {
            let seg = -2.0 * gw * guidance.intermediate_goal[a] * &self.goal_row_sum;
            linear.rows_mut(a * nc, nc).copy_from(&seg);
        }
        Ok(ProblemInstance {
            planner: self,
            snapshot: *snapshot,
            attractor: guidance.attractor,
            intermediate_goal: guidance.intermediate_goal,
            neighbors,
            linear,
            scale: self.config.inter_agent_scale(),
        })
    }
}

/// One agent's problem at one planning step.
#[derive(Clone, Debug)]
pub struct ProblemInstance<'p> {
    pub planner: &'p Planner,
    pub snapshot: AgentSnapshot,
    pub attractor: Point,
    pub intermediate_goal: Point,
    pub neighbors: Vec<NeighborTrajectory>,
    /// Linear cost term.
    pub linear: DVector<f64>,
    /// Inter-agent ellipsoid scaling per axis.
    pub scale: [f64; 3],
}

impl<'p> ProblemInstance<'p> {
    pub fn config(&self) -> &PlannerConfig {
        &self.planner.config
    }

    pub fn basis(&self) -> &BasisSet {
        &self.planner.basis
    }

    pub fn families(&self) -> Vec<Family> {
        let mut f = vec![Family::Velocity, Family::Acceleration, Family::Static];
        f.extend((0..self.neighbors.len()).map(Family::Inter));
        f
    }

    /// Full quadratic cost matrix (block diagonal over axes).
    pub fn cost_matrix(&self) -> DMatrix<f64> {
        let nc = self.planner.n_coeffs();
        let mut q = DMatrix::zeros(3 * nc, 3 * nc);
        for a in 0..3 {
            q.view_mut((a * nc, a * nc), (nc, nc)).copy_from(&self.planner.cost_block);
        }
        q
    }

    /// `½ ζᵀQζ + qᵀζ`.
    pub fn cost(&self, zeta: &DVector<f64>) -> f64 {
        let nc = self.planner.n_coeffs();
        let mut total = self.linear.dot(zeta);
        for a in 0..3 {
            let c = zeta.rows(a * nc, nc);
            total += 0.5 * (c.transpose() * &self.planner.cost_block * c)[(0, 0)];
        }
        total
    }

    /// Sample matrix (rows 1..K) and per-axis scale for a family.
    pub(crate) fn family_matrix(&self, f: Family) -> (&DMatrix<f64>, [f64; 3]) {
        match f {
            Family::Velocity => (&self.planner.vel, [self.config().kinematic_weight; 3]),
            Family::Acceleration => (&self.planner.acc, [self.config().kinematic_weight; 3]),
            Family::Static => (&self.planner.pos, [1.0; 3]),
            Family::Inter(_) => (&self.planner.pos, self.scale),
        }
    }

    /// Constant offset such that a family's residual vector at sample `k`
    /// (0-based over the constrained samples) is `scale ⊙ (M c) - offset`.
    pub(crate) fn family_offset(&self, f: Family, k: usize) -> Point {
        match f {
            Family::Velocity => Point::zeros(),
            Family::Acceleration => Point::new(0.0, 0.0, -self.config().kinematic_weight * self.config().gravity),
            Family::Static => self.attractor,
            Family::Inter(j) => {
                let xi = self.neighbors[j].positions[k + 1];
                Point::new(self.scale[0] * xi.x, self.scale[1] * xi.y, self.scale[2] * xi.z)
            }
        }
    }

    /// Explicit stacked constraint matrix. Rows are ordered family, axis,
    /// sample. Used for verification; the solver works with the structured form.
    pub fn constraint_matrix(&self) -> DMatrix<f64> {
        let families = self.families();
        let kc = self.planner.constrained_samples();
        let nc = self.planner.n_coeffs();
        let mut a_mat = DMatrix::zeros(families.len() * 3 * kc, 3 * nc);
        for (fi, f) in families.iter().enumerate() {
            let (m, s) = self.family_matrix(*f);
            for a in 0..3 {
                let r0 = (fi * 3 + a) * kc;
                a_mat.view_mut((r0, a * nc), (kc, nc)).copy_from(&(m * s[a]));
            }
        }
        a_mat
    }

    /// Initial-condition system `C ζ = c` pinning position, velocity and
    /// acceleration at t = 0. Rows are ordered axis, derivative.
    pub fn init_system(&self) -> (DMatrix<f64>, DVector<f64>) {
        let nc = self.planner.n_coeffs();
        let mut c = DMatrix::zeros(9, 3 * nc);
        let mut rhs = DVector::zeros(9);
        let s = &self.snapshot;
        for a in 0..3 {
            c.view_mut((3 * a, a * nc), (3, nc)).copy_from(&self.planner.init_block);
            rhs[3 * a] = s.position[a];
            rhs[3 * a + 1] = s.velocity[a];
            rhs[3 * a + 2] = s.acceleration[a];
        }
        (c, rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn guidance_at(p: Point) -> GuidanceResult {
        GuidanceResult { attractor: p, intermediate_goal: p, attractor_index: None, goal_index: None }
    }

    #[test]
    fn linear_term_only_on_goal_window() {
        let mut cfg = PlannerConfig::default();
        cfg.smoothness_weight = 0.0;
        cfg.goal_steps = 1;
        let planner = Planner::new(cfg).unwrap();
        let snap = AgentSnapshot::at_rest(Point::new(1.0, 1.0, 1.0), Point::zeros());
        let mut g = guidance_at(Point::new(1.0, 1.0, 1.0));
        g.intermediate_goal = Point::new(2.0, -1.0, 0.5);
        let p = planner.build_problem(&snap, &g, vec![]).unwrap();
        let nc = planner.n_coeffs();
        // The last sample only touches the last Bernstein coefficient.
        for a in 0..3 {
            for m in 0..nc - 1 {
                assert_eq!(p.linear[a * nc + m], 0.0);
            }
            assert!(p.linear[a * nc + nc - 1] != 0.0);
        }
    }

    #[test]
    fn three_families_without_neighbors() {
        let planner = Planner::new(PlannerConfig::default()).unwrap();
        let snap = AgentSnapshot::at_rest(Point::zeros(), Point::zeros());
        let p = planner.build_problem(&snap, &guidance_at(Point::zeros()), vec![]).unwrap();
        assert_eq!(p.families().len(), 3);
        assert_eq!(p.constraint_matrix().nrows(), 3 * 3 * 29);
        let (c, rhs) = p.init_system();
        assert_eq!(c.nrows(), 9);
        assert_eq!(rhs.len(), 9);
    }

    #[test]
    fn rejects_short_neighbor() {
        let planner = Planner::new(PlannerConfig::default()).unwrap();
        let snap = AgentSnapshot::at_rest(Point::zeros(), Point::zeros());
        let nb = NeighborTrajectory { agent_id: 3, positions: vec![Point::zeros(); 4] };
        assert!(matches!(
            planner.build_problem(&snap, &guidance_at(Point::zeros()), vec![nb]),
            Err(ProblemError::NeighborLength { agent_id: 3, .. })
        ));
    }

    #[test]
    fn cost_matches_explicit_form() {
        let planner = Planner::new(PlannerConfig::default()).unwrap();
        let snap = AgentSnapshot::at_rest(Point::zeros(), Point::zeros());
        let mut g = guidance_at(Point::zeros());
        g.intermediate_goal = Point::new(0.3, 0.2, 1.0);
        let p = planner.build_problem(&snap, &g, vec![]).unwrap();
        let z = DVector::from_fn(planner.n_vars(), |i, _| (i as f64).cos());
        let q = p.cost_matrix();
        let explicit = 0.5 * (z.transpose() * &q * &z)[(0, 0)] + p.linear.dot(&z);
        assert!((explicit - p.cost(&z)).abs() < 1e-9 * (1.0 + explicit.abs()));
    }
}
