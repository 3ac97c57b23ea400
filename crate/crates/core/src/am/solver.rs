//! Coefficient update, multiplier update and the alternating loop.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::polar::{direction, family_vectors, init_polar, step1_update_angles, step2_update_distances, PolarVars, WarmStart};
use super::problem::{Family, ProblemInstance};
use super::{SolveDiagnostics, TrajectoryPlan};
use crate::voxelmap::{MapError, VoxelGrid};

/// Diagonal regularisation of the quadratic block, keeping the KKT system
/// nonsingular when both cost weights are zero.
pub const TIKHONOV: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("singular KKT system")]
    Singular,
    #[error("non-finite value at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("clearance query failed: {0}")]
    Map(#[from] MapError),
}

/// Per-axis accumulation of `Aᵀ v` for a stacked vector `v` given family by
/// family as `(family, per-sample 3-vectors)`.
fn transpose_apply<'a>(
    problem: &ProblemInstance<'_>,
    rows: impl Iterator<Item = (Family, &'a [nalgebra::Vector3<f64>])>,
) -> [DVector<f64>; 3] {
    let kc = problem.planner.constrained_samples();
    let mut r_vel = [DVector::zeros(kc), DVector::zeros(kc), DVector::zeros(kc)];
    let mut r_acc = r_vel.clone();
    let mut r_pos = r_vel.clone();
    for (family, vals) in rows {
        for a in 0..3 {
            let s = problem.family_matrix(family).1[a];
            let target = match family {
                Family::Velocity => &mut r_vel[a],
                Family::Acceleration => &mut r_acc[a],
                Family::Static | Family::Inter(_) => &mut r_pos[a],
            };
            for (k, v) in vals.iter().enumerate() {
                target[k] += s * v[a];
            }
        }
    }
    let p = problem.planner;
    std::array::from_fn(|a| p.vel.tr_mul(&r_vel[a]) + p.acc.tr_mul(&r_acc[a]) + p.pos.tr_mul(&r_pos[a]))
}

/// Targets `b` per family and sample, as 3-vectors.
fn rhs_vectors(problem: &ProblemInstance<'_>, polar: &PolarVars) -> Vec<Vec<nalgebra::Vector3<f64>>> {
    polar
        .blocks
        .iter()
        .map(|blk| {
            (0..blk.d.len())
                .map(|k| direction(blk.alpha[k], blk.beta[k]) * blk.d[k] + problem.family_offset(blk.family, k))
                .collect()
        })
        .collect()
}

/// Constraint residual `A ζ − b` per family and sample.
pub fn constraint_residual(problem: &ProblemInstance<'_>, zeta: &DVector<f64>, polar: &PolarVars) -> Vec<Vec<nalgebra::Vector3<f64>>> {
    let vs = family_vectors(problem, zeta);
    vs.into_iter()
        .zip(&polar.blocks)
        .map(|(v, blk)| {
            v.iter()
                .enumerate()
                .map(|(k, vk)| vk - direction(blk.alpha[k], blk.beta[k]) * blk.d[k])
                .collect()
        })
        .collect()
}

pub fn residual_max_norm(residual: &[Vec<nalgebra::Vector3<f64>>]) -> f64 {
    residual.iter().flatten().map(|e| e.amax()).fold(0.0, f64::max)
}

/// The relaxed objective `½ζᵀQζ + qᵀζ − λᵀζ + ρ/2 ‖Aζ − b‖²`.
pub fn relaxed_objective(
    problem: &ProblemInstance<'_>,
    zeta: &DVector<f64>,
    polar: &PolarVars,
    lambda: &DVector<f64>,
    rho: f64,
) -> f64 {
    let e = constraint_residual(problem, zeta, polar);
    let sq: f64 = e.iter().flatten().map(|v| v.norm_squared()).sum();
    problem.cost(zeta) - lambda.dot(zeta) + 0.5 * rho * sq
}

/// Per-axis KKT matrix `[H Cᵀ; C 0]` of the coefficient update.
pub fn kkt_matrix(problem: &ProblemInstance<'_>, axis: usize, rho: f64) -> DMatrix<f64> {
    let p = problem.planner;
    let nc = p.n_coeffs();
    let n_inter = problem.neighbors.len() as f64;
    let s = problem.scale[axis];
    let w2 = p.config.kinematic_weight.powi(2);
    let h = &p.cost_block
        + (&p.gram_vel + &p.gram_acc) * (w2 * rho)
        + &p.gram_pos * (rho * (1.0 + n_inter * s * s))
        + DMatrix::identity(nc, nc) * TIKHONOV;
    let mut kkt = DMatrix::zeros(nc + 3, nc + 3);
    kkt.view_mut((0, 0), (nc, nc)).copy_from(&h);
    kkt.view_mut((nc, 0), (3, nc)).copy_from(&p.init_block);
    kkt.view_mut((0, nc), (nc, 3)).copy_from(&p.init_block.transpose());
    kkt
}

/// Per-axis right-hand side of the KKT system.
pub fn kkt_rhs(problem: &ProblemInstance<'_>, polar: &PolarVars, lambda: &DVector<f64>, rho: f64) -> [DVector<f64>; 3] {
    let nc = problem.planner.n_coeffs();
    let b = rhs_vectors(problem, polar);
    let atb = transpose_apply(problem, polar.blocks.iter().zip(&b).map(|(blk, v)| (blk.family, v.as_slice())));
    let s = &problem.snapshot;
    std::array::from_fn(|a| {
        let mut r = DVector::zeros(nc + 3);
        let top = -problem.linear.rows(a * nc, nc) + lambda.rows(a * nc, nc) + &atb[a] * rho;
        r.rows_mut(0, nc).copy_from(&top);
        r[nc] = s.position[a];
        r[nc + 1] = s.velocity[a];
        r[nc + 2] = s.acceleration[a];
        r
    })
}

/// Step 3: minimises the relaxed objective over the coefficients subject to
/// the initial conditions. The three axes decouple into small KKT systems.
pub fn step3_solve_trajectory(
    problem: &ProblemInstance<'_>,
    polar: &PolarVars,
    lambda: &DVector<f64>,
    rho: f64,
) -> Result<DVector<f64>, SolveError> {
    let nc = problem.planner.n_coeffs();
    let rhs = kkt_rhs(problem, polar, lambda, rho);
    let mut zeta = DVector::zeros(3 * nc);
    for a in 0..3 {
        let kkt = kkt_matrix(problem, a, rho);
        let lu = kkt.clone().lu();
        let mut x = lu.solve(&rhs[a]).ok_or(SolveError::Singular)?;
        // One round of iterative refinement.
        let r = &rhs[a] - &kkt * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        zeta.rows_mut(a * nc, nc).copy_from(&x.rows(0, nc));
    }
    Ok(zeta)
}

/// Step 4: `λ ← λ − ρ Aᵀ (A ζ − b)`.
pub fn step4_update_multiplier(
    problem: &ProblemInstance<'_>,
    zeta: &DVector<f64>,
    polar: &PolarVars,
    lambda: &DVector<f64>,
    rho: f64,
) -> DVector<f64> {
    let e = constraint_residual(problem, zeta, polar);
    multiplier_from_residual(problem, &e, polar, lambda, rho)
}

fn multiplier_from_residual(
    problem: &ProblemInstance<'_>,
    e: &[Vec<nalgebra::Vector3<f64>>],
    polar: &PolarVars,
    lambda: &DVector<f64>,
    rho: f64,
) -> DVector<f64> {
    let nc = problem.planner.n_coeffs();
    let ate = transpose_apply(problem, polar.blocks.iter().zip(e).map(|(blk, v)| (blk.family, v.as_slice())));
    let mut out = lambda.clone();
    for a in 0..3 {
        let mut seg = out.rows_mut(a * nc, nc);
        seg -= &ate[a] * rho;
    }
    out
}

/// Runs the alternating loop: coefficients, then angles, then distances,
/// then the multiplier, growing the penalty each round until the constraint
/// violation drops below `residual_tol` or `max_iters` is reached.
/// Non-converged plans are returned with `converged = false`.
pub fn solve(problem: &ProblemInstance<'_>, grid: &VoxelGrid, warm: WarmStart<'_>) -> Result<TrajectoryPlan, SolveError> {
    let started = Instant::now();
    let cfg = problem.config();
    let nvars = problem.planner.n_vars();
    let mut polar = init_polar(problem, grid, warm)?;
    let mut lambda = DVector::zeros(nvars);
    let mut rho = cfg.rho_init;
    let mut zeta = DVector::zeros(nvars);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=cfg.max_iters {
        iterations = it;
        zeta = step3_solve_trajectory(problem, &polar, &lambda, rho)?;
        if zeta.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite { iteration: it });
        }
        step1_update_angles(problem, &zeta, &mut polar);
        step2_update_distances(problem, &zeta, &mut polar, grid)?;
        let e = constraint_residual(problem, &zeta, &polar);
        residual = residual_max_norm(&e);
        if !residual.is_finite() {
            return Err(SolveError::NonFinite { iteration: it });
        }
        if residual < cfg.residual_tol {
            converged = true;
            break;
        }
        lambda = multiplier_from_residual(problem, &e, &polar, &lambda, rho);
        rho += cfg.rho_step;
    }
    let diagnostics = SolveDiagnostics {
        iterations,
        residual,
        converged,
        solve_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok(TrajectoryPlan::from_coeffs(problem.basis(), zeta, lambda, diagnostics))
}
