//! Angle and distance blocks of the polar constraint form, and their
//! closed-form updates.
//!
//! Each constraint family asks that a residual vector `v[k]` computed from the
//! trajectory equals `d[k] ω(α[k], β[k])` with `d[k]` in a family-specific
//! interval, where `ω` is the unit vector with azimuth `α` and polar angle `β`.

use nalgebra::DVector;

use super::problem::{Family, ProblemInstance};
use super::TrajectoryPlan;
use crate::voxelmap::{MapError, Point, VoxelGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct PolarBlock {
    pub family: Family,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub d: Vec<f64>,
    /// Directional clearance per sample; static family only.
    pub d_star: Option<Vec<f64>>,
}

/// Polar variables for every family of a problem, in [`ProblemInstance::families`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarVars {
    pub blocks: Vec<PolarBlock>,
}

impl PolarVars {
    pub fn block(&self, family: Family) -> Option<&PolarBlock> {
        self.blocks.iter().find(|b| b.family == family)
    }
}

/// Unit vector for azimuth `alpha` and polar angle `beta`.
#[inline]
pub fn direction(alpha: f64, beta: f64) -> Point {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    Point::new(sb * ca, sb * sa, cb)
}

/// Angles of `v`; the zero vector maps to `(0, 0)`.
#[inline]
pub fn angles_of(v: &Point) -> (f64, f64) {
    if v.x == 0.0 && v.y == 0.0 && v.z == 0.0 {
        return (0.0, 0.0);
    }
    (v.y.atan2(v.x), v.x.hypot(v.y).atan2(v.z))
}

/// Admissible interval for `d` in a family. `d_star` is only read for the
/// static family.
pub fn distance_bounds(problem: &ProblemInstance<'_>, family: Family, d_star: f64) -> (f64, f64) {
    let c = problem.config();
    match family {
        Family::Velocity => (0.0, c.kinematic_weight * c.v_max),
        Family::Acceleration => (c.kinematic_weight * c.f_min, c.kinematic_weight * c.f_max),
        Family::Static => (0.0, d_star),
        Family::Inter(_) => (c.inter_agent_distance(), f64::INFINITY),
    }
}

/// Residual vectors `v[k]` of every family for the trajectory `zeta`.
pub fn family_vectors(problem: &ProblemInstance<'_>, zeta: &DVector<f64>) -> Vec<Vec<Point>> {
    let nc = problem.planner.n_coeffs();
    let kc = problem.planner.constrained_samples();
    let mut cache: [Option<Vec<Point>>; 3] = [None, None, None];
    let mut sampled = |which: usize, m: &nalgebra::DMatrix<f64>| -> Vec<Point> {
        cache[which]
            .get_or_insert_with(|| {
                let axes: Vec<DVector<f64>> = (0..3).map(|a| m * zeta.rows(a * nc, nc)).collect();
                (0..kc).map(|k| Point::new(axes[0][k], axes[1][k], axes[2][k])).collect()
            })
            .clone()
    };
    problem
        .families()
        .into_iter()
        .map(|f| {
            let (m, s) = problem.family_matrix(f);
            let which = match f {
                Family::Velocity => 1,
                Family::Acceleration => 2,
                _ => 0,
            };
            let raw = sampled(which, m);
            raw.iter()
                .enumerate()
                .map(|(k, p)| Point::new(s[0] * p.x, s[1] * p.y, s[2] * p.z) - problem.family_offset(f, k))
                .collect()
        })
        .collect()
}

/// Family residual vectors from sampled states at the constrained samples.
fn vectors_from_samples(problem: &ProblemInstance<'_>, pos: &[Point], vel: &[Point], acc: &[Point]) -> Vec<Vec<Point>> {
    problem
        .families()
        .into_iter()
        .map(|f| {
            let (_, s) = problem.family_matrix(f);
            let src = match f {
                Family::Velocity => vel,
                Family::Acceleration => acc,
                _ => pos,
            };
            src.iter()
                .enumerate()
                .map(|(k, p)| Point::new(s[0] * p.x, s[1] * p.y, s[2] * p.z) - problem.family_offset(f, k))
                .collect()
        })
        .collect()
}

/// Step 1: closed-form angles. For fixed `d ≥ 0`, `‖v − d ω‖²` is minimised by
/// pointing `ω` along `v`.
pub fn step1_update_angles(problem: &ProblemInstance<'_>, zeta: &DVector<f64>, polar: &mut PolarVars) {
    let vs = family_vectors(problem, zeta);
    set_angles(polar, &vs);
}

fn set_angles(polar: &mut PolarVars, vs: &[Vec<Point>]) {
    for (block, v) in polar.blocks.iter_mut().zip(vs) {
        for (k, vk) in v.iter().enumerate() {
            let (a, b) = angles_of(vk);
            block.alpha[k] = a;
            block.beta[k] = b;
        }
    }
}

/// Range of directional clearance queries for this problem: far enough to
/// cover anything reachable within the horizon.
pub fn clearance_range(problem: &ProblemInstance<'_>) -> f64 {
    let c = problem.config();
    let reach = (problem.snapshot.position - problem.attractor).norm() + c.v_max * c.duration + 1.0;
    reach.min(c.clearance_range)
}

/// Recomputes the static family's clearances along its current directions.
pub fn refresh_clearance(problem: &ProblemInstance<'_>, polar: &mut PolarVars, grid: &VoxelGrid) -> Result<(), MapError> {
    let c = problem.config();
    let range = clearance_range(problem);
    let p_r = problem.attractor;
    for block in polar.blocks.iter_mut().filter(|b| b.family == Family::Static) {
        let ds = block.d_star.get_or_insert_with(|| vec![0.0; block.alpha.len()]);
        for k in 0..ds.len() {
            let dir = direction(block.alpha[k], block.beta[k]);
            ds[k] = grid.directional_clearance_with(&p_r, &(p_r + dir * range), c.clearance_radius, range, c.tangent_rays)?;
        }
    }
    Ok(())
}

/// Step 2: closed-form distances. The unconstrained minimiser of
/// `‖v − d ω‖²` is `v·ω`, clipped into the family interval. Static clearances
/// are refreshed along the directions from Step 1 first.
pub fn step2_update_distances(
    problem: &ProblemInstance<'_>,
    zeta: &DVector<f64>,
    polar: &mut PolarVars,
    grid: &VoxelGrid,
) -> Result<(), MapError> {
    let vs = family_vectors(problem, zeta);
    refresh_clearance(problem, polar, grid)?;
    set_distances(problem, polar, &vs);
    Ok(())
}

fn set_distances(problem: &ProblemInstance<'_>, polar: &mut PolarVars, vs: &[Vec<Point>]) {
    for (block, v) in polar.blocks.iter_mut().zip(vs) {
        for (k, vk) in v.iter().enumerate() {
            let omega = direction(block.alpha[k], block.beta[k]);
            let ds = block.d_star.as_ref().map_or(f64::INFINITY, |d| d[k]);
            let (lo, hi) = distance_bounds(problem, block.family, ds);
            block.d[k] = vk.dot(&omega).clamp(lo, hi);
        }
    }
}

/// How to seed the polar variables.
#[derive(Clone, Copy, Debug)]
pub enum WarmStart<'a> {
    /// Straight line from the current position to the intermediate goal.
    Cold,
    /// A previous plan, read `shift` seconds later than its own start.
    Previous { plan: &'a TrajectoryPlan, shift: f64 },
}

/// Initial polar variables from a guess trajectory via the Step 1 and Step 2
/// formulas, so every distance starts inside its family interval.
pub fn init_polar(problem: &ProblemInstance<'_>, grid: &VoxelGrid, warm: WarmStart<'_>) -> Result<PolarVars, MapError> {
    let basis = problem.basis();
    let times = &basis.sample_times()[1..];
    let (pos, vel, acc): (Vec<Point>, Vec<Point>, Vec<Point>) = match warm {
        WarmStart::Cold => {
            let coeffs = basis.line(&problem.snapshot.position, &problem.intermediate_goal);
            let sample = |q| basis.sample(&coeffs, q).expect("coefficient count matches basis")[1..].to_vec();
            (sample(0), sample(1), sample(2))
        }
        WarmStart::Previous { plan, shift } => {
            let at = |q| {
                times
                    .iter()
                    .map(|t| basis.eval(&plan.coeffs, t + shift, q).expect("coefficient count matches basis"))
                    .collect::<Vec<_>>()
            };
            (at(0), at(1), at(2))
        }
    };
    let kc = times.len();
    let mut polar = PolarVars {
        blocks: problem
            .families()
            .into_iter()
            .map(|family| PolarBlock {
                family,
                alpha: vec![0.0; kc],
                beta: vec![0.0; kc],
                d: vec![0.0; kc],
                d_star: (family == Family::Static).then(|| vec![0.0; kc]),
            })
            .collect(),
    };
    let vs = vectors_from_samples(problem, &pos, &vel, &acc);
    set_angles(&mut polar, &vs);
    refresh_clearance(problem, &mut polar, grid)?;
    set_distances(problem, &mut polar, &vs);
    Ok(polar)
}

/// Right-hand side `b` of the stacked constraint system, ordered like
/// [`ProblemInstance::constraint_matrix`].
pub fn constraint_rhs(problem: &ProblemInstance<'_>, polar: &PolarVars) -> DVector<f64> {
    let kc = problem.planner.constrained_samples();
    let mut b = DVector::zeros(polar.blocks.len() * 3 * kc);
    for (fi, block) in polar.blocks.iter().enumerate() {
        for k in 0..kc {
            let target = direction(block.alpha[k], block.beta[k]) * block.d[k] + problem.family_offset(block.family, k);
            for a in 0..3 {
                b[(fi * 3 + a) * kc + k] = target[a];
            }
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn axis_angles() {
        let (a, b) = angles_of(&Point::x());
        assert_eq!(a, 0.0);
        assert!((b - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(angles_of(&Point::z()).1, 0.0);
        assert_eq!(angles_of(&Point::zeros()), (0.0, 0.0));
    }

    #[test]
    fn direction_roundtrip() {
        for v in [Point::new(0.3, -1.2, 0.4), Point::new(-2.0, 0.1, -3.0), Point::new(0.0, 0.0, -1.0)] {
            let (a, b) = angles_of(&v);
            assert!((direction(a, b) * v.norm() - v).norm() < 1e-12);
        }
    }
}
