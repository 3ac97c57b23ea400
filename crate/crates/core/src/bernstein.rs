//! Bernstein basis matrices sampled on a uniform time grid.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::voxelmap::Point;

/// Highest derivative order with a precomputed matrix.
pub const MAX_ORDER: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum BasisError {
    #[error("degree must be at least 1, got {0}")]
    Degree(usize),
    #[error("need at least 2 samples, got {0}")]
    Samples(usize),
    #[error("duration must be positive and finite, got {0}")]
    Duration(f64),
    #[error("derivative order {0} not supported (max {MAX_ORDER})")]
    Order(usize),
    #[error("expected {expected} coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },
}

/// Position, velocity, acceleration and jerk basis matrices, each
/// `samples × (degree + 1)`.
#[derive(Clone, Debug)]
pub struct BasisSet {
    degree: usize,
    duration: f64,
    times: Vec<f64>,
    mats: [DMatrix<f64>; MAX_ORDER + 1],
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Value of the degree-`n` Bernstein polynomial `m` at `tau ∈ [0, 1]`.
/// Indices outside `0..=n` evaluate to zero.
pub fn bernstein_poly(n: usize, m: i64, tau: f64) -> f64 {
    if m < 0 || m as usize > n {
        return 0.0;
    }
    let m = m as usize;
    binom(n, m) * tau.powi(m as i32) * (1.0 - tau).powi((n - m) as i32)
}

/// `q`-th time derivative of basis polynomial `m` (degree `n`, duration
/// `duration`) evaluated at normalised time `tau`.
pub fn bernstein_derivative(n: usize, m: usize, q: usize, tau: f64, duration: f64) -> f64 {
    if q > n {
        return 0.0;
    }
    let mut falling = 1.0;
    for i in 0..q {
        falling *= (n - i) as f64;
    }
    let mut sum = 0.0;
    for j in 0..=q {
        let sign = if (q - j) % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * binom(q, j) * bernstein_poly(n - q, m as i64 - j as i64, tau);
    }
    falling / duration.powi(q as i32) * sum
}

impl BasisSet {
    /// Basis of degree `degree` sampled at `samples` uniform times spanning
    /// `[0, duration]`.
    pub fn new(degree: usize, samples: usize, duration: f64) -> Result<Self, BasisError> {
        if degree < 1 {
            return Err(BasisError::Degree(degree));
        }
        if samples < 2 {
            return Err(BasisError::Samples(samples));
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(BasisError::Duration(duration));
        }
        let times: Vec<f64> = (0..samples).map(|k| duration * k as f64 / (samples - 1) as f64).collect();
        let cols = degree + 1;
        let mats = std::array::from_fn(|q| {
            DMatrix::from_fn(samples, cols, |k, m| {
                // Exact endpoints so the interpolation rows are exact.
                let tau = if k == samples - 1 { 1.0 } else { k as f64 / (samples - 1) as f64 };
                bernstein_derivative(degree, m, q, tau, duration)
            })
        });
        Ok(Self { degree, duration, times, mats })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_coeffs(&self) -> usize {
        self.degree + 1
    }

    pub fn samples(&self) -> usize {
        self.times.len()
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.times
    }

    /// Basis matrix for derivative `order` (0 = position).
    pub fn matrix(&self, order: usize) -> Result<&DMatrix<f64>, BasisError> {
        self.mats.get(order).ok_or(BasisError::Order(order))
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.mats[0]
    }

    /// Samples a 3-D trajectory. `coeffs` stacks the x, y and z coefficient
    /// vectors, `3 (n + 1)` entries in total.
    pub fn sample(&self, coeffs: &DVector<f64>, order: usize) -> Result<Vec<Point>, BasisError> {
        let m = self.matrix(order)?;
        let nc = self.n_coeffs();
        if coeffs.len() != 3 * nc {
            return Err(BasisError::CoefficientCount { expected: 3 * nc, got: coeffs.len() });
        }
        let axes: Vec<DVector<f64>> = (0..3).map(|a| m * coeffs.rows(a * nc, nc)).collect();
        Ok((0..self.samples()).map(|k| Point::new(axes[0][k], axes[1][k], axes[2][k])).collect())
    }

    /// Evaluates a trajectory at an arbitrary time, clamped to `[0, duration]`.
    pub fn eval(&self, coeffs: &DVector<f64>, t: f64, order: usize) -> Result<Point, BasisError> {
        if order > MAX_ORDER {
            return Err(BasisError::Order(order));
        }
        let nc = self.n_coeffs();
        if coeffs.len() != 3 * nc {
            return Err(BasisError::CoefficientCount { expected: 3 * nc, got: coeffs.len() });
        }
        let tau = (t / self.duration).clamp(0.0, 1.0);
        let mut out = Point::zeros();
        for m in 0..nc {
            let b = bernstein_derivative(self.degree, m, order, tau, self.duration);
            for a in 0..3 {
                out[a] += b * coeffs[a * nc + m];
            }
        }
        Ok(out)
    }

    /// Coefficients of the constant trajectory at `p`.
    pub fn constant(&self, p: &Point) -> DVector<f64> {
        let nc = self.n_coeffs();
        DVector::from_fn(3 * nc, |i, _| p[i / nc])
    }

    /// Coefficients of the uniform-speed straight line from `a` at t = 0 to
    /// `b` at t = duration.
    pub fn line(&self, a: &Point, b: &Point) -> DVector<f64> {
        let nc = self.n_coeffs();
        let n = self.degree as f64;
        DVector::from_fn(3 * nc, |i, _| {
            let (axis, m) = (i / nc, i % nc);
            let s = m as f64 / n;
            a[axis] * (1.0 - s) + b[axis] * s
        })
    }
}
