//! One-dimensional integrator with a two-well cost.
//!
//! `x_{t+1} = x_t + u_t`, `u ∈ [−1, 1]`, cost `c(x) = (x² + 0.05)(x + 1.5)²(x − 2)²`
//! with global minima at −1.5 and 2.

use crate::linalg::Mat;

/// Minimizers of the well cost.
pub const WELLS: [f64; 2] = [-1.5, 2.0];

pub fn step(x: &[f64], u: &[f64]) -> Vec<f64> {
    vec![x[0] + u[0]]
}

pub fn jacobians() -> (Mat, Mat) {
    (Mat::identity(1), Mat::identity(1))
}

/// `c(x)` written as `r(x)²`.
pub fn well_cost(x: f64) -> f64 {
    (x * x + 0.05) * (x + 1.5).powi(2) * (x - 2.0).powi(2)
}

/// `r(x) = sqrt(x² + 0.05)·(x + 1.5)·(x − 2)` and `r'(x)`.
pub fn residual(x: f64) -> (f64, f64) {
    let s = (x * x + 0.05).sqrt();
    let p = (x + 1.5) * (x - 2.0);
    let dp = 2.0 * x - 0.5;
    (s * p, (x / s) * p + s * dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_the_well_cost() {
        assert!(well_cost(-1.5).abs() <= 1e-12);
        assert!(well_cost(2.0).abs() <= 1e-12);
        assert!((well_cost(0.0) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn residual_squares_to_cost() {
        for &x in &[-2.0, -1.0, -0.3, 0.0, 0.7, 1.9, 2.5] {
            let (r, dr) = residual(x);
            assert!((r * r - well_cost(x)).abs() < 1e-12);
            let h = 1e-6;
            let fd = (residual(x + h).0 - residual(x - h).0) / (2.0 * h);
            assert!((fd - dr).abs() < 1e-7);
        }
    }
}
