//! Kinematic bicycle for reference tracking.
//!
//! State `(x, y, φ, v, δ)`, controls `(a, δ̇)`, forward Euler.

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingParams {
    pub wheelbase: f64,
    /// Speeds below this magnitude are raised to it when linearizing.
    pub v_min_linearization: f64,
    pub steer_max: f64,
}

impl Default for DrivingParams {
    fn default() -> Self {
        Self {
            wheelbase: 3.0,
            v_min_linearization: 0.01,
            steer_max: 60f64.to_radians(),
        }
    }
}

impl DrivingParams {
    pub fn step(&self, dt: f64, s: &[f64], u: &[f64]) -> Vec<f64> {
        let (phi, v, delta) = (s[2], s[3], s[4]);
        vec![
            s[0] + dt * v * phi.cos(),
            s[1] + dt * v * phi.sin(),
            phi + dt * v * delta.tan() / self.wheelbase,
            v + dt * u[0],
            (delta + dt * u[1]).clamp(-self.steer_max, self.steer_max),
        ]
    }

    pub fn jacobians(&self, dt: f64, s: &[f64], u: &[f64]) -> (Mat, Mat) {
        let (phi, delta) = (s[2], s[4]);
        let v = if s[3].abs() < self.v_min_linearization {
            self.v_min_linearization
        } else {
            s[3]
        };
        let (sp, cp) = phi.sin_cos();
        let l = self.wheelbase;
        let mut a = Mat::identity(5);
        a[(0, 2)] = -dt * v * sp;
        a[(0, 3)] = dt * cp;
        a[(1, 2)] = dt * v * cp;
        a[(1, 3)] = dt * sp;
        a[(2, 3)] = dt * delta.tan() / l;
        a[(2, 4)] = dt * v / (l * delta.cos().powi(2));
        let mut b = Mat::zeros(5, 2);
        b[(3, 0)] = dt;
        b[(4, 1)] = dt;
        if (delta + dt * u[1]).abs() > self.steer_max {
            a[(4, 4)] = 0.0;
            b[(4, 1)] = 0.0;
        }
        (a, b)
    }
}
