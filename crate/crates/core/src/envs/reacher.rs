//! Two-link planar arm with point masses at the link tips.
//!
//! State `(θ₁, θ₂, ω₁, ω₂)`, controls are normalized joint torques scaled by
//! `gear`. Viscous joint damping, no gravity (the arm moves in the horizontal
//! plane). The wrist angle is clamped after each step.

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReacherParams {
    pub link_length: [f64; 2],
    pub link_mass: [f64; 2],
    pub damping: f64,
    pub gear: f64,
    pub wrist_limit: f64,
}

impl Default for ReacherParams {
    fn default() -> Self {
        Self {
            link_length: [0.1, 0.1],
            link_mass: [0.05, 0.05],
            damping: 0.01,
            gear: 0.05,
            wrist_limit: 160f64.to_radians(),
        }
    }
}

/// 2×2 helpers on `[a, b, c, d]` row-major.
fn inv2(m: [f64; 4]) -> [f64; 4] {
    let det = m[0] * m[3] - m[1] * m[2];
    [m[3] / det, -m[1] / det, -m[2] / det, m[0] / det]
}

fn mul2(m: [f64; 4], v: [f64; 2]) -> [f64; 2] {
    [m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1]]
}

impl ReacherParams {
    fn mass_matrix(&self, th2: f64) -> [f64; 4] {
        let [l1, l2] = self.link_length;
        let [m1, m2] = self.link_mass;
        let c2 = th2.cos();
        let m11 = m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2);
        let m12 = m2 * (l2 * l2 + l1 * l2 * c2);
        let m22 = m2 * l2 * l2;
        [m11, m12, m12, m22]
    }

    /// Coriolis/centrifugal generalized forces.
    fn coriolis(&self, th2: f64, om: [f64; 2]) -> [f64; 2] {
        let hh = self.link_mass[1] * self.link_length[0] * self.link_length[1] * th2.sin();
        [-hh * (2.0 * om[0] * om[1] + om[1] * om[1]), hh * om[0] * om[0]]
    }

    fn joint_accel(&self, x: &[f64], u: &[f64]) -> [f64; 2] {
        let om = [x[2], x[3]];
        let c = self.coriolis(x[1], om);
        let b = [
            self.gear * u[0] - c[0] - self.damping * om[0],
            self.gear * u[1] - c[1] - self.damping * om[1],
        ];
        mul2(inv2(self.mass_matrix(x[1])), b)
    }

    pub fn step(&self, dt: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        let qdd = self.joint_accel(x, u);
        let w1 = x[2] + dt * qdd[0];
        let w2 = x[3] + dt * qdd[1];
        let th1 = x[0] + dt * w1;
        let th2 = (x[1] + dt * w2).clamp(-self.wrist_limit, self.wrist_limit);
        vec![th1, th2, w1, w2]
    }

    pub fn jacobians(&self, dt: f64, x: &[f64], u: &[f64]) -> (Mat, Mat) {
        let [l1, l2] = self.link_length;
        let m2 = self.link_mass[1];
        let th2 = x[1];
        let om = [x[2], x[3]];
        let minv = inv2(self.mass_matrix(th2));
        let qdd = self.joint_accel(x, u);

        let (s2, c2) = th2.sin_cos();
        let hh = m2 * l1 * l2 * s2;
        let dhh = m2 * l1 * l2 * c2;
        // ∂M/∂θ₂ · q̈
        let dm = [-2.0 * m2 * l1 * l2 * s2, -m2 * l1 * l2 * s2, -m2 * l1 * l2 * s2, 0.0];
        let dm_qdd = mul2(dm, qdd);
        let dc_th2 = [-dhh * (2.0 * om[0] * om[1] + om[1] * om[1]), dhh * om[0] * om[0]];
        let dqdd_th2 = mul2(minv, [-dc_th2[0] - dm_qdd[0], -dc_th2[1] - dm_qdd[1]]);
        let dc_w1 = [-hh * 2.0 * om[1], 2.0 * hh * om[0]];
        let dc_w2 = [-hh * (2.0 * om[0] + 2.0 * om[1]), 0.0];
        let dqdd_w1 = mul2(minv, [-dc_w1[0] - self.damping, -dc_w1[1]]);
        let dqdd_w2 = mul2(minv, [-dc_w2[0], -dc_w2[1] - self.damping]);

        // Rows for ω' = ω + dt·q̈.
        let mut a = Mat::zeros(4, 4);
        let mut b = Mat::zeros(4, 2);
        for i in 0..2 {
            a[(2 + i, 1)] = dt * dqdd_th2[i];
            a[(2 + i, 2)] = dt * dqdd_w1[i];
            a[(2 + i, 3)] = dt * dqdd_w2[i];
            a[(2 + i, 2 + i)] += 1.0;
            b[(2 + i, 0)] = dt * minv[2 * i] * self.gear;
            b[(2 + i, 1)] = dt * minv[2 * i + 1] * self.gear;
        }
        // Rows for θ' = θ + dt·ω'.
        for i in 0..2 {
            for j in 0..4 {
                a[(i, j)] = dt * a[(2 + i, j)];
            }
            a[(i, i)] += 1.0;
            for j in 0..2 {
                b[(i, j)] = dt * b[(2 + i, j)];
            }
        }
        let wrist = x[1] + dt * (x[3] + dt * qdd[1]);
        if wrist.abs() > self.wrist_limit {
            for j in 0..4 {
                a[(1, j)] = 0.0;
            }
            for j in 0..2 {
                b[(1, j)] = 0.0;
            }
        }
        (a, b)
    }

    pub fn fingertip(&self, th1: f64, th2: f64) -> [f64; 2] {
        let [l1, l2] = self.link_length;
        [
            l1 * th1.cos() + l2 * (th1 + th2).cos(),
            l1 * th1.sin() + l2 * (th1 + th2).sin(),
        ]
    }

    /// `∂(fingertip)/∂(θ₁, θ₂)` as `[[dx/dθ₁, dx/dθ₂], [dy/dθ₁, dy/dθ₂]]`.
    pub fn fingertip_jacobian(&self, th1: f64, th2: f64) -> [[f64; 2]; 2] {
        let [l1, l2] = self.link_length;
        let (s1, c1) = th1.sin_cos();
        let (s12, c12) = (th1 + th2).sin_cos();
        [[-l1 * s1 - l2 * s12, -l2 * s12], [l1 * c1 + l2 * c12, l2 * c12]]
    }

    /// Joint angles placing the fingertip at `p` (positive-elbow branch).
    pub fn inverse_kinematics(&self, p: [f64; 2]) -> [f64; 2] {
        let [l1, l2] = self.link_length;
        let r2 = p[0] * p[0] + p[1] * p[1];
        let c2 = ((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
        let th2 = c2.acos();
        let th1 = p[1].atan2(p[0]) - (l2 * th2.sin()).atan2(l1 + l2 * th2.cos());
        [th1, th2]
    }
}
