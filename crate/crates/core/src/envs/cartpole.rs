//! Frictionless cart-pole with the pole modelled as a point mass.
//!
//! State `(x, ẋ, θ, θ̇)` with `θ = 0` upright, control a horizontal force on the
//! cart. Integrated with semi-implicit Euler over `n_sub_steps` equal sub-steps.

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    /// Signed gravity along the vertical axis; negative points down.
    pub gravity: f64,
    pub n_sub_steps: usize,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.3,
            pole_length: 0.5,
            gravity: -9.81,
            n_sub_steps: 2,
        }
    }
}

/// Accelerations and their partials w.r.t. `(θ, θ̇, F)`.
struct Accel {
    xdd: f64,
    thdd: f64,
    dxdd: [f64; 3],
    dthdd: [f64; 3],
}

impl CartPoleParams {
    fn accel(&self, th: f64, om: f64, force: f64) -> Accel {
        let (mc, mp, l) = (self.cart_mass, self.pole_mass, self.pole_length);
        let g = -self.gravity;
        let (s, c) = th.sin_cos();
        let den = mc + mp * s * s;
        let num = force + mp * s * (l * om * om - g * c);
        let xdd = num / den;
        let dnum = [mp * (c * l * om * om - g * (c * c - s * s)), 2.0 * mp * s * l * om, 1.0];
        let dden_th = 2.0 * mp * s * c;
        let dxdd = [
            (dnum[0] * den - num * dden_th) / (den * den),
            dnum[1] / den,
            dnum[2] / den,
        ];
        let thdd = (g * s - c * xdd) / l;
        let dthdd = [(g * c + s * xdd - c * dxdd[0]) / l, -c * dxdd[1] / l, -c * dxdd[2] / l];
        Accel { xdd, thdd, dxdd, dthdd }
    }

    pub fn step(&self, dt: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        let h = dt / self.n_sub_steps as f64;
        let mut s = [x[0], x[1], x[2], x[3]];
        for _ in 0..self.n_sub_steps {
            let a = self.accel(s[2], s[3], u[0]);
            s[1] += h * a.xdd;
            s[3] += h * a.thdd;
            s[0] += h * s[1];
            s[2] += h * s[3];
        }
        s.to_vec()
    }

    pub fn jacobians(&self, dt: f64, x: &[f64], u: &[f64]) -> (Mat, Mat) {
        let h = dt / self.n_sub_steps as f64;
        let mut s = [x[0], x[1], x[2], x[3]];
        let mut a_tot = Mat::identity(4);
        let mut b_tot = Mat::zeros(4, 1);
        for _ in 0..self.n_sub_steps {
            let a = self.accel(s[2], s[3], u[0]);
            // Sub-step Jacobian, rows in update order: v, ω, then x, θ.
            let mut js = Mat::zeros(4, 4);
            let mut bs = Mat::zeros(4, 1);
            js[(1, 1)] = 1.0;
            js[(1, 2)] = h * a.dxdd[0];
            js[(1, 3)] = h * a.dxdd[1];
            bs[(1, 0)] = h * a.dxdd[2];
            js[(3, 2)] = h * a.dthdd[0];
            js[(3, 3)] = 1.0 + h * a.dthdd[1];
            bs[(3, 0)] = h * a.dthdd[2];
            for j in 0..4 {
                js[(0, j)] = h * js[(1, j)];
                js[(2, j)] = h * js[(3, j)];
            }
            js[(0, 0)] += 1.0;
            js[(2, 2)] += 1.0;
            bs[(0, 0)] = h * bs[(1, 0)];
            bs[(2, 0)] = h * bs[(3, 0)];

            b_tot = js.matmul(&b_tot).add(&bs);
            a_tot = js.matmul(&a_tot);

            s[1] += h * a.xdd;
            s[3] += h * a.thdd;
            s[0] += h * s[1];
            s[2] += h * s[3];
        }
        (a_tot, b_tot)
    }
}
