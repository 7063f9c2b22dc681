//! Linear-quadratic problems, used to check the optimizers against the exact
//! Riccati solution.

use rand::Rng;

use crate::linalg::Mat;
use crate::problem::{ControlProblem, CostExpansion};

#[derive(Clone, Debug)]
pub struct LinearQuadratic {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
    pub q_terminal: Mat,
    pub horizon: usize,
    pub x0: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearQuadratic {
    /// Unbounded problem.
    pub fn new(a: Mat, b: Mat, q: Mat, r: Mat, q_terminal: Mat, horizon: usize, x0: Vec<f64>) -> Self {
        let m = b.cols();
        Self {
            a,
            b,
            q,
            r,
            q_terminal,
            horizon,
            x0,
            lower: vec![f64::NEG_INFINITY; m],
            upper: vec![f64::INFINITY; m],
        }
    }

    /// Discretized double integrator with step `dt`.
    pub fn double_integrator(dt: f64, horizon: usize, x0: Vec<f64>) -> Self {
        let a = Mat::from_vec(2, 2, vec![1.0, dt, 0.0, 1.0]);
        let b = Mat::from_vec(2, 1, vec![0.5 * dt * dt, dt]);
        Self::new(
            a,
            b,
            Mat::identity(2),
            Mat::from_diag(&[0.1]),
            Mat::identity(2).scale(10.0),
            horizon,
            x0,
        )
    }

    /// Random well-conditioned instance: stable-ish `A`, SPD weights.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize, horizon: usize) -> Self {
        let a = Mat::from_fn(n, n, |i, j| {
            let noise = rng.random_range(-0.3..0.3);
            if i == j {
                1.0 + noise * 0.5
            } else {
                noise
            }
        });
        let b = Mat::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let spd = |rng: &mut R, k: usize, floor: f64| {
            let g = Mat::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            let mut s = g.tr_matmul(&g);
            s.add_diag(floor);
            s
        };
        let q = spd(rng, n, 0.1);
        let r = spd(rng, m, 0.5);
        let qf = spd(rng, n, 1.0);
        let x0 = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        Self::new(a, b, q, r, qf, horizon, x0)
    }

    fn quad(m: &Mat, v: &[f64]) -> f64 {
        crate::linalg::dot(v, &m.matvec(v))
    }
}

impl ControlProblem for LinearQuadratic {
    fn state_dim(&self) -> usize {
        self.a.rows()
    }

    fn control_dim(&self) -> usize {
        self.b.cols()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    fn control_lower(&self) -> &[f64] {
        &self.lower
    }

    fn control_upper(&self) -> &[f64] {
        &self.upper
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let ax = self.a.matvec(x);
        let bu = self.b.matvec(u);
        ax.iter().zip(&bu).map(|(p, q)| p + q).collect()
    }

    fn linearize(&self, _x: &[f64], _u: &[f64]) -> (Mat, Mat) {
        (self.a.clone(), self.b.clone())
    }

    fn stage_cost(&self, _t: usize, x: &[f64], u: &[f64]) -> f64 {
        Self::quad(&self.q, x) + Self::quad(&self.r, u)
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        Self::quad(&self.q_terminal, x)
    }

    fn stage_expansion(&self, _t: usize, x: &[f64], u: &[f64]) -> CostExpansion {
        CostExpansion {
            lx: self.q.matvec(x).iter().map(|v| 2.0 * v).collect(),
            lu: self.r.matvec(u).iter().map(|v| 2.0 * v).collect(),
            lxx: self.q.scale(2.0),
            luu: self.r.scale(2.0),
            lux: Mat::zeros(self.control_dim(), self.state_dim()),
        }
    }

    fn terminal_expansion(&self, x: &[f64]) -> (Vec<f64>, Mat) {
        (
            self.q_terminal.matvec(x).iter().map(|v| 2.0 * v).collect(),
            self.q_terminal.scale(2.0),
        )
    }
}
