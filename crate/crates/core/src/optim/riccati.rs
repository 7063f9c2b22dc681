//! Exact finite-horizon discrete-time LQR.
//!
//! Cost convention: `Σ_{t<H} (x_tᵀQx_t + u_tᵀRu_t) + x_HᵀQ_f x_H`.

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};

pub struct LqrSolution {
    pub controls: Vec<Vec<f64>>,
    pub gains: Vec<Mat>,
    pub cost: f64,
}

pub fn riccati_lqr(
    a: &Mat,
    b: &Mat,
    q: &Mat,
    r: &Mat,
    q_terminal: &Mat,
    horizon: usize,
    x0: &[f64],
) -> Result<LqrSolution> {
    if r.cholesky().is_err() {
        return Err(Error::NotPositiveDefinite("R"));
    }
    let mut p = q_terminal.clone();
    let mut gains = vec![Mat::zeros(0, 0); horizon];
    for t in (0..horizon).rev() {
        let pb = p.matmul(b);
        let pa = p.matmul(a);
        let mut s = r.add(&b.tr_matmul(&pb));
        s.symmetrize();
        let chol = s.cholesky().map_err(|_| Error::NotPositiveDefinite("R + BᵀPB"))?;
        let k = chol.solve_mat(&b.tr_matmul(&pa));
        // P ← Q + AᵀPA − AᵀPB·K
        let mut next = q.add(&a.tr_matmul(&pa)).add(&a.tr_matmul(&pb).matmul(&k).scale(-1.0));
        next.symmetrize();
        p = next;
        gains[t] = k;
    }

    let mut x = x0.to_vec();
    let mut cost = 0.0;
    let mut controls = Vec::with_capacity(horizon);
    for k in &gains {
        let u: Vec<f64> = k.matvec(&x).iter().map(|v| -v).collect();
        cost += dot(&x, &q.matvec(&x)) + dot(&u, &r.matvec(&u));
        let ax = a.matvec(&x);
        let bu = b.matvec(&u);
        x = ax.iter().zip(&bu).map(|(p, q)| p + q).collect();
        controls.push(u);
    }
    cost += dot(&x, &q_terminal.matvec(&x));
    Ok(LqrSolution { controls, gains, cost })
}
