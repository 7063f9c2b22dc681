//! iLQR and first-order box-DDP.
//!
//! Both linearize the dynamics to first order and use the Gauss-Newton cost
//! expansion supplied by the problem. They differ only in control bounds:
//! iLQR solves the unconstrained control subproblem and relies on clamping
//! in the forward pass, box-DDP clamps the feedforward term in the backward
//! pass and drops feedback on the clamped coordinates.

use std::time::Instant;

use super::{BudgetMode, OptimizerConfig, Solution};
use crate::error::Result;
use crate::linalg::{dot, Mat};
use crate::problem::{clamp_into, rollout, ControlProblem, ControlSequence, Trajectory};

pub fn ilqr_solve<P: ControlProblem + ?Sized>(
    problem: &P,
    init: &ControlSequence,
    cfg: &OptimizerConfig,
) -> Result<Solution> {
    solve(problem, init, cfg, false)
}

pub fn boxddp_solve<P: ControlProblem + ?Sized>(
    problem: &P,
    init: &ControlSequence,
    cfg: &OptimizerConfig,
) -> Result<Solution> {
    solve(problem, init, cfg, true)
}

struct Gains {
    k: Vec<Vec<f64>>,
    big_k: Vec<Mat>,
    /// Expected decrease terms `Σ kᵀQ_u` and `½ Σ kᵀQ_uu k`.
    dv: (f64, f64),
}

fn solve<P: ControlProblem + ?Sized>(
    problem: &P,
    init: &ControlSequence,
    cfg: &OptimizerConfig,
    boxed: bool,
) -> Result<Solution> {
    cfg.validate()?;
    let start = Instant::now();
    let mut traj = rollout(problem, init)?;
    let init_cost = traj.cost;
    let mut reg = cfg.reg_init;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if cfg.budget_mode == BudgetMode::WallClockMs && elapsed_ms(start) >= cfg.max_solve_time_ms {
            break;
        }
        iterations += 1;

        let gains = loop {
            match backward(problem, &traj, reg, boxed) {
                Some(g) => break Some(g),
                None => {
                    reg *= 10.0;
                    if reg > cfg.reg_max {
                        break None;
                    }
                }
            }
        };
        let Some(gains) = gains else { break };

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..cfg.max_linesearch_iter {
            if let Some(cand) = forward(problem, &traj, &gains, alpha) {
                if cand.cost < traj.cost {
                    accepted = Some(cand);
                    break;
                }
            }
            alpha *= 0.5;
        }

        match accepted {
            Some(next) => {
                let decrease = traj.cost - next.cost;
                traj = next;
                reg = (reg * 0.5).max(cfg.reg_min);
                if decrease < cfg.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                let expected = -(gains.dv.0 + gains.dv.1);
                if expected.abs() < cfg.tol {
                    converged = true;
                    break;
                }
                reg *= 10.0;
                if reg > cfg.reg_max {
                    break;
                }
            }
        }
    }

    Ok(Solution {
        trajectory: traj,
        iterations_used: iterations,
        converged,
        init_cost,
        solve_time_ms: elapsed_ms(start),
    })
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Riccati-like sweep on the linearized problem. `None` if `Q_uu + μI` is not
/// positive definite somewhere.
fn backward<P: ControlProblem + ?Sized>(problem: &P, traj: &Trajectory, reg: f64, boxed: bool) -> Option<Gains> {
    let h = problem.horizon();
    let m = problem.control_dim();
    let (lo, hi) = (problem.control_lower(), problem.control_upper());
    let (mut vx, mut vxx) = problem.terminal_expansion(traj.states.row(h));
    let mut ks = vec![Vec::new(); h];
    let mut big_ks = vec![Mat::zeros(0, 0); h];
    let mut dv = (0.0, 0.0);

    for t in (0..h).rev() {
        let x = traj.states.row(t);
        let u = traj.controls.at(t);
        let (a, b) = problem.linearize(x, u);
        let e = problem.stage_expansion(t, x, u);

        let qx: Vec<f64> = add_vec(&e.lx, &a.tr_matvec(&vx));
        let qu: Vec<f64> = add_vec(&e.lu, &b.tr_matvec(&vx));
        let vxx_a = vxx.matmul(&a);
        let vxx_b = vxx.matmul(&b);
        let qxx = e.lxx.add(&a.tr_matmul(&vxx_a));
        let quu = e.luu.add(&b.tr_matmul(&vxx_b));
        let qux = e.lux.add(&b.tr_matmul(&vxx_a));

        let mut quu_reg = quu.clone();
        quu_reg.symmetrize();
        quu_reg.add_diag(reg);
        let chol = quu_reg.cholesky().ok()?;
        let mut k: Vec<f64> = chol.solve_vec(&qu).iter().map(|v| -v).collect();
        let mut big_k = chol.solve_mat(&qux).scale(-1.0);

        if boxed {
            let (kb, kkb) = clamp_step(&quu_reg, &qu, &qux, u, lo, hi, &k)?;
            k = kb;
            big_k = kkb;
        }

        // V_x = Q_x + Kᵀ Q_uu k + Kᵀ Q_u + Q_uxᵀ k
        let quu_k = quu.matvec(&k);
        let mut new_vx = qx.clone();
        for (i, v) in new_vx.iter_mut().enumerate() {
            for j in 0..m {
                *v += big_k[(j, i)] * (quu_k[j] + qu[j]) + qux[(j, i)] * k[j];
            }
        }
        // V_xx = Q_xx + Kᵀ Q_uu K + Kᵀ Q_ux + Q_uxᵀ K
        let kt_quu_k = big_k.tr_matmul(&quu.matmul(&big_k));
        let kt_qux = big_k.tr_matmul(&qux);
        let mut new_vxx = qxx.add(&kt_quu_k).add(&kt_qux).add(&kt_qux.transpose());
        new_vxx.symmetrize();

        dv.0 += dot(&k, &qu);
        dv.1 += 0.5 * dot(&k, &quu_k);
        if !new_vxx.is_finite() || new_vx.iter().any(|v| !v.is_finite()) {
            return None;
        }
        vx = new_vx;
        vxx = new_vxx;
        ks[t] = k;
        big_ks[t] = big_k;
    }
    Some(Gains {
        k: ks,
        big_k: big_ks,
        dv,
    })
}

/// Clamp the feedforward so `u + k` stays in the box, re-solve for the free
/// coordinates given the clamped ones, and zero feedback on clamped rows.
fn clamp_step(
    quu: &Mat,
    qu: &[f64],
    qux: &Mat,
    u: &[f64],
    lo: &[f64],
    hi: &[f64],
    k_unc: &[f64],
) -> Option<(Vec<f64>, Mat)> {
    let m = u.len();
    let n = qux.cols();
    let mut k = k_unc.to_vec();
    let mut clamped = vec![false; m];
    for i in 0..m {
        let (klo, khi) = (lo[i] - u[i], hi[i] - u[i]);
        if k[i] <= klo {
            k[i] = klo;
            clamped[i] = true;
        } else if k[i] >= khi {
            k[i] = khi;
            clamped[i] = true;
        }
    }
    let mut big_k = Mat::zeros(m, n);
    let free: Vec<usize> = (0..m).filter(|&i| !clamped[i]).collect();
    if !free.is_empty() {
        let nf = free.len();
        let hff = Mat::from_fn(nf, nf, |a, b| quu[(free[a], free[b])]);
        let chol = hff.cholesky().ok()?;
        // rhs = Q_u,f + H_fc k_c
        let rhs: Vec<f64> = free
            .iter()
            .map(|&i| qu[i] + (0..m).filter(|&j| clamped[j]).map(|j| quu[(i, j)] * k[j]).sum::<f64>())
            .collect();
        let kf = chol.solve_vec(&rhs);
        let qux_f = Mat::from_fn(nf, n, |a, c| qux[(free[a], c)]);
        let kkf = chol.solve_mat(&qux_f);
        for (a, &i) in free.iter().enumerate() {
            k[i] = (-kf[a]).clamp(lo[i] - u[i], hi[i] - u[i]);
            for c in 0..n {
                big_k[(i, c)] = -kkf[(a, c)];
            }
        }
    }
    Some((k, big_k))
}

fn forward<P: ControlProblem + ?Sized>(
    problem: &P,
    nominal: &Trajectory,
    gains: &Gains,
    alpha: f64,
) -> Option<Trajectory> {
    let h = problem.horizon();
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let (lo, hi) = (problem.control_lower(), problem.control_upper());
    let mut states = Mat::zeros(h + 1, n);
    let mut controls = ControlSequence::zeros(h, m);
    states.row_mut(0).copy_from_slice(problem.initial_state());
    let mut cost = 0.0;
    let mut dx = vec![0.0; n];
    for t in 0..h {
        let x = states.row(t).to_vec();
        for (d, (a, b)) in dx.iter_mut().zip(x.iter().zip(nominal.states.row(t))) {
            *d = a - b;
        }
        let fb = gains.big_k[t].matvec(&dx);
        let u = controls.at_mut(t);
        for i in 0..m {
            u[i] = nominal.controls.at(t)[i] + alpha * gains.k[t][i] + fb[i];
        }
        clamp_into(u, lo, hi);
        let u = controls.at(t).to_vec();
        let next = problem.step(&x, &u);
        if next.iter().any(|v| !v.is_finite()) {
            return None;
        }
        cost += problem.stage_cost(t, &x, &u);
        states.row_mut(t + 1).copy_from_slice(&next);
    }
    cost += problem.terminal_cost(states.row(h));
    cost.is_finite().then_some(Trajectory { states, controls, cost })
}

fn add_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}
