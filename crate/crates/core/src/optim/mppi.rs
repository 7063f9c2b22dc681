//! Model predictive path integral control.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{BudgetMode, OptimizerConfig, Solution};
use crate::error::Result;
use crate::problem::{rollout, ControlProblem, ControlSequence, Trajectory};

/// Softmin weights `exp(−(S_k − min S)/λ)`, normalized. Non-finite costs get zero
/// weight. Returns `None` if every cost is non-finite.
pub fn mppi_weights(costs: &[f64], temperature: f64) -> Option<Vec<f64>> {
    let min = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let raw: Vec<f64> = costs
        .iter()
        .map(|&c| {
            if c.is_finite() {
                (-(c - min) / temperature).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Some(raw.into_iter().map(|w| w / total).collect())
}

/// Cost-weighted average of the samples.
pub fn mppi_update(samples: &[ControlSequence], costs: &[f64], temperature: f64) -> Option<ControlSequence> {
    let w = mppi_weights(costs, temperature)?;
    let mut out = ControlSequence::zeros(samples[0].horizon(), samples[0].dim());
    for (s, wk) in samples.iter().zip(&w) {
        if *wk == 0.0 {
            continue;
        }
        for (o, v) in out.as_mut_slice().iter_mut().zip(s.as_slice()) {
            *o += wk * v;
        }
    }
    Some(out)
}

pub fn mppi_solve<P: ControlProblem + ?Sized>(
    problem: &P,
    init: &ControlSequence,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<Solution> {
    cfg.validate()?;
    let start = Instant::now();
    let (lo, hi) = (problem.control_lower(), problem.control_upper());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = cfg.mppi.noise_sigma2.sqrt();

    let init_traj = rollout(problem, init)?;
    let init_cost = init_traj.cost;
    let mut mean = init_traj.controls.clone();
    let mut best: Trajectory = init_traj;
    let mut converged = true;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if cfg.budget_mode == BudgetMode::WallClockMs && start.elapsed().as_secs_f64() * 1e3 >= cfg.max_solve_time_ms {
            break;
        }
        iterations += 1;
        let mut samples = Vec::with_capacity(cfg.mppi.num_samples);
        let mut costs = Vec::with_capacity(cfg.mppi.num_samples);
        for _ in 0..cfg.mppi.num_samples {
            let mut s = mean.clone();
            for v in s.as_mut_slice() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += sigma * z;
            }
            s.clamp_to(lo, hi);
            match rollout(problem, &s) {
                Ok(tr) => {
                    costs.push(tr.cost);
                    if tr.cost < best.cost {
                        best = tr;
                    }
                }
                Err(_) => costs.push(f64::INFINITY),
            }
            samples.push(s);
        }
        let Some(next) = mppi_update(&samples, &costs, cfg.mppi.temperature) else {
            converged = false;
            break;
        };
        mean = next.clamped(lo, hi);
        if let Ok(tr) = rollout(problem, &mean) {
            if tr.cost < best.cost {
                best = tr;
            }
        }
    }

    Ok(Solution {
        trajectory: best,
        iterations_used: iterations,
        converged,
        init_cost,
        solve_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(v: &[f64]) -> ControlSequence {
        ControlSequence::from_flat(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn vanishing_temperature_picks_best_sample() {
        let samples = vec![seq(&[1.0, 2.0]), seq(&[-3.0, 0.5]), seq(&[0.25, 0.0])];
        let costs = [4.0, 1.5, 2.0];
        let u = mppi_update(&samples, &costs, 1e-12).unwrap();
        assert_eq!(u, samples[1]);
    }

    #[test]
    fn equal_costs_average_samples() {
        let samples = vec![seq(&[1.0, 2.0]), seq(&[-3.0, 0.5]), seq(&[0.5, 0.0])];
        let u = mppi_update(&samples, &[7.0; 3], 1e-4).unwrap();
        let expect = [(1.0 - 3.0 + 0.5) / 3.0, (2.0 + 0.5) / 3.0];
        for (a, b) in u.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_ignore_non_finite_costs() {
        let w = mppi_weights(&[f64::INFINITY, 1.0, f64::NAN], 1.0).unwrap();
        assert_eq!(w, vec![0.0, 1.0, 0.0]);
        assert!(mppi_weights(&[f64::INFINITY, f64::NAN], 1.0).is_none());
    }
}
