#![allow(dead_code)]

use miso::dataset::DatasetRecord;
use miso::envs::{Env, Scenario};
use miso::linalg::Mat;
use miso::losses::LossKind;
use miso::net::{Architecture, ModelParams};
use miso::problem::rollout;
use miso::ControlSequence;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Central differences of a scalar function.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = p[i];
            p[i] = x0 + h;
            let up = f(&p);
            p[i] = x0 - h;
            let down = f(&p);
            p[i] = x0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Normwise relative error `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Controls drawn uniformly from the interior `[lo + margin, hi − margin]`.
pub fn interior_controls<R: Rng>(env: &Env, rng: &mut R, margin: f64) -> ControlSequence {
    let data = (0..env.horizon * env.m)
        .map(|j| {
            let (lo, hi) = (env.u_min[j % env.m], env.u_max[j % env.m]);
            let w = hi - lo;
            rng.random_range(lo + margin * w..hi - margin * w)
        })
        .collect();
    ControlSequence::from_flat(env.horizon, env.m, data).unwrap()
}

/// A record whose instance comes from a random scenario and whose oracle
/// label is a random interior control sequence with its exact rollout.
pub fn random_record<R: Rng>(env: &Env, rng: &mut R, id: u64) -> DatasetRecord {
    let scenario = Scenario::new(env, rng.random());
    let step = rng.random_range(0..env.t_env.max(1));
    let inst = scenario.instance_at(step.min(env.t_env.saturating_sub(1)), None, id);
    let label = interior_controls(env, rng, 0.05);
    let traj = rollout(&env.problem(&inst), &label).unwrap();
    let warm = interior_controls(env, rng, 0.0);
    DatasetRecord {
        instance: inst,
        warm_start: warm,
        oracle_controls: label,
        oracle_cost: traj.cost,
        online_cost: traj.cost + rng.random_range(0.0..1.0),
        oracle_states: traj.states,
        oracle_worse: rng.random(),
    }
}

/// A small randomly initialised model with non-trivial standardizers whose
/// outputs stay well inside the control box.
pub fn small_model<R: Rng>(env: &Env, k: usize, kind: LossKind, rng: &mut R) -> ModelParams {
    let arch = Architecture {
        hidden: vec![6, 5],
        embed_dim: 4,
    };
    let mut p = ModelParams::new(env, &arch, k, kind, rng.random()).unwrap();
    for v in p.in_mean.iter_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    for v in p.in_std.iter_mut() {
        *v = rng.random_range(0.5..2.0);
    }
    let m = env.m;
    for (j, v) in p.out_std.iter_mut().enumerate() {
        *v = 0.05 * (env.u_max[j % m] - env.u_min[j % m]);
    }
    for (j, v) in p.out_mean.iter_mut().enumerate() {
        *v = 0.5 * (env.u_max[j % m] + env.u_min[j % m]);
    }
    for layer in p.trunk.iter_mut().chain(p.heads.iter_mut()) {
        for b in layer.bias.iter_mut() {
            *b = 0.1 * normal(rng);
        }
    }
    p
}

pub fn random_mat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| normal(rng))
}
