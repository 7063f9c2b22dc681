use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TRAIN_STREAM;
use crate::dataset::{dataset_write, DatasetRecord};
use crate::envs::{toy, Env, EnvId, Scenario};
use crate::error::Result;
use crate::init::DEFAULT_LABEL;
use crate::optim::{solve, OptimizerConfig, Solution};
use crate::problem::{warm_start_shift, ControlSequence, ProblemInstance};
use crate::seeds::{derive, derive_label, hash_str};

/// One step of the warm-start pipeline.
#[derive(Clone, Debug)]
pub struct WarmStartStep {
    pub instance: ProblemInstance,
    /// Previous step's solution; `None` at the episode start.
    pub previous: Option<ControlSequence>,
    pub warm_start: ControlSequence,
    pub solution: Solution,
    /// Stage cost of the executed transition.
    pub executed_cost: f64,
}

/// Executes the warm-start pipeline for up to `steps` steps of `scenario`.
/// Instance ids are `id_base + t`. Stops early if the executed state diverges.
pub fn rollout_warm_start(
    env: &Env,
    scenario: &Scenario,
    steps: usize,
    online: &OptimizerConfig,
    seed: u64,
    id_base: u64,
) -> Vec<WarmStartStep> {
    let mut out = Vec::with_capacity(steps);
    let mut x = scenario.initial_state().to_vec();
    let mut previous: Option<ControlSequence> = None;
    for t in 0..steps {
        let id = id_base + t as u64;
        let instance = scenario.instance_at(t, Some(&x), id);
        let warm_start = previous
            .as_ref()
            .map_or_else(|| ControlSequence::zeros(env.horizon, env.m), warm_start_shift);
        let step_seed = derive_label(derive(seed, id), DEFAULT_LABEL);
        let Ok(solution) = solve(&env.problem(&instance), &warm_start, online, step_seed) else {
            break;
        };
        let u = solution.controls().at(0).to_vec();
        let Ok(next) = env.dynamics(&x, &u) else {
            break;
        };
        let executed_cost = env.stage_cost(&instance, 1, &next, &u);
        let prev = solution.controls().clone();
        out.push(WarmStartStep {
            instance,
            previous: previous.replace(prev),
            warm_start,
            solution,
            executed_cost,
        });
        x = next;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub env: EnvId,
    pub episodes: usize,
    pub records: usize,
    /// Fraction of records whose oracle solution is cheaper than the online one.
    pub oracle_improved_fraction: f64,
    pub oracle_worse_count: usize,
    pub mean_online_cost: f64,
    pub mean_oracle_cost: f64,
    /// 99th percentile of executed stage costs of the warm-start pipeline.
    pub stage_cost_p99: f64,
    /// Episodes cut short by a divergent step.
    pub truncated_episodes: usize,
}

/// Attempts per toy instance before the last solve is kept regardless.
const TOY_ORACLE_ATTEMPTS: u64 = 64;

/// Oracle label for one instance. Toy labels start from a random constant
/// control level and are redrawn until the final state sits in a well.
fn oracle_solve(
    env: &Env,
    inst: &ProblemInstance,
    warm_start: &ControlSequence,
    oracle: &OptimizerConfig,
    stream: u64,
) -> Result<Solution> {
    let seed = derive_label(derive(stream, inst.instance_id), "oracle");
    let problem = env.problem(inst);
    if env.id != EnvId::Toy1d {
        return solve(&problem, warm_start, oracle, seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(stream, derive(inst.instance_id, hash_str("oracle_init"))));
    let mut last = None;
    for _ in 0..TOY_ORACLE_ATTEMPTS {
        let level = rng.random_range(env.u_min[0]..=env.u_max[0]);
        let init = ControlSequence::from_flat(env.horizon, 1, vec![level; env.horizon]).expect("shape");
        let sol = solve(&problem, &init, oracle, seed)?;
        let x = sol.trajectory.final_state()[0];
        if toy::WELLS.iter().any(|w| (x - w).abs() < 1e-2) {
            return Ok(sol);
        }
        last = Some(sol);
    }
    Ok(last.expect("at least one attempt"))
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

/// Runs the warm-start pipeline on `episodes` training scenarios and labels
/// every visited instance with an oracle solve.
pub fn generate(
    env: &Env,
    episodes: usize,
    online: &OptimizerConfig,
    oracle: &OptimizerConfig,
    seed: u64,
) -> Result<(Vec<DatasetRecord>, DataSummary)> {
    let steps = env.t_env;
    let stream = derive(seed, hash_str(TRAIN_STREAM));
    type Episode = (Vec<DatasetRecord>, Vec<f64>, bool);
    let per_episode: Vec<Result<Episode>> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let scenario = Scenario::with_length(env, derive(stream, e as u64), steps);
            let visited = rollout_warm_start(env, &scenario, steps, online, stream, (e * steps) as u64);
            let truncated = visited.len() < steps;
            let mut records = Vec::with_capacity(visited.len());
            let mut stage = Vec::with_capacity(visited.len());
            for s in visited {
                let best = oracle_solve(env, &s.instance, &s.warm_start, oracle, stream)?;
                stage.push(s.executed_cost);
                records.push(DatasetRecord {
                    oracle_worse: best.cost() > s.solution.cost(),
                    oracle_cost: best.cost(),
                    online_cost: s.solution.cost(),
                    oracle_controls: best.trajectory.controls,
                    oracle_states: best.trajectory.states,
                    warm_start: s.warm_start,
                    instance: s.instance,
                });
            }
            Ok((records, stage, truncated))
        })
        .collect();
    let mut records = Vec::new();
    let mut stage = Vec::new();
    let mut truncated_episodes = 0;
    for ep in per_episode {
        let (r, s, t) = ep?;
        records.extend(r);
        stage.extend(s);
        truncated_episodes += usize::from(t);
    }
    stage.sort_by(f64::total_cmp);
    let n = records.len().max(1) as f64;
    let summary = DataSummary {
        env: env.id,
        episodes,
        records: records.len(),
        oracle_improved_fraction: records.iter().filter(|r| r.oracle_cost < r.online_cost).count() as f64 / n,
        oracle_worse_count: records.iter().filter(|r| r.oracle_worse).count(),
        mean_online_cost: records.iter().map(|r| r.online_cost).sum::<f64>() / n,
        mean_oracle_cost: records.iter().map(|r| r.oracle_cost).sum::<f64>() / n,
        stage_cost_p99: percentile(&stage, 0.99),
        truncated_episodes,
    };
    Ok((records, summary))
}

/// [`generate`] followed by [`dataset_write`] to `out`.
pub fn gen_data(
    env: &Env,
    episodes: usize,
    online: &OptimizerConfig,
    oracle: &OptimizerConfig,
    seed: u64,
    out: impl AsRef<Path>,
) -> Result<DataSummary> {
    let (records, summary) = generate(env, episodes, online, oracle, seed)?;
    dataset_write(out, env, &records)?;
    Ok(summary)
}
