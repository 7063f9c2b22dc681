use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{rollout_warm_start, WarmStartStep};
use super::report::{EpisodeRow, EvalReport, EvalRow, StrategyReport, COST_FORMULA};
use super::{with_threads, EVAL_STREAM};
use crate::envs::{Env, EnvId, Scenario};
use crate::error::{Error, Result};
use crate::init::{run_strategy, ExecMode, RunContext, RunOutcome, Strategy, StrategyConfig};
use crate::optim::OptimizerProfiles;
use crate::problem::ControlSequence;
use crate::seeds::{derive, hash_str};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    OneOff,
    Sequential,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "one_off" | "oneoff" => Ok(EvalMode::OneOff),
            "sequential" => Ok(EvalMode::Sequential),
            _ => Err(Error::Config(format!("unknown evaluation mode '{s}'"))),
        }
    }
}

/// Episode layout for sequential evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub t_env: usize,
    pub episodes: usize,
    pub seed: u64,
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_env == 0 {
            return Err(Error::Config("T_env must be at least 1".into()));
        }
        Ok(())
    }
}

/// Penalty charged once when an episode diverges: ten times the 99th
/// percentile executed stage cost of the warm-start pipeline.
pub fn default_divergence_penalty(env: EnvId) -> f64 {
    match env {
        EnvId::Toy1d => 10.0 * 0.45,
        EnvId::Cartpole => 10.0 * 6.8556,
        EnvId::Reacher => 10.0 * 11.4898,
        EnvId::Driving => 10.0 * 11.0774,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub env: EnvId,
    #[serde(default = "default_mode")]
    pub mode: EvalMode,
    #[serde(default = "default_exec")]
    pub exec_mode: ExecMode,
    /// One-off instance count.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Sequential episode count.
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Overrides the environment's episode length.
    #[serde(default, rename = "T_env")]
    pub t_env: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub divergence_penalty: Option<f64>,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Record wall-clock solve times; off keeps reports reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub env_config: Option<PathBuf>,
    #[serde(default)]
    pub optim_config: Option<PathBuf>,
    #[serde(default)]
    pub strategies: Vec<StrategyConfig>,
}

fn default_mode() -> EvalMode {
    EvalMode::OneOff
}

fn default_exec() -> ExecMode {
    ExecMode::Single
}

fn default_instances() -> usize {
    500
}

fn default_episodes() -> usize {
    50
}

impl EvalConfig {
    pub fn new(env: EnvId, mode: EvalMode, exec_mode: ExecMode) -> Self {
        EvalConfig {
            env,
            mode,
            exec_mode,
            instances: default_instances(),
            episodes: default_episodes(),
            t_env: None,
            seed: 0,
            divergence_penalty: None,
            threads: None,
            timing: false,
            env_config: None,
            optim_config: None,
            strategies: Vec::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(toml::from_str(&text)?)
    }

    pub fn episode_config(&self, env: &Env) -> EpisodeConfig {
        EpisodeConfig {
            t_env: self.t_env.unwrap_or(env.t_env),
            episodes: self.episodes,
            seed: self.seed,
        }
    }

    pub fn penalty(&self) -> f64 {
        self.divergence_penalty
            .unwrap_or_else(|| default_divergence_penalty(self.env))
    }

    pub fn environment(&self) -> Result<Env> {
        match &self.env_config {
            Some(p) => {
                let env = Env::load(p)?;
                if env.id != self.env {
                    return Err(Error::EnvMismatch {
                        expected: self.env,
                        found: env.id,
                    });
                }
                Ok(env)
            }
            None => Ok(Env::new(self.env)),
        }
    }

    pub fn profiles(&self) -> Result<OptimizerProfiles> {
        match &self.optim_config {
            Some(p) => OptimizerProfiles::load(p),
            None => Ok(OptimizerProfiles::for_env(self.env)),
        }
    }
}

fn make_row(
    strategy: &Strategy,
    out: &RunOutcome,
    instance_id: u64,
    episode: Option<(u64, usize)>,
    executed_cost: Option<f64>,
    timing: bool,
) -> EvalRow {
    EvalRow {
        instance_id,
        episode: episode.map(|e| e.0),
        step: episode.map(|e| e.1),
        strategy: strategy.config.name(),
        kind: strategy.kind(),
        k: strategy.config.k,
        include_default: strategy.config.include_default,
        cost: out.solution.cost(),
        executed_cost,
        selected_index: out.selected_index,
        selected_label: out.labels[out.selected_index].clone(),
        init_costs: out.init_costs.clone(),
        final_costs: out.final_costs.clone(),
        guarantee_ok: out.guarantee_ok(),
        monotone_ok: out.monotone_ok,
        feasible: out.feasible,
        solve_time_ms: if timing { out.solution.solve_time_ms } else { 0.0 },
    }
}

/// Held-out instances with their warm-start context, in instance-id order.
fn one_off_contexts(env: &Env, profiles: &OptimizerProfiles, count: usize, seed: u64) -> Vec<WarmStartStep> {
    let stream = derive(seed, hash_str(EVAL_STREAM));
    let steps = env.t_env.max(1);
    let mut out: Vec<WarmStartStep> = Vec::with_capacity(count);
    let mut next_episode = 0usize;
    while out.len() < count {
        let batch = (count - out.len()).div_ceil(steps) + 1;
        let eps: Vec<Vec<WarmStartStep>> = (next_episode..next_episode + batch)
            .into_par_iter()
            .map(|e| {
                let sc = Scenario::with_length(env, derive(stream, e as u64), steps);
                rollout_warm_start(env, &sc, steps, &profiles.online, stream, (e * steps) as u64)
            })
            .collect();
        next_episode += batch;
        out.extend(eps.into_iter().flatten());
    }
    out.truncate(count);
    out
}

fn snapshot(cfg: &EvalConfig, strategies: &[Strategy], mode: EvalMode) -> EvalConfig {
    let mut c = cfg.clone();
    c.mode = mode;
    c.strategies = strategies.iter().map(|s| s.config.clone()).collect();
    c
}

/// Every strategy solves the same held-out instances in isolation.
pub fn eval_one_off(
    env: &Env,
    profiles: &OptimizerProfiles,
    strategies: &[Strategy],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    with_threads(cfg.threads, || {
        let contexts = one_off_contexts(env, profiles, cfg.instances, cfg.seed);
        let mut reports = Vec::with_capacity(strategies.len());
        for strategy in strategies {
            let rows = contexts
                .par_iter()
                .map(|c| {
                    let ctx = RunContext {
                        env,
                        instance: &c.instance,
                        previous: c.previous.as_ref(),
                        online: &profiles.online,
                        oracle: &profiles.oracle,
                    };
                    let id = c.instance.instance_id;
                    let out = run_strategy(strategy, &ctx, cfg.exec_mode, derive(cfg.seed, id))?;
                    Ok(make_row(strategy, &out, id, None, None, cfg.timing))
                })
                .collect::<Result<Vec<_>>>()?;
            reports.push(StrategyReport::build(
                strategy.config.clone(),
                strategy.candidate_count(),
                rows,
                Vec::new(),
            ));
        }
        Ok(EvalReport {
            mode: EvalMode::OneOff,
            exec_mode: cfg.exec_mode,
            env: env.id,
            cost_formula: COST_FORMULA.to_string(),
            config: snapshot(cfg, strategies, EvalMode::OneOff),
            strategies: reports,
        })
    })?
}

fn run_episode(
    env: &Env,
    profiles: &OptimizerProfiles,
    strategy: &Strategy,
    episode: u64,
    layout: &EpisodeConfig,
    cfg: &EvalConfig,
) -> (Vec<EvalRow>, EpisodeRow) {
    let stream = derive(layout.seed, hash_str(EVAL_STREAM));
    let sc = Scenario::with_length(env, derive(stream, episode), layout.t_env);
    let mut x = sc.initial_state().to_vec();
    let mut previous: Option<ControlSequence> = None;
    let mut rows = Vec::with_capacity(layout.t_env);
    let (mut cost, mut executed) = (0.0, 0.0);
    let mut diverged = false;
    for t in 0..layout.t_env {
        let id = episode * layout.t_env as u64 + t as u64;
        let instance = sc.instance_at(t, Some(&x), id);
        let ctx = RunContext {
            env,
            instance: &instance,
            previous: previous.as_ref(),
            online: &profiles.online,
            oracle: &profiles.oracle,
        };
        let Ok(out) = run_strategy(strategy, &ctx, cfg.exec_mode, derive(layout.seed, id)) else {
            diverged = true;
            break;
        };
        let u = out.solution.controls().at(0).to_vec();
        let Ok(next) = env.dynamics(&x, &u) else {
            diverged = true;
            break;
        };
        let stage = env.stage_cost(&instance, 1, &next, &u);
        cost += out.solution.cost();
        executed += stage;
        rows.push(make_row(
            strategy,
            &out,
            id,
            Some((episode, t)),
            Some(stage),
            cfg.timing,
        ));
        previous = Some(out.solution.trajectory.controls);
        x = next;
    }
    let steps = rows.len();
    let denom = (steps + usize::from(diverged)).max(1) as f64;
    if diverged {
        cost += cfg.penalty();
        executed += cfg.penalty();
    }
    (
        rows,
        EpisodeRow {
            episode,
            steps,
            cost: cost / denom,
            executed_cost: executed / denom,
            diverged,
            final_state: x,
        },
    )
}

/// Every strategy drives the same held-out episodes, executing the first
/// control of each solution.
pub fn eval_sequential(
    env: &Env,
    profiles: &OptimizerProfiles,
    strategies: &[Strategy],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let layout = cfg.episode_config(env);
    layout.validate()?;
    with_threads(cfg.threads, || {
        let reports = strategies
            .iter()
            .map(|strategy| {
                let (rows, episodes): (Vec<Vec<EvalRow>>, Vec<EpisodeRow>) = (0..layout.episodes as u64)
                    .into_par_iter()
                    .map(|e| run_episode(env, profiles, strategy, e, &layout, cfg))
                    .unzip();
                StrategyReport::build(
                    strategy.config.clone(),
                    strategy.candidate_count(),
                    rows.into_iter().flatten().collect(),
                    episodes,
                )
            })
            .collect();
        EvalReport {
            mode: EvalMode::Sequential,
            exec_mode: cfg.exec_mode,
            env: env.id,
            cost_formula: COST_FORMULA.to_string(),
            config: snapshot(cfg, strategies, EvalMode::Sequential),
            strategies: reports,
        }
    })
}

/// Loads environment, optimizer profiles and strategies named in `cfg` and
/// runs the configured mode.
pub fn run_eval(cfg: &EvalConfig) -> Result<EvalReport> {
    let env = cfg.environment()?;
    let profiles = cfg.profiles()?;
    if cfg.strategies.is_empty() {
        return Err(Error::Config("no strategies to evaluate".into()));
    }
    let strategies = cfg
        .strategies
        .iter()
        .map(|s| Strategy::load(s.clone(), &env))
        .collect::<Result<Vec<_>>>()?;
    match cfg.mode {
        EvalMode::OneOff => eval_one_off(&env, &profiles, &strategies, cfg),
        EvalMode::Sequential => eval_sequential(&env, &profiles, &strategies, cfg),
    }
}
