//! Initialization strategies, the selection function, and the two execution
//! patterns: pick one candidate and solve once, or solve from every candidate
//! and keep the cheapest result.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::Env;
use crate::error::{Error, Result};
use crate::net::{checkpoint_load, featurize_or_zero, ModelParams};
use crate::optim::{solve, OptimizerConfig, Solution};
use crate::problem::{warm_start_shift, CandidateSet, ControlSequence, ProblemInstance};
use crate::seeds::{derive, derive_label, hash_str};

pub const DEFAULT_LABEL: &str = "warm_start";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    WarmStart,
    OracleProxy,
    Regression,
    WarmStartPerturb,
    RegressionPerturb,
    MultiOutputRegression,
    Ensemble,
    MisoPd,
    MisoWta,
    MisoMix,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 10] = [
        StrategyKind::WarmStart,
        StrategyKind::OracleProxy,
        StrategyKind::Regression,
        StrategyKind::WarmStartPerturb,
        StrategyKind::RegressionPerturb,
        StrategyKind::MultiOutputRegression,
        StrategyKind::Ensemble,
        StrategyKind::MisoPd,
        StrategyKind::MisoWta,
        StrategyKind::MisoMix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::WarmStart => "warm_start",
            StrategyKind::OracleProxy => "oracle_proxy",
            StrategyKind::Regression => "regression",
            StrategyKind::WarmStartPerturb => "warm_start_perturb",
            StrategyKind::RegressionPerturb => "regression_perturb",
            StrategyKind::MultiOutputRegression => "multi_output_regression",
            StrategyKind::Ensemble => "ensemble",
            StrategyKind::MisoPd => "miso_pd",
            StrategyKind::MisoWta => "miso_wta",
            StrategyKind::MisoMix => "miso_mix",
        }
    }

    /// Number of single-head or multi-head models the kind consumes.
    fn needs_models(self) -> bool {
        !matches!(
            self,
            StrategyKind::WarmStart | StrategyKind::OracleProxy | StrategyKind::WarmStartPerturb
        )
    }

    fn single_candidate(self) -> bool {
        matches!(
            self,
            StrategyKind::WarmStart | StrategyKind::OracleProxy | StrategyKind::Regression
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(rename = "K", default = "one")]
    pub k: usize,
    /// Per-dimension noise scale; defaults to a tenth of the control range.
    #[serde(default)]
    pub perturb_sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub model_paths: Vec<PathBuf>,
    /// Append the warm start as an extra candidate.
    #[serde(default)]
    pub include_default: bool,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, k: usize) -> Self {
        StrategyConfig {
            kind,
            k: if kind.single_candidate() { 1 } else { k },
            perturb_sigma: None,
            model_paths: Vec::new(),
            include_default: false,
            seed: 0,
        }
    }

    pub fn with_default(mut self) -> Self {
        self.include_default = true;
        self
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Self {
        self.perturb_sigma = Some(sigma);
        self
    }

    /// Short name used in reports, e.g. `miso_wta*` for the default-including variant.
    pub fn name(&self) -> String {
        let star = if self.include_default { "*" } else { "" };
        format!("{}{star}", self.kind)
    }

    pub fn sigma(&self, env: &Env) -> Vec<f64> {
        self.perturb_sigma.clone().unwrap_or_else(|| {
            env.u_min
                .iter()
                .zip(&env.u_max)
                .map(|(lo, hi)| 0.1 * (hi - lo))
                .collect()
        })
    }

    pub fn validate(&self, env: &Env) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if let Some(s) = &self.perturb_sigma {
            if s.len() != env.m || s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Config(
                    "perturb_sigma must hold one non-negative value per control".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A configured strategy with its models loaded.
#[derive(Clone, Debug)]
pub struct Strategy {
    pub config: StrategyConfig,
    models: Vec<ModelParams>,
}

impl Strategy {
    pub fn new(config: StrategyConfig, models: Vec<ModelParams>, env: &Env) -> Result<Self> {
        config.validate(env)?;
        for m in &models {
            if m.env_id != env.id {
                return Err(Error::EnvMismatch {
                    expected: env.id,
                    found: m.env_id,
                });
            }
            if m.feature_dim != env.feature_dim() || m.horizon != env.horizon || m.control_dim != env.m {
                return Err(Error::Dimension {
                    context: "model shape",
                    expected: env.feature_dim(),
                    got: m.feature_dim,
                });
            }
        }
        let want = match config.kind {
            k if !k.needs_models() => 0,
            StrategyKind::Ensemble => config.k,
            _ => 1,
        };
        if models.len() != want {
            return Err(Error::Config(format!(
                "{} needs {want} model(s), got {}",
                config.kind,
                models.len()
            )));
        }
        let heads_ok = match config.kind {
            StrategyKind::Regression | StrategyKind::RegressionPerturb | StrategyKind::Ensemble => {
                models.iter().all(|m| m.k() == 1)
            }
            StrategyKind::MultiOutputRegression
            | StrategyKind::MisoPd
            | StrategyKind::MisoWta
            | StrategyKind::MisoMix => models.iter().all(|m| m.k() >= config.k),
            _ => true,
        };
        if !heads_ok {
            return Err(Error::Config(format!(
                "{}: model head count does not fit K = {}",
                config.kind, config.k
            )));
        }
        Ok(Strategy { config, models })
    }

    /// Builds the strategy, loading `config.model_paths`.
    pub fn load(config: StrategyConfig, env: &Env) -> Result<Self> {
        let models = config
            .model_paths
            .iter()
            .map(|p| checkpoint_load(p, Some(env.id)))
            .collect::<Result<Vec<_>>>()?;
        Strategy::new(config, models, env)
    }

    pub fn kind(&self) -> StrategyKind {
        self.config.kind
    }

    pub fn models(&self) -> &[ModelParams] {
        &self.models
    }

    /// Candidates proposed per instance, including the default if appended.
    pub fn candidate_count(&self) -> usize {
        let base = if self.config.kind.single_candidate() {
            1
        } else {
            self.config.k
        };
        base + usize::from(self.appends_default())
    }

    fn appends_default(&self) -> bool {
        self.config.include_default && !matches!(self.config.kind, StrategyKind::WarmStart | StrategyKind::OracleProxy)
    }
}

/// Everything a strategy sees when proposing for one instance.
#[derive(Clone, Copy)]
pub struct RunContext<'a> {
    pub env: &'a Env,
    pub instance: &'a ProblemInstance,
    /// Controls of the previous step's solution, if any.
    pub previous: Option<&'a ControlSequence>,
    pub online: &'a OptimizerConfig,
    pub oracle: &'a OptimizerConfig,
}

impl RunContext<'_> {
    /// Shifted previous solution, or zeros at the start of an episode.
    pub fn warm_start(&self) -> Result<ControlSequence> {
        match self.previous {
            Some(prev) => {
                if prev.horizon() != self.env.horizon || prev.dim() != self.env.m {
                    return Err(Error::Dimension {
                        context: "previous solution",
                        expected: self.env.horizon * self.env.m,
                        got: prev.horizon() * prev.dim(),
                    });
                }
                Ok(warm_start_shift(prev))
            }
            None => Ok(ControlSequence::zeros(self.env.horizon, self.env.m)),
        }
    }
}

fn perturbed(
    base: &ControlSequence,
    k: usize,
    sigma: &[f64],
    env: &Env,
    seed: u64,
    label: &str,
) -> Vec<(ControlSequence, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, hash_str("perturb")));
    (0..k)
        .map(|i| {
            let mut c = base.clone();
            let m = c.dim();
            for (j, v) in c.as_mut_slice().iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += sigma[j % m] * z;
            }
            (c.clamped(&env.u_min, &env.u_max), format!("{label}_{i}"))
        })
        .collect()
}

/// Candidate initializations for the context's instance. `seed` drives the
/// perturbation noise only.
pub fn propose(strategy: &Strategy, ctx: &RunContext<'_>, seed: u64) -> Result<CandidateSet> {
    let env = ctx.env;
    let ws = ctx.warm_start()?;
    let cfg = &strategy.config;
    let features = || featurize_or_zero(env, ctx.instance, &ws);
    let mut items: Vec<(ControlSequence, String)> = match cfg.kind {
        StrategyKind::WarmStart => vec![(ws.clone(), DEFAULT_LABEL.to_string())],
        StrategyKind::OracleProxy => vec![(ws.clone(), "oracle_proxy".to_string())],
        StrategyKind::WarmStartPerturb => perturbed(&ws, cfg.k, &cfg.sigma(env), env, seed, "warm_start_perturb"),
        StrategyKind::Regression | StrategyKind::RegressionPerturb => {
            let out = strategy.models[0].forward(&features()?)?;
            let base = out.candidates()[0].clone();
            if cfg.kind == StrategyKind::Regression {
                vec![(base, "regression".to_string())]
            } else {
                perturbed(&base, cfg.k, &cfg.sigma(env), env, seed, "regression_perturb")
            }
        }
        StrategyKind::Ensemble => {
            let f = features()?;
            strategy
                .models
                .iter()
                .enumerate()
                .map(|(i, m)| Ok((m.forward(&f)?.candidates()[0].clone(), format!("ensemble_{i}"))))
                .collect::<Result<_>>()?
        }
        StrategyKind::MultiOutputRegression | StrategyKind::MisoPd | StrategyKind::MisoWta | StrategyKind::MisoMix => {
            let out = strategy.models[0].forward(&features()?)?;
            let (cands, _) = out.into_parts();
            cands
                .into_iter()
                .take(cfg.k)
                .enumerate()
                .map(|(i, c)| (c, format!("{}_head_{i}", cfg.kind)))
                .collect()
        }
    };
    if strategy.appends_default() {
        items.push((ws, DEFAULT_LABEL.to_string()));
    }
    let (cands, labels) = items.into_iter().unzip();
    CandidateSet::new(cands, labels)
}

/// Scores a candidate; lower is better.
pub trait SelectionFunction: Sync {
    fn score(&self, env: &Env, instance: &ProblemInstance, candidate: &ControlSequence) -> f64;
}

/// The rolled-out objective; divergent candidates score `+∞`.
#[derive(Clone, Copy, Debug, Default)]
pub struct RolloutCost;

impl SelectionFunction for RolloutCost {
    fn score(&self, env: &Env, instance: &ProblemInstance, candidate: &ControlSequence) -> f64 {
        match env.rollout(instance, candidate) {
            Ok(t) if t.cost.is_finite() => t.cost,
            _ => f64::INFINITY,
        }
    }
}

/// Lowest index attaining the minimum; index 0 if every value is infinite or NaN.
pub fn argmin_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] || (values[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}

/// Argmin of the rolled-out cost, with every candidate's cost.
pub fn select(candidates: &CandidateSet, instance: &ProblemInstance, env: &Env) -> (usize, Vec<f64>) {
    select_with(&RolloutCost, candidates, instance, env)
}

pub fn select_with<S: SelectionFunction + ?Sized>(
    selector: &S,
    candidates: &CandidateSet,
    instance: &ProblemInstance,
    env: &Env,
) -> (usize, Vec<f64>) {
    let scores: Vec<f64> = candidates
        .candidates()
        .iter()
        .map(|c| selector.score(env, instance, c))
        .collect();
    (argmin_index(&scores), scores)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Single,
    Multiple,
}

impl FromStr for ExecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Ok(ExecMode::Single),
            "multiple" | "multi" => Ok(ExecMode::Multiple),
            _ => Err(Error::Config(format!("unknown execution mode '{s}'"))),
        }
    }
}

/// What one strategy run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub solution: Solution,
    pub selected_index: usize,
    pub labels: Vec<String>,
    /// Rolled-out cost of every candidate before optimization.
    pub init_costs: Vec<f64>,
    /// Final cost of every candidate's solve (multiple-optimizers only).
    pub final_costs: Option<Vec<f64>>,
    /// Every solve performed ended no worse than it started (within 1e-9).
    pub monotone_ok: bool,
    /// Every solve performed returned controls inside the box.
    pub feasible: bool,
}

impl RunOutcome {
    pub fn default_index(&self) -> Option<usize> {
        self.labels.iter().position(|l| l == DEFAULT_LABEL)
    }

    /// Whether the run is no worse than its default candidate; `None` when
    /// no default was proposed.
    pub fn guarantee_ok(&self) -> Option<bool> {
        let d = self.default_index()?;
        Some(match &self.final_costs {
            None => self.init_costs[self.selected_index] <= self.init_costs[d],
            Some(finals) => self.solution.cost() <= finals[d],
        })
    }
}

fn solve_seed(seed: u64, label: &str) -> u64 {
    derive_label(seed, label)
}

fn monotone(s: &Solution) -> bool {
    s.cost() <= s.init_cost + 1e-9
}

fn feasible(s: &Solution, env: &Env) -> bool {
    let m = env.m;
    s.controls()
        .as_slice()
        .iter()
        .enumerate()
        .all(|(j, u)| *u >= env.u_min[j % m] && *u <= env.u_max[j % m])
}

/// Proposes, selects one candidate by rolled-out cost, and solves once with
/// the online configuration (the oracle configuration for `oracle_proxy`).
pub fn run_single_optimizer(strategy: &Strategy, ctx: &RunContext<'_>, seed: u64) -> Result<RunOutcome> {
    let cands = propose(strategy, ctx, seed)?;
    let (idx, init_costs) = select(&cands, ctx.instance, ctx.env);
    let cfg = if strategy.kind() == StrategyKind::OracleProxy {
        ctx.oracle
    } else {
        ctx.online
    };
    let label = &cands.labels()[idx];
    let problem = ctx.env.problem(ctx.instance);
    let solution = solve(&problem, &cands.candidates()[idx], cfg, solve_seed(seed, label))?;
    let (_, labels) = cands.into_parts();
    Ok(RunOutcome {
        monotone_ok: monotone(&solution),
        feasible: feasible(&solution, ctx.env),
        solution,
        selected_index: idx,
        labels,
        init_costs,
        final_costs: None,
    })
}

/// Solves from every candidate (in parallel on the current rayon pool) and
/// keeps the cheapest result, lowest index on ties.
pub fn run_multiple_optimizers(strategy: &Strategy, ctx: &RunContext<'_>, seed: u64) -> Result<RunOutcome> {
    let cands = propose(strategy, ctx, seed)?;
    let (_, init_costs) = select(&cands, ctx.instance, ctx.env);
    let cfg = if strategy.kind() == StrategyKind::OracleProxy {
        ctx.oracle
    } else {
        ctx.online
    };
    let problem = ctx.env.problem(ctx.instance);
    let solutions: Vec<Option<Solution>> = cands
        .candidates()
        .par_iter()
        .zip(cands.labels().par_iter())
        .map(|(c, label)| solve(&problem, c, cfg, solve_seed(seed, label)).ok())
        .collect();
    let finals: Vec<f64> = solutions
        .iter()
        .map(|s| s.as_ref().map_or(f64::INFINITY, |s| s.cost()))
        .collect();
    let best = argmin_index(&finals);
    let solved = solutions.iter().flatten();
    let monotone_ok = solved.clone().all(monotone);
    let all_feasible = solved.clone().all(|s| feasible(s, ctx.env));
    let solution = solutions
        .into_iter()
        .nth(best)
        .flatten()
        .filter(|s| s.cost().is_finite())
        .ok_or(Error::AllCandidatesFailed)?;
    let (_, labels) = cands.into_parts();
    Ok(RunOutcome {
        solution,
        selected_index: best,
        labels,
        init_costs,
        final_costs: Some(finals),
        monotone_ok,
        feasible: all_feasible,
    })
}

pub fn run_strategy(strategy: &Strategy, ctx: &RunContext<'_>, mode: ExecMode, seed: u64) -> Result<RunOutcome> {
    match mode {
        ExecMode::Single => run_single_optimizer(strategy, ctx, seed),
        ExecMode::Multiple => run_multiple_optimizers(strategy, ctx, seed),
    }
}
