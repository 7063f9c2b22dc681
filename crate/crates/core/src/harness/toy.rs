use serde::{Deserialize, Serialize};

use super::data::{generate, DataSummary};
use super::train::{train_model, TrainLog};
use crate::dataset::DatasetRecord;
use crate::envs::{Env, EnvId, Scenario};
use crate::error::Result;
use crate::losses::LossKind;
use crate::net::{featurize_or_zero, ModelParams, TrainConfig};
use crate::optim::{solve, OptimizerProfiles};
use crate::problem::{ControlSequence, ProblemInstance};
use crate::seeds::derive;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyOptions {
    pub records: usize,
    pub seed: u64,
    /// Dispersion weight for the pairwise loss.
    pub pairwise_alpha: f64,
    /// Dispersion weight for the mixture loss.
    pub mix_alpha: f64,
    /// Overrides the shipped toy training epochs.
    pub epochs: Option<usize>,
}

impl Default for ToyOptions {
    fn default() -> Self {
        ToyOptions {
            records: 2000,
            seed: 0,
            pairwise_alpha: 0.1,
            mix_alpha: 0.05,
            epochs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyRow {
    pub method: String,
    pub head: usize,
    pub controls: Vec<f64>,
    pub final_state: f64,
}

/// Predicted control sequences and final states per method.
#[derive(Clone, Debug)]
pub struct ToyTable {
    pub rows: Vec<ToyRow>,
    pub data: DataSummary,
    /// Fraction of oracle labels ending in the left well.
    pub left_fraction: f64,
    pub logs: Vec<(String, TrainLog)>,
    pub models: Vec<(String, Vec<ModelParams>)>,
}

impl ToyTable {
    pub fn method(&self, name: &str) -> Vec<&ToyRow> {
        self.rows.iter().filter(|r| r.method == name).collect()
    }

    pub fn final_states(&self, name: &str) -> Vec<f64> {
        self.method(name).iter().map(|r| r.final_state).collect()
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<10} {:<4} {:<40} {:>8}\n", "method", "k", "controls u_0..u_4", "x_H");
        for r in &self.rows {
            let u: Vec<String> = r.controls.iter().map(|v| format!("{v:>6.2}")).collect();
            s += &format!(
                "{:<10} {:<4} {:<40} {:>8.2}\n",
                r.method,
                r.head,
                u.join(","),
                r.final_state
            );
        }
        s
    }
}

fn toy_instance(env: &Env) -> ProblemInstance {
    Scenario::new(env, 0).instance_at(0, None, 0)
}

fn rows_for(env: &Env, method: &str, models: &[ModelParams]) -> Result<Vec<ToyRow>> {
    let inst = toy_instance(env);
    let features = featurize_or_zero(env, &inst, &ControlSequence::zeros(env.horizon, env.m))?;
    let mut rows = Vec::new();
    for m in models {
        for c in m.forward(&features)?.candidates() {
            rows.push(ToyRow {
                method: method.to_string(),
                head: rows.len(),
                final_state: env.rollout(&inst, c)?.final_state()[0],
                controls: c.as_slice().to_vec(),
            });
        }
    }
    Ok(rows)
}

fn fit(
    env: &Env,
    records: &[DatasetRecord],
    kind: LossKind,
    k: usize,
    alpha: f64,
    seed: u64,
    opts: &ToyOptions,
) -> Result<(ModelParams, TrainLog)> {
    let mut cfg = TrainConfig::for_env(EnvId::Toy1d);
    cfg.loss_kind = kind;
    cfg.k = k;
    cfg.pairwise_loss_weight = alpha;
    cfg.seed = seed;
    if let Some(e) = opts.epochs {
        cfg.epochs = e;
    }
    train_model(env, records, &cfg)
}

/// Generates the toy dataset, trains a two-model ensemble and the three
/// two-head losses, and tabulates their predictions next to the optima.
pub fn toy_demo(opts: &ToyOptions) -> Result<ToyTable> {
    let env = Env::new(EnvId::Toy1d);
    let profiles = OptimizerProfiles::for_env(env.id);
    let (records, data) = generate(&env, opts.records, &profiles.online, &profiles.oracle, opts.seed)?;
    let left = records
        .iter()
        .filter(|r| r.oracle_states.row(env.horizon)[0] < 0.0)
        .count() as f64
        / records.len().max(1) as f64;

    let inst = toy_instance(&env);
    let mut rows = Vec::new();
    for (i, level) in [-1.0, 1.0].into_iter().enumerate() {
        let init = ControlSequence::from_flat(env.horizon, 1, vec![level; env.horizon])?;
        let sol = solve(&env.problem(&inst), &init, &profiles.oracle, 0)?;
        rows.push(ToyRow {
            method: "optimal".into(),
            head: i,
            controls: sol.controls().as_slice().to_vec(),
            final_state: sol.trajectory.final_state()[0],
        });
    }

    let mut logs = Vec::new();
    let mut models = Vec::new();
    let mut ensemble = Vec::new();
    for i in 0..2 {
        let (m, log) = fit(
            &env,
            &records,
            LossKind::Regression,
            1,
            0.0,
            derive(opts.seed, 100 + i),
            opts,
        )?;
        logs.push((format!("ensemble_{i}"), log));
        ensemble.push(m);
    }
    rows.extend(rows_for(&env, "ensemble", &ensemble)?);
    models.push(("ensemble".to_string(), ensemble));

    for (name, kind, alpha) in [
        ("miso_pd", LossKind::Pairwise, opts.pairwise_alpha),
        ("miso_wta", LossKind::Wta, 0.0),
        ("miso_mix", LossKind::Mix, opts.mix_alpha),
    ] {
        let (m, log) = fit(&env, &records, kind, 2, alpha, opts.seed, opts)?;
        rows.extend(rows_for(&env, name, std::slice::from_ref(&m))?);
        logs.push((name.to_string(), log));
        models.push((name.to_string(), vec![m]));
    }
    Ok(ToyTable {
        rows,
        data,
        left_fraction: left,
        logs,
        models,
    })
}
