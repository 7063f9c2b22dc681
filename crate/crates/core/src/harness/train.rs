use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{dataset_read, DatasetRecord};
use crate::envs::{Env, EnvId};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::losses::{candidate_loss, LossConfig, LossKind};
use crate::net::{checkpoint_save, featurize_or_zero, AdamW, AdamWConfig, ModelParams, Standardizer, TrainConfig};
use crate::seeds::{derive, hash_str, mix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub env: EnvId,
    pub loss_kind: LossKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub num_train: usize,
    pub num_val: usize,
    /// Epoch 0 is the untrained model.
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl TrainLog {
    pub fn initial_val_loss(&self) -> f64 {
        self.epochs[0].val_loss
    }
}

/// Every tenth instance id (by hash) goes to validation.
fn is_validation(instance_id: u64) -> bool {
    mix(instance_id).is_multiple_of(10)
}

struct Split<'a> {
    records: Vec<&'a DatasetRecord>,
    features: Mat,
}

impl<'a> Split<'a> {
    fn new(env: &Env, records: Vec<&'a DatasetRecord>) -> Result<Self> {
        let feats = records
            .par_iter()
            .map(|r| featurize_or_zero(env, &r.instance, &r.warm_start))
            .collect::<Result<Vec<_>>>()?;
        let d = env.feature_dim();
        Ok(Split {
            features: Mat::from_vec(records.len(), d, feats.concat()),
            records,
        })
    }

    fn rows(&self, idx: &[usize]) -> Mat {
        let d = self.features.cols();
        Mat::from_fn(idx.len(), d, |r, c| self.features[(idx[r], c)])
    }
}

/// Mean loss over `idx` and, when `grad` is set, the per-head upstream
/// gradients already divided by the batch size.
/// Head outputs and the forward cache needed for backward.
type BatchOutputs = (Vec<Mat>, crate::net::ForwardCache);

fn batch_loss(
    env: &Env,
    params: &ModelParams,
    split: &Split<'_>,
    idx: &[usize],
    loss: &LossConfig,
    grad: bool,
) -> Result<(f64, Option<BatchOutputs>)> {
    let x = split.rows(idx);
    let (outs, cache) = params.forward_batch(&x)?;
    let k = outs.len();
    let per_sample = idx
        .par_iter()
        .enumerate()
        .map(|(row, &i)| {
            let cands: Vec<&[f64]> = outs.iter().map(|o| o.row(row)).collect();
            candidate_loss(env, &cands, split.records[i], loss)
        })
        .collect::<Result<Vec<_>>>()?;
    let b = idx.len() as f64;
    let value = per_sample.iter().map(|o| o.value).sum::<f64>() / b;
    if !grad {
        return Ok((value, None));
    }
    let cols = params.output_dim();
    let mut upstream = vec![Mat::zeros(idx.len(), cols); k];
    for (row, out) in per_sample.iter().enumerate() {
        for (h, g) in out.grads.iter().enumerate() {
            for (dst, v) in upstream[h].row_mut(row).iter_mut().zip(g) {
                *dst = v / b;
            }
        }
    }
    Ok((value, Some((upstream, cache))))
}

fn mean_loss(env: &Env, params: &ModelParams, split: &Split<'_>, loss: &LossConfig, chunk: usize) -> Result<f64> {
    let n = split.records.len();
    if n == 0 {
        return Ok(f64::NAN);
    }
    let all: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for c in all.chunks(chunk.max(1)) {
        total += batch_loss(env, params, split, c, loss, false)?.0 * c.len() as f64;
    }
    Ok(total / n as f64)
}

/// Trains a model on `records`, returning the best-validation parameters.
pub fn train_model(env: &Env, records: &[DatasetRecord], cfg: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let loss = cfg.loss();
    let k = cfg.effective_k();
    let (val, tr): (Vec<&DatasetRecord>, Vec<&DatasetRecord>) =
        records.iter().partition(|r| is_validation(r.instance.instance_id));
    if tr.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let train = Split::new(env, tr)?;
    let val = if val.is_empty() {
        None
    } else {
        Some(Split::new(env, val)?)
    };

    let mut params = ModelParams::new(
        env,
        &cfg.architecture,
        k,
        cfg.loss_kind,
        derive(cfg.seed, hash_str("init")),
    )?;
    let inputs = Standardizer::fit(&train.features);
    let targets = Mat::from_vec(
        train.records.len(),
        params.output_dim(),
        train
            .records
            .iter()
            .flat_map(|r| r.oracle_controls.as_slice().iter().copied())
            .collect(),
    );
    let outputs = Standardizer::fit(&targets);
    params.in_mean = inputs.mean;
    params.in_std = inputs.std;
    params.out_mean = outputs.mean;
    params.out_std = outputs.std;

    let eval_chunk = cfg.batch_size.max(256);
    let val_split = val.as_ref().unwrap_or(&train);
    let initial = mean_loss(env, &params, val_split, &loss, eval_chunk)?;
    let mut log = TrainLog {
        env: env.id,
        loss_kind: cfg.loss_kind,
        k,
        num_train: train.records.len(),
        num_val: val.as_ref().map_or(0, |v| v.records.len()),
        epochs: vec![EpochLog {
            epoch: 0,
            train_loss: mean_loss(env, &params, &train, &loss, eval_chunk)?,
            val_loss: initial,
        }],
        best_epoch: 0,
        best_val_loss: initial,
    };
    let mut best = params.clone();
    let mut opt = AdamW::new(AdamWConfig::new(cfg.lr, cfg.weight_decay, cfg.grad_norm_clip), &params);
    let mut order: Vec<usize> = (0..train.records.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (value, up) = batch_loss(env, &params, &train, idx, &loss, true)?;
            if !value.is_finite() {
                return Err(Error::NanLoss { epoch, batch });
            }
            let (upstream, cache) = up.expect("gradients requested");
            let mut grads = params.backward(&cache, &upstream)?;
            if !grads.norm().is_finite() {
                return Err(Error::NanLoss { epoch, batch });
            }
            opt.step(&mut params, &mut grads);
            sum += value * idx.len() as f64;
        }
        let val_loss = mean_loss(env, &params, val_split, &loss, eval_chunk)?;
        if !val_loss.is_finite() {
            return Err(Error::NanLoss { epoch, batch: 0 });
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss: sum / train.records.len() as f64,
            val_loss,
        });
        if val_loss < log.best_val_loss {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best = params.clone();
        }
    }
    Ok((best, log))
}

/// Reads the dataset, trains, saves the best checkpoint to `out` and the
/// log next to it as `<out>.log.json`.
pub fn train(dataset: impl AsRef<Path>, cfg: &TrainConfig, out: impl AsRef<Path>) -> Result<TrainLog> {
    let (id, records) = dataset_read(dataset, cfg.env)?;
    let env = Env::new(id);
    let (params, log) = train_model(&env, &records, cfg)?;
    let out = out.as_ref();
    checkpoint_save(&params, out)?;
    let log_path = out.with_extension("log.json");
    let text = serde_json::to_string_pretty(&log)?;
    std::fs::write(&log_path, text).map_err(|e| Error::io(&log_path, e))?;
    Ok(log)
}
