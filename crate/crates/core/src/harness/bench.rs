use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::envs::Env;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::net::{featurize_or_zero, Architecture, ModelParams};
use crate::problem::ControlSequence;
use crate::seeds::derive;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub multi_output_mean_us: f64,
    pub multi_output_std_us: f64,
    pub ensemble_mean_us: f64,
    pub ensemble_std_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub repetitions: usize,
    pub warmup: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    fn ratio(&self, f: impl Fn(&BenchRow) -> f64) -> Option<f64> {
        let first = self.rows.first()?;
        let last = self.rows.last()?;
        Some(f(last) / f(first))
    }

    /// Multi-output time at the largest K over the smallest.
    pub fn multi_output_ratio(&self) -> Option<f64> {
        self.ratio(|r| r.multi_output_mean_us)
    }

    pub fn ensemble_ratio(&self) -> Option<f64> {
        self.ratio(|r| r.ensemble_mean_us)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:>4} | {:>22} | {:>22}\n", "K", "multi-output [us]", "ensemble [us]");
        for r in &self.rows {
            s += &format!(
                "{:>4} | {:>12.2} ± {:>7.2} | {:>12.2} ± {:>7.2}\n",
                r.k, r.multi_output_mean_us, r.multi_output_std_us, r.ensemble_mean_us, r.ensemble_std_us
            );
        }
        s
    }
}

fn time_calls(warmup: usize, reps: usize, mut call: impl FnMut() -> Result<()>) -> Result<(f64, f64)> {
    for _ in 0..warmup {
        call()?;
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        call()?;
        samples.push(t.elapsed().as_secs_f64() * 1e6);
    }
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Times one forward pass of the first `k` heads of `multi` against `k`
/// single-head models run back to back, for every `k` in `ks`.
pub fn bench_models(
    multi: &ModelParams,
    singles: &[ModelParams],
    features: &[f64],
    ks: &[usize],
    repetitions: usize,
    warmup: usize,
) -> Result<BenchTable> {
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        if k == 0 || k > multi.k() || k > singles.len() {
            return Err(Error::Config(format!("cannot benchmark K = {k}")));
        }
        let heads = multi.truncated(k)?;
        let (mo_mean, mo_std) = time_calls(warmup, repetitions, || {
            black_box(heads.forward(black_box(features))?);
            Ok(())
        })?;
        let members = &singles[..k];
        let (en_mean, en_std) = time_calls(warmup, repetitions, || {
            for m in members {
                black_box(m.forward(black_box(features))?);
            }
            Ok(())
        })?;
        rows.push(BenchRow {
            k,
            multi_output_mean_us: mo_mean,
            multi_output_std_us: mo_std,
            ensemble_mean_us: en_mean,
            ensemble_std_us: en_std,
        });
    }
    Ok(BenchTable {
        repetitions,
        warmup,
        rows,
    })
}

/// [`bench_models`] on freshly initialized models with architecture `arch`;
/// timing does not depend on the weight values.
pub fn bench_inference(
    env: &Env,
    arch: &Architecture,
    ks: &[usize],
    repetitions: usize,
    warmup: usize,
    seed: u64,
) -> Result<BenchTable> {
    let k_max = ks.iter().copied().max().unwrap_or(1);
    let multi = ModelParams::new(env, arch, k_max, LossKind::Wta, seed)?;
    let singles = (0..k_max)
        .map(|i| ModelParams::new(env, arch, 1, LossKind::Regression, derive(seed, i as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    let inst = env.sample_instance(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed));
    let features = featurize_or_zero(env, &inst, &ControlSequence::zeros(env.horizon, env.m))?;
    bench_models(&multi, &singles, &features, ks, repetitions, warmup)
}
