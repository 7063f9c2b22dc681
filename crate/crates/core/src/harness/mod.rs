//! Data generation, training, evaluation, benchmarking and the toy demo.

mod bench;
mod data;
mod eval;
mod report;
mod toy;
mod train;

pub use bench::{bench_inference, bench_models, BenchRow, BenchTable};
pub use data::{gen_data, generate, rollout_warm_start, DataSummary, WarmStartStep};
pub use eval::{eval_one_off, eval_sequential, run_eval, EpisodeConfig, EvalConfig, EvalMode};
pub use report::{EpisodeRow, EvalReport, EvalRow, StrategyReport, COST_FORMULA};
pub use toy::{toy_demo, ToyOptions, ToyRow, ToyTable};
pub use train::{train, train_model, EpochLog, TrainLog};

use rayon::ThreadPoolBuilder;

use crate::error::{Error, Result};

/// Seed streams kept apart so evaluation never reuses training scenarios.
pub(crate) const TRAIN_STREAM: &str = "train";
pub(crate) const EVAL_STREAM: &str = "eval";

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
