use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use miso::envs::{Env, EnvId};
use miso::harness::{self, EvalConfig, EvalMode, ToyOptions};
use miso::init::{ExecMode, StrategyConfig, StrategyKind};
use miso::net::{checkpoint_load, Architecture, TrainConfig};
use miso::optim::OptimizerProfiles;
use miso::{Error, Result};

#[derive(Parser)]
#[command(name = "miso", version, about = "Multiple initializations for trajectory optimizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the warm-start pipeline and label every instance with the oracle.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        env: Option<EnvId>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a predictor on a dataset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        env: Option<EnvId>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        loss_kind: Option<String>,
        #[arg(long = "k")]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate initialization strategies.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        env: Option<EnvId>,
        #[arg(long)]
        mode: Option<EvalMode>,
        #[arg(long)]
        exec_mode: Option<ExecMode>,
        /// Comma-separated `name[*][:K]`; `*` appends the warm start.
        #[arg(long)]
        strategies: Option<String>,
        /// `name=PATH`, repeatable; ensembles take one flag per member.
        #[arg(long = "model")]
        models: Vec<String>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        timing: bool,
    },
    /// Forward-pass timing of one multi-head model against an ensemble.
    Bench {
        #[arg(long, default_value = "cartpole")]
        env: EnvId,
        #[arg(long = "k", value_delimiter = ',', default_value = "1,2,4,8,16,32")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 100)]
        warmup: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the toy comparison and print predicted controls.
    Toy {
        #[arg(long, default_value_t = 2000)]
        records: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GenDataConfig {
    env: Option<EnvId>,
    episodes: Option<usize>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    env_config: Option<PathBuf>,
    optim_config: Option<PathBuf>,
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(toml::from_str(&text)?)
}

fn missing(what: &str) -> Error {
    Error::Config(format!("missing --{what}"))
}

fn parse_strategies(list: &str, models: &[String], env: &Env) -> Result<Vec<StrategyConfig>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (head, k) = match item.split_once(':') {
            Some((h, k)) => (
                h,
                Some(
                    k.parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad K in '{item}'")))?,
                ),
            ),
            None => (item, None),
        };
        let (name, star) = head.strip_suffix('*').map_or((head, false), |h| (h, true));
        let kind: StrategyKind = name.parse()?;
        let paths: Vec<PathBuf> = models
            .iter()
            .filter_map(|m| m.split_once('='))
            .filter(|(n, _)| n.parse::<StrategyKind>().ok() == Some(kind))
            .map(|(_, p)| PathBuf::from(p))
            .collect();
        let k = match (k, kind) {
            (Some(k), _) => k,
            (None, StrategyKind::Ensemble) => paths.len(),
            (None, StrategyKind::WarmStartPerturb | StrategyKind::RegressionPerturb) => 8,
            (None, _) => match paths.first() {
                Some(p) => checkpoint_load(p, Some(env.id))?.k(),
                None => 1,
            },
        };
        let mut cfg = StrategyConfig::new(kind, k);
        cfg.include_default = star;
        cfg.model_paths = paths;
        out.push(cfg);
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData {
            config,
            env,
            episodes,
            out,
            seed,
        } => {
            let file: GenDataConfig = config.as_ref().map(read_toml).transpose()?.unwrap_or_default();
            let id = env.or(file.env).ok_or_else(|| missing("env"))?;
            let environment = match &file.env_config {
                Some(p) => Env::load(p)?,
                None => Env::new(id),
            };
            let profiles = match &file.optim_config {
                Some(p) => OptimizerProfiles::load(p)?,
                None => OptimizerProfiles::for_env(id),
            };
            let episodes = episodes.or(file.episodes).ok_or_else(|| missing("episodes"))?;
            let out = out.or(file.out).ok_or_else(|| missing("out"))?;
            let summary = harness::gen_data(
                &environment,
                episodes,
                &profiles.online,
                &profiles.oracle,
                seed.or(file.seed).unwrap_or(0),
                &out,
            )?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(true)
        }
        Command::Train {
            config,
            env,
            dataset,
            out,
            epochs,
            loss_kind,
            k,
            seed,
        } => {
            let mut cfg = match (&config, env) {
                (Some(p), _) => TrainConfig::load(p)?,
                (None, Some(id)) => TrainConfig::for_env(id),
                (None, None) => return Err(missing("config or --env")),
            };
            if env.is_some() {
                cfg.env = env;
            }
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            if let Some(v) = loss_kind {
                cfg.loss_kind = serde_json::from_value(serde_json::Value::String(v))?;
            }
            if let Some(v) = k {
                cfg.k = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            let dataset = dataset.or(cfg.dataset.clone()).ok_or_else(|| missing("dataset"))?;
            let out = out.or(cfg.out.clone()).ok_or_else(|| missing("out"))?;
            let log = harness::train(&dataset, &cfg, &out)?;
            for e in &log.epochs {
                println!(
                    "epoch {:>4}  train {:.6e}  val {:.6e}",
                    e.epoch, e.train_loss, e.val_loss
                );
            }
            println!(
                "best epoch {} (val {:.6e}) -> {}",
                log.best_epoch,
                log.best_val_loss,
                out.display()
            );
            Ok(true)
        }
        Command::Eval {
            config,
            env,
            mode,
            exec_mode,
            strategies,
            models,
            report,
            instances,
            episodes,
            seed,
            threads,
            timing,
        } => {
            let mut cfg = match (&config, env) {
                (Some(p), _) => EvalConfig::load(p)?,
                (None, Some(id)) => EvalConfig::new(id, EvalMode::OneOff, ExecMode::Single),
                (None, None) => return Err(missing("config or --env")),
            };
            if let Some(v) = mode {
                cfg.mode = v;
            }
            if let Some(v) = exec_mode {
                cfg.exec_mode = v;
            }
            if let Some(v) = instances {
                cfg.instances = v;
            }
            if let Some(v) = episodes {
                cfg.episodes = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            cfg.timing |= timing;
            if let Some(list) = strategies {
                cfg.strategies = parse_strategies(&list, &models, &cfg.environment()?)?;
            }
            let rep = harness::run_eval(&cfg)?;
            let csv = rep.write(&report)?;
            print!(
                "{}",
                std::fs::read_to_string(&csv).map_err(|e| Error::Config(e.to_string()))?
            );
            for w in rep.warnings() {
                eprintln!("warning: {w}");
            }
            let failures = rep.audit();
            for f in &failures {
                eprintln!("audit failed: {f}");
            }
            Ok(failures.is_empty())
        }
        Command::Bench {
            env,
            k,
            reps,
            warmup,
            seed,
        } => {
            let table = harness::bench_inference(&Env::new(env), &Architecture::default(), &k, reps, warmup, seed)?;
            print!("{}", table.render());
            if let (Some(mo), Some(en)) = (table.multi_output_ratio(), table.ensemble_ratio()) {
                println!("ratio largest/smallest K: multi-output {mo:.2}, ensemble {en:.2}");
            }
            Ok(true)
        }
        Command::Toy { records, seed, epochs } => {
            let opts = ToyOptions {
                records,
                seed,
                epochs,
                ..ToyOptions::default()
            };
            let table = harness::toy_demo(&opts)?;
            println!(
                "{} records, {:.1}% of oracle labels in the left well",
                table.data.records,
                100.0 * table.left_fraction
            );
            print!("{}", table.render());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
