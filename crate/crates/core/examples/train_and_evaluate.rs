//! End to end on cartpole at reduced scale: label data with the oracle, train a
//! four-head predictor, save and reload it, then evaluate against the warm start.

use miso::dataset::{dataset_read, dataset_write};
use miso::envs::{Env, EnvId};
use miso::harness::{eval_one_off, generate, train_model, EvalConfig, EvalMode};
use miso::init::{ExecMode, Strategy, StrategyConfig, StrategyKind};
use miso::losses::LossKind;
use miso::net::{checkpoint_load, checkpoint_save, TrainConfig};
use miso::optim::OptimizerProfiles;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = Env::new(EnvId::Cartpole);
    let p = OptimizerProfiles::for_env(env.id);
    let dir = std::env::temp_dir().join("miso-example");
    std::fs::create_dir_all(&dir)?;

    let (records, summary) = generate(&env, 40, &p.online, &p.oracle, 0)?;
    println!(
        "{} records, oracle improved {:.0}%",
        summary.records,
        100.0 * summary.oracle_improved_fraction
    );
    let data = dir.join("cartpole.bin");
    dataset_write(&data, &env, &records)?;
    let (_, records) = dataset_read(&data, Some(env.id))?;

    let mut cfg = TrainConfig::for_env(env.id);
    cfg.loss_kind = LossKind::Wta;
    cfg.k = 4;
    cfg.epochs = 30;
    let (model, log) = train_model(&env, &records, &cfg)?;
    println!(
        "validation loss {:.4} -> {:.4}",
        log.initial_val_loss(),
        log.best_val_loss
    );
    let ckpt = dir.join("cartpole_wta.ckpt");
    checkpoint_save(&model, &ckpt)?;
    let model = checkpoint_load(&ckpt, Some(env.id))?;

    let strategies = [
        Strategy::new(StrategyConfig::new(StrategyKind::WarmStart, 1), vec![], &env)?,
        Strategy::new(
            StrategyConfig::new(StrategyKind::MisoWta, 4).with_default(),
            vec![model],
            &env,
        )?,
    ];
    let mut eval = EvalConfig::new(env.id, EvalMode::OneOff, ExecMode::Multiple);
    eval.instances = 200;
    let report = eval_one_off(&env, &p, &strategies, &eval)?;
    for s in &report.strategies {
        println!(
            "{:<14} mean cost {:.4} ± {:.4}  argmin frequency {:?}",
            s.strategy,
            s.mean_cost,
            s.std_error,
            s.argmin_frequency
                .iter()
                .map(|f| (f * 100.0).round() / 100.0)
                .collect::<Vec<_>>()
        );
    }
    Ok(())
}
