//! One planning step: propose candidates, pick by rollout cost, and compare
//! polishing only the winner against polishing every candidate.

use miso::envs::{Env, EnvId, Scenario};
use miso::harness::rollout_warm_start;
use miso::init::{run_multiple_optimizers, run_single_optimizer, RunContext, Strategy, StrategyConfig, StrategyKind};
use miso::losses::LossKind;
use miso::net::{Architecture, ModelParams};
use miso::optim::OptimizerProfiles;

fn main() -> miso::Result<()> {
    let env = Env::new(EnvId::Cartpole);
    let p = OptimizerProfiles::for_env(env.id);
    let steps = rollout_warm_start(&env, &Scenario::new(&env, 3), 8, &p.online, 3, 0);
    let step = steps.last().expect("episode has steps");
    let ctx = RunContext {
        env: &env,
        instance: &step.instance,
        previous: step.previous.as_ref(),
        online: &p.online,
        oracle: &p.oracle,
    };

    // An untrained model still yields K distinct candidates.
    let model = ModelParams::new(&env, &Architecture::default(), 4, LossKind::Wta, 11)?;
    let strategies = [
        Strategy::new(StrategyConfig::new(StrategyKind::WarmStart, 1), vec![], &env)?,
        Strategy::new(
            StrategyConfig::new(StrategyKind::WarmStartPerturb, 4).with_default(),
            vec![],
            &env,
        )?,
        Strategy::new(
            StrategyConfig::new(StrategyKind::MisoWta, 4).with_default(),
            vec![model],
            &env,
        )?,
    ];
    for s in &strategies {
        let single = run_single_optimizer(s, &ctx, 5)?;
        let multi = run_multiple_optimizers(s, &ctx, 5)?;
        let init: Vec<String> = single.init_costs.iter().map(|c| format!("{c:.3}")).collect();
        println!("{}", s.config.name());
        println!("  rollout costs  [{}]", init.join(", "));
        println!(
            "  single   picks {:<22} final {:.4}",
            single.labels[single.selected_index],
            single.solution.cost()
        );
        println!(
            "  multiple picks {:<22} final {:.4}",
            multi.labels[multi.selected_index],
            multi.solution.cost()
        );
    }
    Ok(())
}
