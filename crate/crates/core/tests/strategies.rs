mod common;

use miso::envs::{Env, EnvId, Scenario};
use miso::harness::rollout_warm_start;
use miso::init::{
    argmin_index, propose, run_multiple_optimizers, run_single_optimizer, ExecMode, RunContext, Strategy,
    StrategyConfig, StrategyKind, DEFAULT_LABEL,
};
use miso::losses::LossKind;
use miso::optim::{solve, OptimizerProfiles};
use miso::seeds::derive_label;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cartpole_context() -> (Env, OptimizerProfiles, Vec<miso::harness::WarmStartStep>) {
    let env = Env::new(EnvId::Cartpole);
    let p = OptimizerProfiles::for_env(env.id);
    let steps = rollout_warm_start(&env, &Scenario::new(&env, 31), 12, &p.online, 31, 0);
    (env, p, steps)
}

#[test]
fn argmin_examples() {
    assert_eq!(argmin_index(&[5.0, 2.0, 7.0]), 1);
    assert_eq!(argmin_index(&[3.0]), 0);
    assert_eq!(argmin_index(&[f64::INFINITY, f64::INFINITY]), 0);
}

#[test]
fn miso_with_default_appends_the_warm_start_last() {
    let (env, p, steps) = cartpole_context();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = common::small_model(&env, 32, LossKind::Wta, &mut rng);
    let s = Strategy::new(
        StrategyConfig::new(StrategyKind::MisoWta, 32).with_default(),
        vec![model],
        &env,
    )
    .unwrap();
    let step = &steps[5];
    let ctx = RunContext {
        env: &env,
        instance: &step.instance,
        previous: step.previous.as_ref(),
        online: &p.online,
        oracle: &p.oracle,
    };
    let set = propose(&s, &ctx, 9).unwrap();
    assert_eq!(set.len(), 33);
    assert_eq!(set.labels().last().unwrap(), DEFAULT_LABEL);
    assert_eq!(set.candidates().last().unwrap(), &step.warm_start);
}

#[test]
fn warm_start_strategy_reproduces_the_plain_pipeline() {
    let (env, p, steps) = cartpole_context();
    let s = Strategy::new(StrategyConfig::new(StrategyKind::WarmStart, 1), vec![], &env).unwrap();
    for step in &steps {
        let ctx = RunContext {
            env: &env,
            instance: &step.instance,
            previous: step.previous.as_ref(),
            online: &p.online,
            oracle: &p.oracle,
        };
        let seed = 5;
        let single = run_single_optimizer(&s, &ctx, seed).unwrap();
        let plain = solve(
            &env.problem(&step.instance),
            &step.warm_start,
            &p.online,
            derive_label(seed, DEFAULT_LABEL),
        )
        .unwrap();
        assert_eq!(single.solution.trajectory, plain.trajectory);
        let multi = run_multiple_optimizers(&s, &ctx, seed).unwrap();
        assert_eq!(multi.solution.trajectory, plain.trajectory);
    }
}

#[test]
fn runs_are_deterministic_per_seed() {
    let (env, p, steps) = cartpole_context();
    let s = Strategy::new(
        StrategyConfig::new(StrategyKind::WarmStartPerturb, 6).with_default(),
        vec![],
        &env,
    )
    .unwrap();
    let step = &steps[3];
    let ctx = RunContext {
        env: &env,
        instance: &step.instance,
        previous: step.previous.as_ref(),
        online: &p.online,
        oracle: &p.oracle,
    };
    for mode in [ExecMode::Single, ExecMode::Multiple] {
        let run = || {
            let mut out = miso::init::run_strategy(&s, &ctx, mode, 44).unwrap();
            out.solution.solve_time_ms = 0.0;
            out
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn perturbation_validation() {
    let env = Env::new(EnvId::Cartpole);
    let bad = StrategyConfig::new(StrategyKind::WarmStartPerturb, 4).with_sigma(vec![-0.1]);
    assert!(bad.validate(&env).is_err());
    let missing = StrategyConfig::new(StrategyKind::Ensemble, 3);
    assert!(Strategy::new(missing, vec![], &env).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn guarantees_and_nested_monotonicity(seed in any::<u64>(), k in 1usize..8) {
        let env = Env::new(EnvId::ALL[(seed % 4) as usize]);
        let p = OptimizerProfiles::for_env(env.id);
        let steps = rollout_warm_start(&env, &Scenario::new(&env, seed), env.t_env.min(6), &p.online, seed, 0);
        let step = steps.last().unwrap();
        let ctx = RunContext {
            env: &env,
            instance: &step.instance,
            previous: step.previous.as_ref(),
            online: &p.online,
            oracle: &p.oracle,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::small_model(&env, 8, LossKind::Wta, &mut rng);

        let with_default = Strategy::new(StrategyConfig::new(StrategyKind::MisoWta, k).with_default(), vec![model.clone()], &env).unwrap();
        let single = run_single_optimizer(&with_default, &ctx, seed).unwrap();
        prop_assert_eq!(single.guarantee_ok(), Some(true));
        let multi = run_multiple_optimizers(&with_default, &ctx, seed).unwrap();
        prop_assert_eq!(multi.guarantee_ok(), Some(true));
        let plain = Strategy::new(StrategyConfig::new(StrategyKind::WarmStart, 1), vec![], &env).unwrap();
        let baseline = run_single_optimizer(&plain, &ctx, seed).unwrap();
        prop_assert!(multi.solution.cost() <= baseline.solution.cost());

        let mut last = f64::INFINITY;
        for j in 1..=k {
            let s = Strategy::new(StrategyConfig::new(StrategyKind::MisoWta, j), vec![model.truncated(j).unwrap()], &env).unwrap();
            let out = run_multiple_optimizers(&s, &ctx, seed).unwrap();
            prop_assert!(out.solution.cost() <= last);
            last = out.solution.cost();
        }

        let one = Strategy::new(StrategyConfig::new(StrategyKind::MisoWta, 1), vec![model.truncated(1).unwrap()], &env).unwrap();
        let a = run_single_optimizer(&one, &ctx, seed).unwrap();
        let b = run_multiple_optimizers(&one, &ctx, seed).unwrap();
        prop_assert_eq!(a.solution.trajectory, b.solution.trajectory);
    }
}
