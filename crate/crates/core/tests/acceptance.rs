//! Acceptance suite. Runs every criterion, prints one verdict line each and
//! exits non-zero if any hard criterion fails.
//!
//! `cargo test --test acceptance` runs all of them; pass criterion numbers
//! after `--` to run a subset, e.g. `cargo test --test acceptance -- 4 5 6`.

mod common;

use std::time::{Duration, Instant};

use common::{fd_grad, interior_controls, random_record, rel_err, small_model};
use miso::dataset::{dataset_read, dataset_write, DatasetRecord};
use miso::envs::{Env, EnvId};
use miso::harness::{
    bench_inference, eval_one_off, eval_sequential, gen_data, generate, toy_demo, train, train_model, EvalConfig,
    EvalMode, EvalReport, ToyOptions, ToyTable,
};
use miso::init::{ExecMode, Strategy, StrategyConfig, StrategyKind};
use miso::linalg::Mat;
use miso::losses::{
    mix_loss, multi_output_loss, pairwise_loss, reg_loss, wta_loss, Distance, LossConfig, LossKind, Phi,
};
use miso::net::{checkpoint_load, checkpoint_save, Architecture, ModelParams, TrainConfig};
use miso::optim::lq::LinearQuadratic;
use miso::optim::{boxddp_solve, ilqr_solve, riccati_lqr, OptimizerConfig, OptimizerProfiles};
use miso::ControlSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CARTPOLE_EPISODES: usize = 400;
const CARTPOLE_EPOCHS: usize = 60;
const CARTPOLE_K: usize = 8;
const TRUNCATION_K: usize = 32;
const TRUNCATION_EPOCHS: usize = 20;
const GUARANTEE_INSTANCES: usize = 500;

struct Verdict {
    pass: bool,
    /// Soft criteria only warn on failure.
    soft: bool,
    detail: String,
}

impl Verdict {
    fn hard(pass: bool, detail: String) -> Self {
        Verdict {
            pass,
            soft: false,
            detail,
        }
    }
}

struct CartpoleArtifacts {
    records: Vec<DatasetRecord>,
    model: ModelParams,
    prep_time: Duration,
}

/// Expensive artifacts shared between criteria, built on first use.
#[derive(Default)]
struct Shared {
    toy: Option<(ToyTable, Duration)>,
    cartpole: Option<CartpoleArtifacts>,
    guarantee: Option<Vec<EvalReport>>,
    corpus: Vec<EvalReport>,
}

impl Shared {
    fn toy(&mut self) -> &(ToyTable, Duration) {
        self.toy.get_or_insert_with(|| {
            let start = Instant::now();
            let table = toy_demo(&ToyOptions::default()).expect("toy demo");
            (table, start.elapsed())
        })
    }

    fn cartpole(&mut self) -> &CartpoleArtifacts {
        self.cartpole.get_or_insert_with(|| {
            let start = Instant::now();
            let env = Env::new(EnvId::Cartpole);
            let p = OptimizerProfiles::for_env(env.id);
            let (records, _) = generate(&env, CARTPOLE_EPISODES, &p.online, &p.oracle, 0).expect("cartpole data");
            let mut cfg = TrainConfig::for_env(env.id);
            cfg.loss_kind = LossKind::Wta;
            cfg.k = CARTPOLE_K;
            cfg.epochs = CARTPOLE_EPOCHS;
            let (model, _) = train_model(&env, &records, &cfg).expect("cartpole training");
            CartpoleArtifacts {
                records,
                model,
                prep_time: start.elapsed(),
            }
        })
    }

    fn guarantee(&mut self) -> &[EvalReport] {
        if self.guarantee.is_none() {
            let toy_model = self.toy().0.models.iter().find(|(n, _)| n == "miso_wta").unwrap().1[0].clone();
            let cart_model = self.cartpole().model.clone();
            let mut reports = Vec::new();
            for id in EnvId::ALL {
                let env = Env::new(id);
                let profiles = OptimizerProfiles::for_env(id);
                let mut strategies = vec![Strategy::new(
                    StrategyConfig::new(StrategyKind::WarmStartPerturb, 4).with_default(),
                    vec![],
                    &env,
                )
                .unwrap()];
                let learned = match id {
                    EnvId::Toy1d => Some((toy_model.clone(), 2)),
                    EnvId::Cartpole => Some((cart_model.clone(), CARTPOLE_K)),
                    _ => None,
                };
                if let Some((m, k)) = learned {
                    let cfg = StrategyConfig::new(StrategyKind::MisoWta, k).with_default();
                    strategies.push(Strategy::new(cfg, vec![m], &env).unwrap());
                }
                for mode in [EvalMode::OneOff, EvalMode::Sequential] {
                    for exec in [ExecMode::Single, ExecMode::Multiple] {
                        let mut cfg = EvalConfig::new(id, mode, exec);
                        cfg.seed = 2;
                        cfg.instances = GUARANTEE_INSTANCES;
                        cfg.episodes = GUARANTEE_INSTANCES.div_ceil(env.t_env) + 1;
                        let report = match mode {
                            EvalMode::OneOff => eval_one_off(&env, &profiles, &strategies, &cfg),
                            EvalMode::Sequential => eval_sequential(&env, &profiles, &strategies, &cfg),
                        }
                        .expect("guarantee evaluation");
                        reports.push(report);
                    }
                }
            }
            self.corpus.extend(reports.iter().cloned());
            self.guarantee = Some(reports);
        }
        self.guarantee.as_deref().unwrap()
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn c1_toy(s: &mut Shared) -> Verdict {
    let (table, elapsed) = s.toy();
    let wells = |name: &str| {
        let x = sorted(table.final_states(name));
        x.len() == 2 && (x[0] + 1.5).abs() <= 0.1 && (x[1] - 2.0).abs() <= 0.1
    };
    let ens = table.final_states("ensemble");
    let ens_ok = ens.len() == 2 && ens.iter().all(|x| x.abs() <= 0.3);
    let ens_mag = ens.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let pd = sorted(table.final_states("miso_pd"));
    let pd_ok = pd.len() == 2
        && pd[0] < 0.0
        && pd[1] > 0.0
        && ens_mag < pd[0].abs()
        && pd[0].abs() < 1.5
        && ens_mag < pd[1].abs()
        && pd[1].abs() < 2.0;
    let time_ok = elapsed.as_secs_f64() <= 120.0;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
    Verdict::hard(
        wells("miso_wta") && wells("miso_mix") && ens_ok && pd_ok && time_ok,
        format!(
            "wta [{}] mix [{}] ensemble [{}] pd [{}] left labels {:.1}% in {:.1}s",
            fmt(&sorted(table.final_states("miso_wta"))),
            fmt(&sorted(table.final_states("miso_mix"))),
            fmt(&ens),
            fmt(&pd),
            100.0 * table.left_fraction,
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_guarantee(s: &mut Shared) -> Verdict {
    let reports = s.guarantee();
    let mut violations = 0;
    let mut min_rows = usize::MAX;
    let mut checked = 0;
    for r in reports {
        for st in &r.strategies {
            violations += st.guarantee_violations;
            violations += st.rows.iter().filter(|row| row.guarantee_ok.is_none()).count();
            min_rows = min_rows.min(st.rows.len());
            checked += st.rows.len();
        }
    }
    Verdict::hard(
        violations == 0 && min_rows >= GUARANTEE_INSTANCES,
        format!("{violations} violations over {checked} rows; smallest report has {min_rows} rows"),
    )
}

fn c3_cartpole(s: &mut Shared) -> Verdict {
    let art = s.cartpole();
    let (model, prep) = (art.model.clone(), art.prep_time);
    let env = Env::new(EnvId::Cartpole);
    let profiles = OptimizerProfiles::for_env(env.id);
    let strategies = vec![
        Strategy::new(StrategyConfig::new(StrategyKind::WarmStart, 1), vec![], &env).unwrap(),
        Strategy::new(
            StrategyConfig::new(StrategyKind::MisoWta, CARTPOLE_K),
            vec![model],
            &env,
        )
        .unwrap(),
    ];
    let mut cfg = EvalConfig::new(env.id, EvalMode::Sequential, ExecMode::Multiple);
    cfg.episodes = 50;
    cfg.seed = 0;
    let start = Instant::now();
    let report = eval_sequential(&env, &profiles, &strategies, &cfg).expect("cartpole evaluation");
    let total = prep + start.elapsed();
    let ws = report.strategy("warm_start").unwrap().mean_cost;
    let wta = report.strategy("miso_wta").unwrap().mean_cost;
    let reduction = 1.0 - wta / ws;
    s.corpus.push(report);
    Verdict::hard(
        reduction >= 0.30 && total.as_secs_f64() <= 600.0,
        format!(
            "warm_start {ws:.4}, miso_wta {wta:.4}: {:.1}% reduction (need 30%) in {:.0}s",
            100.0 * reduction,
            total.as_secs_f64()
        ),
    )
}

fn c4_optimizers(_: &mut Shared) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = OptimizerConfig::default();
    let (mut worst_lqr, mut worst_box_cost, mut worst_box_u) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(2..=5);
        let m = rng.random_range(1..=3);
        let h = rng.random_range(5..=20);
        let mut lq = LinearQuadratic::random(&mut rng, n, m, h);
        let exact = riccati_lqr(&lq.a, &lq.b, &lq.q, &lq.r, &lq.q_terminal, h, &lq.x0).unwrap();
        let zeros = ControlSequence::zeros(h, m);
        let il = ilqr_solve(&lq, &zeros, &cfg).unwrap();
        worst_lqr = worst_lqr.max((il.cost() - exact.cost).abs() / exact.cost.abs().max(1e-12));

        let umax = il.controls().as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        lq.lower = vec![-10.0 * umax - 1.0; m];
        lq.upper = vec![10.0 * umax + 1.0; m];
        let bounded_il = ilqr_solve(&lq, &zeros, &cfg).unwrap();
        let bx = boxddp_solve(&lq, &zeros, &cfg).unwrap();
        worst_box_cost = worst_box_cost.max((bx.cost() - bounded_il.cost()).abs() / bounded_il.cost().abs().max(1e-12));
        let du = bx
            .controls()
            .as_slice()
            .iter()
            .zip(bounded_il.controls().as_slice())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        worst_box_u = worst_box_u.max(du);
    }
    Verdict::hard(
        worst_lqr <= 1e-6 && worst_box_cost <= 1e-9 && worst_box_u <= 1e-7,
        format!(
            "iLQR vs Riccati worst rel {worst_lqr:.2e}; box-DDP vs iLQR worst rel cost {worst_box_cost:.2e}, max |du| {worst_box_u:.2e}"
        ),
    )
}

fn loss_cfg(kind: LossKind, state_weight: f64, alpha: f64) -> LossConfig {
    LossConfig {
        kind,
        control_weight: 1.0,
        state_weight,
        alpha_k: alpha,
        phi: Phi::Tanh,
        distance: Distance::L2,
        divergence_penalty: 1e3,
    }
}

/// Worst relative error of an analytic gradient against central differences
/// of `value` over the flattened candidates.
type LossFn = fn(&Env, &[&[f64]], &DatasetRecord, &LossConfig) -> miso::Result<miso::losses::LossOutput>;

fn multi_candidate_check(env: &Env, rec: &DatasetRecord, cands: &[Vec<f64>], cfg: &LossConfig, f: LossFn) -> f64 {
    let len = cands[0].len();
    let flat: Vec<f64> = cands.concat();
    let eval = |x: &[f64]| {
        let parts: Vec<&[f64]> = x.chunks(len).collect();
        f(env, &parts, rec, cfg).unwrap().value
    };
    let parts: Vec<&[f64]> = cands.iter().map(|c| c.as_slice()).collect();
    let analytic = f(env, &parts, rec, cfg).unwrap().grads.concat();
    rel_err(&analytic, &fd_grad(eval, &flat, 1e-6), 1e-8)
}

fn c5_gradients(_: &mut Shared) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name: &'static str, e: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(w) => w.1 = w.1.max(e),
        None => worst.push((name, e)),
    };

    for i in 0..20 {
        let env = Env::new(EnvId::ALL[i % 4]);
        let k = rng.random_range(1..=3);
        let mut model = small_model(&env, k, LossKind::Wta, &mut rng);
        let batch = 3;
        let x = Mat::from_fn(batch, env.feature_dim(), |_, _| common::normal(&mut rng));
        let upstream: Vec<Mat> = (0..k)
            .map(|_| common::random_mat(&mut rng, batch, model.output_dim()))
            .collect();
        let (_, cache) = model.forward_batch(&x).unwrap();
        let grads = model.backward(&cache, &upstream).unwrap();
        let objective = |p: &ModelParams| -> f64 {
            let (out, _) = p.forward_batch(&x).unwrap();
            out.iter()
                .zip(&upstream)
                .map(|(o, g)| o.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum::<f64>())
                .sum()
        };
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        let n_tensors = model.tensors().len();
        for t in 0..n_tensors {
            let len = model.tensors()[t].len();
            for j in 0..len {
                let v = model.tensors()[t][j];
                model.tensors_mut()[t][j] = v + 1e-6;
                let up = objective(&model);
                model.tensors_mut()[t][j] = v - 1e-6;
                let down = objective(&model);
                model.tensors_mut()[t][j] = v;
                numeric.push((up - down) / 2e-6);
                analytic.push(grads.tensors[t][j]);
            }
        }
        record("network backward", rel_err(&analytic, &numeric, 1e-8));
    }

    for id in [EnvId::Cartpole, EnvId::Driving, EnvId::Reacher, EnvId::Toy1d] {
        let env = Env::new(id);
        for i in 0..20 {
            let rec = random_record(&env, &mut rng, i);
            let cand = interior_controls(&env, &mut rng, 0.05).as_slice().to_vec();
            let cfg = loss_cfg(LossKind::Regression, rng.random_range(0.01..1.0), 0.0);
            let analytic = reg_loss(&env, &cand, &rec, &cfg).unwrap().grad;
            let numeric = fd_grad(|c| reg_loss(&env, c, &rec, &cfg).unwrap().value, &cand, 1e-6);
            let name = match id {
                EnvId::Cartpole => "reg_loss cartpole",
                EnvId::Driving => "reg_loss bicycle",
                EnvId::Reacher => "reg_loss reacher",
                EnvId::Toy1d => "reg_loss toy",
            };
            record(name, rel_err(&analytic, &numeric, 1e-8));
        }
    }

    type LossFn = fn(&Env, &[&[f64]], &DatasetRecord, &LossConfig) -> miso::Result<miso::losses::LossOutput>;
    let losses: [(&str, LossKind, LossFn); 3] = [
        ("pairwise_loss", LossKind::Pairwise, pairwise_loss),
        ("wta_loss", LossKind::Wta, wta_loss),
        ("mix_loss", LossKind::Mix, mix_loss),
    ];
    for (name, kind, f) in losses {
        for i in 0..20 {
            let env = Env::new(EnvId::ALL[i % 4]);
            let rec = random_record(&env, &mut rng, i as u64);
            let k = rng.random_range(2..=4);
            let cands: Vec<Vec<f64>> = (0..k)
                .map(|_| interior_controls(&env, &mut rng, 0.05).as_slice().to_vec())
                .collect();
            let cfg = loss_cfg(kind, rng.random_range(0.0..0.5), rng.random_range(0.01..0.5));
            record(name, multi_candidate_check(&env, &rec, &cands, &cfg, f));
        }
    }

    let pass = worst.iter().all(|(_, e)| *e <= 1e-4);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Verdict::hard(pass, format!("worst relative error: {detail}"))
}

fn c6_loss_algebra(_: &mut Shared) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut min_le_mean, mut mix_exact, mut pd_exact) = (0, 0, 0);
    let sets = 1000;
    for i in 0..sets {
        let env = Env::new(EnvId::ALL[i % 4]);
        let rec = random_record(&env, &mut rng, i as u64);
        let k = rng.random_range(1..=8);
        let cands: Vec<Vec<f64>> = (0..k)
            .map(|_| interior_controls(&env, &mut rng, 0.0).as_slice().to_vec())
            .collect();
        let parts: Vec<&[f64]> = cands.iter().map(|c| c.as_slice()).collect();
        let sw = if rng.random::<bool>() {
            rng.random_range(0.0..1.0)
        } else {
            0.0
        };
        let cfg = loss_cfg(LossKind::Wta, sw, 0.0);
        let wta = wta_loss(&env, &parts, &rec, &cfg).unwrap();
        let mean = multi_output_loss(&env, &parts, &rec, &cfg).unwrap();
        min_le_mean += usize::from(wta.value <= mean.value);
        let mix = mix_loss(&env, &parts, &rec, &cfg).unwrap();
        mix_exact += usize::from(mix.value.to_bits() == wta.value.to_bits() && mix.grads == wta.grads);
        let pd = pairwise_loss(&env, &parts, &rec, &cfg).unwrap();
        pd_exact += usize::from(pd.value.to_bits() == mean.value.to_bits() && pd.grads == mean.grads);
    }
    Verdict::hard(
        min_le_mean == sets && mix_exact == sets && pd_exact == sets,
        format!(
            "min <= mean {min_le_mean}/{sets}; mix(0) == wta {mix_exact}/{sets}; pairwise(0) == mean {pd_exact}/{sets}"
        ),
    )
}

fn c7_monotone(s: &mut Shared) -> Verdict {
    s.guarantee();
    let (mut rows, mut monotone, mut feasible) = (0, 0, 0);
    for r in &s.corpus {
        for st in &r.strategies {
            rows += st.rows.len();
            monotone += st.monotone_violations;
            feasible += st.feasibility_violations;
        }
    }
    Verdict::hard(
        rows > 0 && monotone == 0 && feasible == 0,
        format!(
            "{rows} solves in {} reports: {monotone} above init cost, {feasible} infeasible",
            s.corpus.len()
        ),
    )
}

fn c8_best_of_k(s: &mut Shared) -> Verdict {
    let env = Env::new(EnvId::Cartpole);
    let records = s.cartpole().records.clone();
    let mut cfg = TrainConfig::for_env(env.id);
    cfg.loss_kind = LossKind::Wta;
    cfg.k = TRUNCATION_K;
    cfg.epochs = TRUNCATION_EPOCHS;
    cfg.seed = 8;
    let (model, _) = train_model(&env, &records, &cfg).expect("K = 32 training");
    let profiles = OptimizerProfiles::for_env(env.id);
    let js = [1, 2, 4, 8, 16, 32];
    let strategies: Vec<Strategy> = js
        .iter()
        .map(|&j| {
            Strategy::new(
                StrategyConfig::new(StrategyKind::MisoWta, j),
                vec![model.truncated(j).unwrap()],
                &env,
            )
            .unwrap()
        })
        .collect();
    let mut ecfg = EvalConfig::new(env.id, EvalMode::OneOff, ExecMode::Multiple);
    ecfg.seed = 8;
    let report = eval_one_off(&env, &profiles, &strategies, &ecfg).expect("truncated evaluation");
    let means: Vec<f64> = report.strategies.iter().map(|st| st.mean_cost).collect();
    s.corpus.push(report);
    let pass = means.windows(2).all(|w| w[1] <= w[0]);
    let detail = js
        .iter()
        .zip(&means)
        .map(|(j, m)| format!("j={j}: {m:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    Verdict::hard(pass, detail)
}

fn c9_inference(_: &mut Shared) -> Verdict {
    let env = Env::new(EnvId::Cartpole);
    let table = bench_inference(&env, &Architecture::default(), &[1, 2, 4, 8, 16, 32], 1000, 100, 9).unwrap();
    let multi = table.multi_output_ratio().unwrap();
    let ens = table.ensemble_ratio().unwrap();
    Verdict::hard(
        multi <= 2.0 && ens >= 8.0,
        format!("multi-output t(32)/t(1) = {multi:.2} (max 2.0), ensemble = {ens:.2} (min 8.0)"),
    )
}

fn c10_determinism(_: &mut Shared) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let env = Env::new(EnvId::Cartpole);
    let p = OptimizerProfiles::for_env(env.id);
    let mut problems = Vec::new();

    let bytes = |path: &std::path::Path| std::fs::read(path).unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    gen_data(&env, 6, &p.online, &p.oracle, 10, &a).unwrap();
    gen_data(&env, 6, &p.online, &p.oracle, 10, &b).unwrap();
    if bytes(&a) != bytes(&b) {
        problems.push("datasets differ");
    }

    let mut cfg = TrainConfig::for_env(env.id);
    cfg.k = 4;
    cfg.epochs = 3;
    let (ca, cb) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    train(&a, &cfg, &ca).unwrap();
    train(&a, &cfg, &cb).unwrap();
    if bytes(&ca) != bytes(&cb) {
        problems.push("checkpoints differ");
    }

    let model = checkpoint_load(&ca, Some(env.id)).unwrap();
    let strategies = vec![
        Strategy::new(
            StrategyConfig::new(StrategyKind::MisoWta, 4).with_default(),
            vec![model],
            &env,
        )
        .unwrap(),
        Strategy::new(StrategyConfig::new(StrategyKind::WarmStartPerturb, 3), vec![], &env).unwrap(),
    ];
    for (mode, exec) in [
        (EvalMode::OneOff, ExecMode::Multiple),
        (EvalMode::Sequential, ExecMode::Single),
    ] {
        let run = |threads: usize| {
            let mut c = EvalConfig::new(env.id, mode, exec);
            c.instances = 80;
            c.episodes = 4;
            c.seed = 10;
            c.threads = Some(threads);
            let r = match mode {
                EvalMode::OneOff => eval_one_off(&env, &p, &strategies, &c),
                EvalMode::Sequential => eval_sequential(&env, &p, &strategies, &c),
            }
            .unwrap();
            let mut r = r;
            r.config.threads = None;
            (r.to_jsonl().unwrap(), r.to_csv())
        };
        let (one, eight, again) = (run(1), run(8), run(8));
        if one != eight {
            problems.push("1-thread and 8-thread reports differ");
        }
        if eight != again {
            problems.push("repeated reports differ");
        }
    }
    Verdict::hard(
        problems.is_empty(),
        if problems.is_empty() {
            "datasets, checkpoints and reports are byte-identical; 1 vs 8 threads identical".into()
        } else {
            problems.join("; ")
        },
    )
}

fn c11_serialization(_: &mut Shared) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = Vec::new();
    for id in EnvId::ALL {
        let env = Env::new(id);
        let records: Vec<DatasetRecord> = (0..1000).map(|i| random_record(&env, &mut rng, i)).collect();
        let path = dir.path().join(format!("{}.bin", id.as_str()));
        dataset_write(&path, &env, &records).unwrap();
        let (got_env, back) = dataset_read(&path, Some(id)).unwrap();
        let exact = got_env == id
            && back.len() == records.len()
            && back.iter().zip(&records).all(|(a, b)| {
                a == b
                    && a.oracle_cost.to_bits() == b.oracle_cost.to_bits()
                    && a.oracle_states
                        .as_slice()
                        .iter()
                        .zip(b.oracle_states.as_slice())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            });
        if !exact {
            failures.push(format!("{} dataset", id.as_str()));
        }
    }
    let kinds = [
        LossKind::Regression,
        LossKind::MultiOutput,
        LossKind::Pairwise,
        LossKind::Wta,
        LossKind::Mix,
    ];
    let path = dir.path().join("model.ckpt");
    let mut ckpt_ok = 0;
    for i in 0..1000 {
        let env = Env::new(EnvId::ALL[i % 4]);
        let kind = kinds[rng.random_range(0..kinds.len())];
        let k = if kind == LossKind::Regression {
            1
        } else {
            rng.random_range(1..=4)
        };
        let model = small_model(&env, k, kind, &mut rng);
        checkpoint_save(&model, &path).unwrap();
        let back = checkpoint_load(&path, Some(env.id)).unwrap();
        let bits_equal = model
            .tensors()
            .iter()
            .zip(back.tensors())
            .all(|(a, b)| a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        ckpt_ok += usize::from(back == model && bits_equal);
    }
    if ckpt_ok != 1000 {
        failures.push(format!("{} of 1000 checkpoints", 1000 - ckpt_ok));
    }
    Verdict::hard(
        failures.is_empty(),
        if failures.is_empty() {
            "4000 dataset records and 1000 checkpoints round-trip bit-exactly".into()
        } else {
            format!("mismatch in {}", failures.join(", "))
        },
    )
}

fn cartpole_sequential_report(s: &Shared) -> Option<&EvalReport> {
    s.corpus.iter().find(|r| {
        r.env == EnvId::Cartpole
            && r.mode == EvalMode::Sequential
            && r.strategy("miso_wta").is_some()
            && r.strategy("warm_start").is_some()
    })
}

fn c12_mode_activity(s: &mut Shared) -> Verdict {
    if cartpole_sequential_report(s).is_none() {
        c3_cartpole(s);
    }
    let cart_active = cartpole_sequential_report(s)
        .unwrap()
        .strategy("miso_wta")
        .unwrap()
        .active_candidates();
    let env = Env::new(EnvId::Toy1d);
    let profiles = OptimizerProfiles::for_env(env.id);
    let models: Vec<(String, ModelParams)> = s
        .toy()
        .0
        .models
        .iter()
        .filter(|(n, _)| n != "ensemble")
        .map(|(n, m)| (n.clone(), m[0].clone()))
        .collect();
    let mut details = Vec::new();
    let mut toy_ok = true;
    for (name, model) in models {
        let kind: StrategyKind = name.parse().unwrap();
        let strategy = Strategy::new(StrategyConfig::new(kind, 2), vec![model], &env).unwrap();
        let mut cfg = EvalConfig::new(env.id, EvalMode::OneOff, ExecMode::Single);
        cfg.seed = 12;
        let report = eval_one_off(&env, &profiles, &[strategy], &cfg).unwrap();
        let freq = report.strategies[0].argmin_frequency.clone();
        toy_ok &= freq.iter().all(|f| *f > 0.0);
        details.push(format!("toy {name} {freq:?}"));
        s.corpus.push(report);
    }
    details.push(format!("cartpole miso_wta K=8 active heads {cart_active}"));
    Verdict {
        pass: toy_ok && cart_active >= 3,
        soft: true,
        detail: details.join("; "),
    }
}

type Criterion = (u32, &'static str, fn(&mut Shared) -> Verdict);

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "toy-task reproduction", c1_toy),
        (2, "guarantee with the default candidate", c2_guarantee),
        (3, "cartpole sequential cost reduction", c3_cartpole),
        (4, "optimizer correctness", c4_optimizers),
        (5, "gradient suite", c5_gradients),
        (6, "loss algebra", c6_loss_algebra),
        (7, "monotone improvement and feasibility", c7_monotone),
        (8, "best-of-K monotonicity", c8_best_of_k),
        (9, "inference scaling", c9_inference),
        (10, "determinism and parallel equivalence", c10_determinism),
        (11, "serialization round-trips", c11_serialization),
        (12, "mode activity", c12_mode_activity),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = Shared::default();
    let mut hard_failures = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = run(&mut shared);
        let tag = match (v.pass, v.soft) {
            (true, _) => "PASS",
            (false, true) => "WARN",
            (false, false) => "FAIL",
        };
        hard_failures += usize::from(!v.pass && !v.soft);
        println!(
            "[{tag}] {id:>2} {name}: {} ({:.1}s)",
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if hard_failures > 0 {
        println!("{hard_failures} acceptance criterion(s) failed");
        std::process::exit(1);
    }
}
