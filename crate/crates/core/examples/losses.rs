//! Scores a spread of candidates against one oracle label under each loss.

use miso::envs::{Env, EnvId};
use miso::harness::generate;
use miso::losses::{candidate_loss, LossConfig, LossKind};
use miso::optim::OptimizerProfiles;

fn main() -> miso::Result<()> {
    let env = Env::new(EnvId::Cartpole);
    let p = OptimizerProfiles::for_env(env.id);
    let (records, _) = generate(&env, 1, &p.online, &p.oracle, 0)?;
    let rec = &records[10];

    // The label itself, plus copies shifted by constant offsets.
    let label = rec.oracle_controls.as_slice();
    let cands: Vec<Vec<f64>> = [0.0, 0.5, -1.0, 2.0]
        .iter()
        .map(|d| {
            label
                .iter()
                .map(|u| (u + d).clamp(env.u_min[0], env.u_max[0]))
                .collect()
        })
        .collect();
    let parts: Vec<&[f64]> = cands.iter().map(|c| c.as_slice()).collect();

    for (kind, alpha) in [
        (LossKind::MultiOutput, 0.0),
        (LossKind::Pairwise, 0.01),
        (LossKind::Wta, 0.0),
        (LossKind::Mix, 0.05),
    ] {
        let cfg = LossConfig {
            kind,
            state_weight: 0.01,
            alpha_k: alpha,
            ..LossConfig::default()
        };
        let out = candidate_loss(&env, &parts, rec, &cfg)?;
        let regs: Vec<String> = out.reg_values.iter().map(|v| format!("{v:.3}")).collect();
        println!(
            "{kind:?}: loss {:.4}, winner {:?}, per-candidate [{}]",
            out.value,
            out.winner,
            regs.join(", ")
        );
    }
    Ok(())
}
