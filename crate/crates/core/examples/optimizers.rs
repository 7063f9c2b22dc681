//! Solves one cartpole instance with each local optimizer, then checks iLQR
//! against the closed-form Riccati solution on a linear-quadratic problem.

use miso::envs::{Env, EnvId, Scenario};
use miso::optim::lq::LinearQuadratic;
use miso::optim::{ilqr_solve, riccati_lqr, solve, Algorithm, OptimizerConfig};
use miso::ControlSequence;

fn main() -> miso::Result<()> {
    let env = Env::new(EnvId::Cartpole);
    let inst = Scenario::new(&env, 7).instance_at(0, None, 0);
    let init = ControlSequence::zeros(env.horizon, env.m);
    println!("cartpole x0 = {:?}", inst.x0);
    for algorithm in [Algorithm::Ilqr, Algorithm::BoxDdp, Algorithm::Mppi] {
        let cfg = OptimizerConfig {
            algorithm,
            max_iters: 20,
            ..OptimizerConfig::default()
        };
        let sol = solve(&env.problem(&inst), &init, &cfg, 1)?;
        println!(
            "{algorithm:?}: cost {:.4} -> {:.4} in {} iterations, first force {:+.3}",
            sol.init_cost,
            sol.cost(),
            sol.iterations_used,
            sol.controls().at(0)[0]
        );
    }

    let lq = LinearQuadratic::double_integrator(0.1, 30, vec![1.0, -0.5]);
    let exact = riccati_lqr(&lq.a, &lq.b, &lq.q, &lq.r, &lq.q_terminal, 30, &lq.x0)?;
    let sol = ilqr_solve(&lq, &ControlSequence::zeros(30, 1), &OptimizerConfig::default())?;
    println!("double integrator: riccati {:.10}, ilqr {:.10}", exact.cost, sol.cost());
    Ok(())
}
