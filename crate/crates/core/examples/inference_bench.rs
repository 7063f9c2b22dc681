//! Forward-pass latency of one K-head network against K separate networks.

use miso::envs::{Env, EnvId};
use miso::harness::bench_inference;
use miso::net::Architecture;

fn main() -> miso::Result<()> {
    let env = Env::new(EnvId::Cartpole);
    let table = bench_inference(&env, &Architecture::default(), &[1, 4, 16, 32], 200, 20, 0)?;
    print!("{}", table.render());
    Ok(())
}
