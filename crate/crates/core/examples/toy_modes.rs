//! Trains the toy predictors and shows which heads land in which well.
//! Takes about twenty seconds on one core.

use miso::harness::{toy_demo, ToyOptions};

fn main() -> miso::Result<()> {
    let table = toy_demo(&ToyOptions::default())?;
    print!("{}", table.render());
    for method in ["miso_wta", "miso_mix", "miso_pd", "ensemble"] {
        println!("{method:>9}: final states {:?}", table.final_states(method));
    }
    Ok(())
}
