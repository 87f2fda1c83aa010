//! Predicted wall-clock speedup when a transition costs `eta` policy
//! evaluations, `M` processes share the policy work and the iteration needs
//! `K` rounds.
//!
//! cargo run --example speedup_model

use picard_sim::theory::speedup_model;

fn main() -> picard_sim::Result<()> {
    let processes = 200;
    print!("{:>6}", "eta\\K");
    let rounds = [1, 2, 5, 10, 15];
    for k in rounds {
        print!("{k:>9}");
    }
    println!();
    for eta in [0.0, 0.01, 0.1, 1.0] {
        print!("{eta:>6}");
        for k in rounds {
            print!("{:>9.2}", speedup_model(eta, processes, k)?);
        }
        println!();
    }
    Ok(())
}
