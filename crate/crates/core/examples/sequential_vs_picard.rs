//! Reproduces a sequential greedy rollout with Picard iteration and reports
//! how many rounds it took and how much shorter the critical path was.
//!
//! cargo run --release --example sequential_vs_picard

use picard_sim::engine::{picard_simulate, sequential_actions, PicardConfig};
use picard_sim::instgen::{generate_instance, make_product_partition};
use picard_sim::policies::GreedyPolicy;
use picard_sim::theory::evaluation_speedup_proxy;

fn main() -> picard_sim::Result<()> {
    let instance = generate_instance(30, 1_000, 3_000, 0.0, 0.8, 7)?;
    let env = instance.env();
    let oracle = sequential_actions(&env, &GreedyPolicy, &instance.orders)?;

    for processes in [1, 8, 64, 256] {
        let plan = make_product_partition(&instance, processes, 7)?;
        let run = picard_simulate(&env, &GreedyPolicy, &instance.orders, &plan, &PicardConfig::default(), Some(&oracle))?;
        println!(
            "M={processes:>4}  correct after {:?}  converged after {}  proxy {:>7.2}  equal {}",
            run.iterations_to_correct,
            run.iterations_to_converged,
            evaluation_speedup_proxy(&run, instance.horizon())?,
            run.actions == oracle,
        );
    }
    Ok(())
}
