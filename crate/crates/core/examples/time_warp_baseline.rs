//! Picard iteration against the windowed optimistic baseline. Once any node
//! runs out of capacity the baseline can only advance one order per
//! synchronization; the alternative window rule ignores empty nodes.
//!
//! cargo run --release --example time_warp_baseline

use picard_sim::engine::sequential_actions;
use picard_sim::experiment::{run_fo, Algo, Partitioning, RunOptions};
use picard_sim::instgen::generate_instance;
use picard_sim::policies::{FoPolicy, GreedyPolicy};
use picard_sim::timewarp::WindowRule;

fn main() -> picard_sim::Result<()> {
    let instance = generate_instance(30, 10_000, 30_000, 0.0, 0.8, 0)?;
    let policy = FoPolicy::Greedy(GreedyPolicy);
    let oracle = sequential_actions(&instance.env(), &policy, &instance.orders)?;

    let picard = run_fo(&instance, &policy, &RunOptions::new(Algo::Picard, Partitioning::Product, 256, 0), Some(&oracle))?;
    println!("picard              proxy {:>7.2}  iterations {:?}", picard.record.eval_proxy, picard.record.iterations_to_converged);

    for rule in [WindowRule::AllNodes, WindowRule::NonDepleted] {
        let mut options = RunOptions::new(Algo::Timewarp, Partitioning::Product, 256, 0);
        options.window_rule = rule;
        let tw = run_fo(&instance, &policy, &options, Some(&oracle))?;
        println!(
            "timewarp {:<12} proxy {:>7.2}  rounds {:>6}  rollbacks {}  equal {:?}",
            format!("{rule:?}"),
            tw.record.eval_proxy,
            tw.record.sync_rounds.unwrap(),
            tw.record.rollbacks.unwrap(),
            tw.record.oracle_equal,
        );
    }
    Ok(())
}
