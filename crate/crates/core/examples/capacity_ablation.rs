//! Rewarding spare capacity makes a decision depend on capacity at every
//! node, so stale caches get revised more often before the iteration settles.
//!
//! cargo run --release --example capacity_ablation

use picard_sim::engine::sequential_actions;
use picard_sim::experiment::{median, run_fo, Algo, Partitioning, RunOptions};
use picard_sim::instgen::generate_instance;
use picard_sim::policies::{check_assumptions, CapacityPenalizedPolicy, FoPolicy};

fn main() -> picard_sim::Result<()> {
    println!("{:>5} {:>10} {:>10} {:>10} {:>12}", "gamma", "conflicts", "rounds", "proxy", "assumptions");
    for gamma in [0.0, 0.25, 0.5, 1.0] {
        let penalized = CapacityPenalizedPolicy::new(gamma).expect("non-negative gamma");
        let policy = FoPolicy::CapacityPenalized(penalized);
        let (mut conflicts, mut rounds, mut proxies) = (Vec::new(), Vec::new(), Vec::new());
        for seed in 0..5 {
            let instance = generate_instance(30, 2_000, 6_000, 0.0, 0.8, seed)?;
            let oracle = sequential_actions(&instance.env(), &policy, &instance.orders)?;
            let out = run_fo(&instance, &policy, &RunOptions::new(Algo::Picard, Partitioning::Product, 64, seed), Some(&oracle))?;
            assert_eq!(out.record.oracle_equal, Some(true));
            conflicts.push(out.record.conflicts.unwrap() as f64);
            rounds.push(out.record.iterations_to_converged.unwrap() as f64);
            proxies.push(out.record.eval_proxy);
        }
        let small = generate_instance(4, 6, 200, 0.0, 0.8, 0)?;
        let report = check_assumptions(&penalized, &small.env(), 2_000, 0)?;
        println!(
            "{gamma:>5.2} {:>10} {:>10} {:>10.2} {:>12}",
            median(&conflicts).unwrap(),
            median(&rounds).unwrap(),
            median(&proxies).unwrap(),
            report.is_clean(),
        );
    }
    Ok(())
}
