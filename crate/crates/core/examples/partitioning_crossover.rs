//! Product partitioning against uniform partitioning as demand gets more
//! skewed. Skew concentrates orders on a few products, and a product is
//! never split across processes, so the busiest process grows with it.
//!
//! cargo run --release --example partitioning_crossover

use picard_sim::engine::sequential_actions;
use picard_sim::experiment::{median, run_fo, Algo, Partitioning, RunOptions};
use picard_sim::instgen::generate_instance;
use picard_sim::policies::{FoPolicy, GreedyPolicy};

fn main() -> picard_sim::Result<()> {
    let policy = FoPolicy::Greedy(GreedyPolicy);
    println!("{:>6} {:>12} {:>12}", "beta", "product", "uniform");
    for beta in [0.0, -0.4, -0.8, -1.0] {
        let mut proxies = [Vec::new(), Vec::new()];
        for seed in 0..5 {
            let instance = generate_instance(30, 2_000, 6_000, beta, 0.8, seed)?;
            let oracle = sequential_actions(&instance.env(), &policy, &instance.orders)?;
            for (i, part) in [Partitioning::Product, Partitioning::Uniform].into_iter().enumerate() {
                let options = RunOptions::new(Algo::Picard, part, 128, seed);
                let out = run_fo(&instance, &policy, &options, Some(&oracle))?;
                assert_eq!(out.record.oracle_equal, Some(true));
                proxies[i].push(out.record.eval_proxy);
            }
        }
        let [p, u] = proxies.map(|v| median(&v).unwrap());
        println!("{beta:>6.1} {p:>12.2} {u:>12.2}");
    }
    Ok(())
}
