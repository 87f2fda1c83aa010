//! Checks whole-horizon greedy runs against the structural guarantees: the
//! iteration count bound and the capacity ordering of every process's local
//! state on a constrained instance, and the invariant on cached actions on
//! the same instance with unlimited inventory, the only setting where it
//! holds.
//!
//! cargo run --release --example theory_checks

use picard_sim::engine::{picard_simulate, sequential_simulate, PicardConfig};
use picard_sim::instgen::{generate_instance, make_product_partition, Instance};
use picard_sim::policies::{check_assumptions, Assumption, GreedyPolicy};
use picard_sim::theory::{
    check_iteration_bound, check_monotonicity_invariant, check_special_invariant, compute_depletion,
};

fn check(label: &str, instance: &Instance) -> picard_sim::Result<()> {
    let env = instance.env();
    let oracle = sequential_simulate(&env, &GreedyPolicy, &instance.orders)?;
    let profile = compute_depletion(&oracle.states)?;
    let plan = make_product_partition(instance, 8, 3)?;
    let config = PicardConfig::whole_horizon().with_cache_history().with_snapshots(1);
    let run = picard_simulate(&env, &GreedyPolicy, &instance.orders, &plan, &config, Some(&oracle.actions))?;

    let bound = check_iteration_bound(&run, &profile);
    let special = check_special_invariant(&run.cache_history, &oracle.actions, &profile);
    let monotone = check_monotonicity_invariant(&run.snapshots, &oracle.states, &profile);
    println!("{label}");
    println!("  depletion times {:?}", profile.tau());
    println!(
        "  correct after {:?}, bound |Q_T| + 1 = {}, J + 1 = {}, satisfied {}",
        bound.iterations_to_correct, bound.bound, bound.node_bound, bound.satisfied
    );
    println!("  cached-action violations {}, capacity-order violations {}", special.len(), monotone.len());
    if let Some(v) = special.first() {
        println!("  first: iteration {} step {} ({})", v.k, v.t, v.detail);
    }
    Ok(())
}

fn main() -> picard_sim::Result<()> {
    let instance = generate_instance(5, 40, 500, -0.4, 0.6, 3)?;
    check("constrained inventory", &instance)?;
    check("unlimited inventory", &instance.with_unconstrained_inventory())?;

    let report = check_assumptions(&GreedyPolicy, &instance.env(), 5_000, 3)?;
    for a in Assumption::ALL {
        println!("{a:?}: {} violations in {} trials", report.violations(a), report.trials);
    }
    Ok(())
}
