//! Picard iteration on a contractive linear system with state feedback. The
//! error against the sequential rollout shrinks by about the contraction
//! factor each round, and a warm start from a nearby gain begins closer.
//!
//! cargo run --release --example linear_convergence

use picard_sim::linear::{perturbed_gain, picard_convergence_curve, warm_start_cache, LinearSystemSpec};

fn main() -> picard_sim::Result<()> {
    for rho in [0.3, 0.6, 0.9] {
        let spec = LinearSystemSpec::random(4, 4, 200, rho, 11)?;
        let cold = picard_convergence_curve(&spec, None, 1e-3)?;
        let warm_cache = warm_start_cache(&spec, perturbed_gain(&spec, 0.05, 11))?;
        let warm = picard_convergence_curve(&spec, Some(warm_cache), 1e-3)?;
        println!("rho {rho} (measured {:.3})", spec.contraction_factor());
        println!("  cold start  {:?} iterations to 1e-3", cold.iterations_to_tolerance);
        for (k, e) in cold.rmse.iter().take(6).enumerate() {
            println!("    k={:<2} rmse {e:.3e}", k + 1);
        }
        println!(
            "  warm start  {:?} iterations, initial rmse {:.3e} vs {:.3e}",
            warm.iterations_to_tolerance, warm.initial_rmse, cold.initial_rmse
        );
    }
    Ok(())
}
