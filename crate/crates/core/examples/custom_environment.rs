//! Plugging a new environment into the engine: a set of shared counters where
//! each request asks to take one unit from a counter and the policy declines
//! once the counter is low. The engine needs only the dynamics and a null
//! action.
//!
//! cargo run --example custom_environment

use picard_sim::engine::{picard_simulate, sequential_actions, Environment, PartitionPlan, PicardConfig, Policy};
use picard_sim::PolicyError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Counters {
    start: Vec<u32>,
}

impl Environment for Counters {
    type State = Vec<u32>;
    type Action = bool;
    type Disturbance = usize;

    fn initial_state(&self) -> Vec<u32> {
        self.start.clone()
    }

    fn null_action(&self) -> bool {
        false
    }

    fn is_feasible(&self, state: &Vec<u32>, counter: &usize, take: &bool) -> bool {
        !take || state[*counter] > 0
    }

    fn step(&self, state: &mut Vec<u32>, take: &bool, counter: &usize) {
        if *take {
            state[*counter] -= 1;
        }
    }
}

/// Takes a unit while more than `reserve` remain.
struct KeepReserve {
    reserve: u32,
}

impl Policy<Counters> for KeepReserve {
    fn evaluate(&self, _: &Counters, state: &Vec<u32>, counter: &usize) -> Result<bool, PolicyError> {
        Ok(state[*counter] > self.reserve)
    }
}

fn main() -> picard_sim::Result<()> {
    let env = Counters { start: vec![40; 8] };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let requests: Vec<usize> = (0..1_000).map(|_| rng.gen_range(0..8)).collect();
    let policy = KeepReserve { reserve: 3 };

    let oracle = sequential_actions(&env, &policy, &requests)?;
    // Requests for the same counter go to the same process.
    let plan = PartitionPlan::new(requests.iter().map(|&c| (c % 4) as u32).collect(), 4)?;
    let run = picard_simulate(&env, &policy, &requests, &plan, &PicardConfig::whole_horizon(), Some(&oracle))?;

    println!("granted {} of {} requests", oracle.iter().filter(|&&a| a).count(), requests.len());
    println!(
        "picard: correct after {:?}, converged after {}, equal {}",
        run.iterations_to_correct,
        run.iterations_to_converged,
        run.actions == oracle
    );
    Ok(())
}
