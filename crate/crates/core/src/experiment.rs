//! One fulfillment run as a row of metrics, shared by the command line and
//! the examples.

use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::engine::{picard_simulate, Execution, PartitionPlan, PicardConfig};
use crate::error::{Result, SimError};
use crate::fo::FoAction;
use crate::instgen::{make_product_partition, make_uniform_partition, Instance};
use crate::policies::FoPolicy;
use crate::theory::eval_proxy;
use crate::timewarp::{time_warp_with_plan, WindowRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Sequential,
    Picard,
    Timewarp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Partitioning {
    Product,
    Uniform,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Sequential => "sequential",
            Algo::Picard => "picard",
            Algo::Timewarp => "timewarp",
        })
    }
}

impl fmt::Display for Partitioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partitioning::Product => "product",
            Partitioning::Uniform => "uniform",
        })
    }
}

pub fn make_partition(instance: &Instance, partitioning: Partitioning, processes: usize, seed: u64) -> Result<PartitionPlan> {
    match partitioning {
        Partitioning::Product => make_product_partition(instance, processes, seed),
        Partitioning::Uniform => make_uniform_partition(instance, processes, seed),
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub algo: Algo,
    pub partitioning: Partitioning,
    pub processes: usize,
    /// Seeds the partition plan.
    pub seed: u64,
    pub max_steps: Option<usize>,
    pub max_iterations: Option<usize>,
    pub execution: Execution,
    pub record_trace: bool,
    pub window_rule: WindowRule,
}

impl RunOptions {
    pub fn new(algo: Algo, partitioning: Partitioning, processes: usize, seed: u64) -> Self {
        Self {
            algo,
            partitioning,
            processes,
            seed,
            max_steps: None,
            max_iterations: None,
            execution: Execution::Serial,
            record_trace: false,
            window_rule: WindowRule::default(),
        }
    }
}

/// A `results.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub struct RunRecord {
    pub seed: u64,
    pub algo: Algo,
    #[serde(rename = "M")]
    pub processes: usize,
    pub beta: f64,
    pub gamma: f64,
    pub partitioning: Partitioning,
    pub iterations_to_correct: Option<usize>,
    pub iterations_to_converged: Option<usize>,
    pub conflicts: Option<usize>,
    pub sync_rounds: Option<usize>,
    pub rollbacks: Option<usize>,
    pub eval_proxy: f64,
    pub oracle_equal: Option<bool>,
}

/// A `trace.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceLine {
    pub seed: u64,
    pub algo: Algo,
    #[serde(rename = "M")]
    pub processes: usize,
    pub gamma: f64,
    pub partitioning: Partitioning,
    pub chunk: usize,
    pub iteration: usize,
    pub changed_slots: usize,
    pub max_evals: usize,
    pub t_reset: usize,
    pub window_length: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub actions: Vec<FoAction>,
    pub trace: Vec<TraceLine>,
    pub wall_time_s: f64,
}

/// Runs one configuration. With an oracle the record says whether the
/// actions match it; a mismatch is reported, not raised.
pub fn run_fo(instance: &Instance, policy: &FoPolicy, options: &RunOptions, oracle: Option<&[FoAction]>) -> Result<RunOutput> {
    if options.processes == 0 {
        return Err(SimError::InvalidConfig("M must be at least 1".into()));
    }
    let env = instance.env();
    let horizon = instance.horizon();
    let started = Instant::now();
    let mut record = RunRecord {
        seed: options.seed,
        algo: options.algo,
        processes: options.processes,
        beta: instance.meta.beta,
        gamma: policy.gamma(),
        partitioning: options.partitioning,
        iterations_to_correct: None,
        iterations_to_converged: None,
        conflicts: None,
        sync_rounds: None,
        rollbacks: None,
        eval_proxy: 1.0,
        oracle_equal: None,
    };
    let line = |chunk, iteration, changed_slots, max_evals, t_reset, window_length| TraceLine {
        seed: options.seed,
        algo: options.algo,
        processes: options.processes,
        gamma: policy.gamma(),
        partitioning: options.partitioning,
        chunk,
        iteration,
        changed_slots,
        max_evals,
        t_reset,
        window_length,
    };
    let mut trace = Vec::new();
    let actions = match options.algo {
        Algo::Sequential => crate::engine::sequential_actions(&env, policy, &instance.orders)?,
        Algo::Picard => {
            let plan = make_partition(instance, options.partitioning, options.processes, options.seed)?;
            let mut config = PicardConfig::default().with_execution(options.execution);
            config.max_steps = options.max_steps;
            config.max_iterations = options.max_iterations;
            config.record_trace = options.record_trace;
            let run = picard_simulate(&env, policy, &instance.orders, &plan, &config, oracle)?;
            record.iterations_to_correct = run.iterations_to_correct;
            record.iterations_to_converged = Some(run.iterations_to_converged);
            record.conflicts = Some(run.conflicts);
            record.eval_proxy = eval_proxy(horizon, run.policy_eval_count_sequential_equivalent)?;
            trace.extend(
                run.trace
                    .iter()
                    .map(|r| line(r.chunk, r.iteration, r.changed_slots, r.max_evals, r.t_reset, None)),
            );
            run.actions
        }
        Algo::Timewarp => {
            let plan = make_partition(instance, options.partitioning, options.processes, options.seed)?;
            let run = time_warp_with_plan(&env, policy, &instance.orders, &plan, options.window_rule)?;
            record.sync_rounds = Some(run.sync_rounds);
            record.rollbacks = Some(run.rollbacks);
            record.eval_proxy = eval_proxy(horizon, run.policy_eval_count_sequential_equivalent)?;
            if options.record_trace {
                trace.extend(run.trace.iter().map(|r| {
                    line(r.chunk, r.iteration, r.changed_slots, r.max_evals, r.t_reset, Some(r.window_length))
                }));
            }
            run.actions
        }
    };
    if horizon == 0 {
        record.eval_proxy = 1.0;
    }
    record.oracle_equal = oracle.map(|o| o == actions.as_slice());
    Ok(RunOutput {
        record,
        actions,
        trace,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}
