//! Windowed optimistic baseline for fulfillment.
//!
//! From the synchronized state at `t0` no node can run out of capacity
//! within the next `Δ = min_j c_j` orders, whatever they do, so the set of
//! nodes with capacity left is fixed for the window. Once a node is empty
//! that minimum is zero and the window is clamped to one step;
//! [`WindowRule::NonDepleted`] takes the minimum over non-empty nodes
//! instead, which is equally safe. Within a window each process evaluates the policy on
//! its own steps, starting from the synchronized state and taking the null
//! action everywhere else; the owned actions are then applied to the global
//! state in time order. If one of them turns out infeasible, the window is
//! rolled back and executed sequentially.
//!
//! A process that only takes null on foreign steps sees the global state plus
//! its own actions, so the processes are run one after another on the shared
//! state and their effects undone, which gives the same result as running
//! them on private copies.

use serde::Serialize;

use crate::engine::{evaluate_checked, PartitionPlan, Policy};
use crate::error::{Result, SimError};
use crate::fo::{fo_feasible, FoAction, FoEnv, FoState, Order};
use crate::instgen::{make_product_partition, Instance};

/// One row per synchronization round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TimeWarpTraceRow {
    pub chunk: usize,
    pub iteration: usize,
    /// Steps re-executed sequentially after a rollback, else 0.
    pub changed_slots: usize,
    pub max_evals: usize,
    pub t_reset: usize,
    pub window_length: usize,
}

#[derive(Debug, Clone)]
pub struct TimeWarpResult {
    pub actions: Vec<FoAction>,
    pub sync_rounds: usize,
    pub rollbacks: usize,
    pub policy_eval_count_sequential_equivalent: usize,
    pub total_policy_evals: usize,
    pub trace: Vec<TimeWarpTraceRow>,
}

/// How the window length is chosen from the synchronized capacities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum WindowRule {
    /// `min_j c_j` over every node; a single step once any node is empty.
    #[default]
    AllNodes,
    /// `min_j c_j` over nodes with `c_j > 0`; the whole remainder once
    /// every node is empty.
    NonDepleted,
}

/// Size of the safe window at `state`, at least 1 and at most `remaining`.
pub fn safe_window(state: &FoState, remaining: usize, rule: WindowRule) -> usize {
    let caps = state.capacity.iter().copied();
    let min = match rule {
        WindowRule::AllNodes => caps.min(),
        WindowRule::NonDepleted => caps.filter(|&c| c > 0).min(),
    };
    min.map_or(remaining, |c| c as usize).clamp(1, remaining.max(1))
}

fn apply(state: &mut FoState, action: FoAction, order: &Order) {
    if let Some(j) = action.node() {
        state.capacity[j] -= 1;
        let units = state.inventory.get(order.product, j);
        state.inventory.set(order.product, j, units - 1);
    }
}

fn undo(state: &mut FoState, action: FoAction, order: &Order) {
    if let Some(j) = action.node() {
        state.capacity[j] += 1;
        state.inventory.add(order.product, j, 1);
    }
}

/// Runs the baseline under an explicit partition plan.
pub fn time_warp_with_plan<P: Policy<FoEnv>>(
    env: &FoEnv,
    policy: &P,
    orders: &[Order],
    plan: &PartitionPlan,
    rule: WindowRule,
) -> Result<TimeWarpResult> {
    let horizon = orders.len();
    if plan.len() != horizon {
        return Err(SimError::LengthMismatch {
            expected: horizon,
            actual: plan.len(),
        });
    }
    let mut result = TimeWarpResult {
        actions: vec![FoAction::Null; horizon],
        sync_rounds: 0,
        rollbacks: 0,
        policy_eval_count_sequential_equivalent: 0,
        total_policy_evals: 0,
        trace: Vec::new(),
    };
    let mut global = env.initial().clone();
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); plan.processes()];
    let mut active: Vec<usize> = Vec::new();
    let mut t0 = 0;
    while t0 < horizon {
        let delta = safe_window(&global, horizon - t0, rule);
        let end = t0 + delta;
        for t in t0..end {
            let m = plan.owner(t);
            if owned[m].is_empty() {
                active.push(m);
            }
            owned[m].push(t);
        }

        let mut max_evals = 0;
        for &m in &active {
            let steps = &owned[m];
            for &t in steps {
                let a = evaluate_checked(env, policy, &global, &orders[t], t)?;
                apply(&mut global, a, &orders[t]);
                result.actions[t] = a;
            }
            for &t in steps.iter().rev() {
                undo(&mut global, result.actions[t], &orders[t]);
            }
            max_evals = max_evals.max(steps.len());
        }
        result.total_policy_evals += delta;

        let mut rollback_at = None;
        for t in t0..end {
            let a = result.actions[t];
            if fo_feasible(&global, &orders[t], a) {
                apply(&mut global, a, &orders[t]);
            } else {
                rollback_at = Some(t);
                break;
            }
        }
        let mut replayed = 0;
        if let Some(stop) = rollback_at {
            for t in (t0..stop).rev() {
                undo(&mut global, result.actions[t], &orders[t]);
            }
            for t in t0..end {
                let a = evaluate_checked(env, policy, &global, &orders[t], t)?;
                apply(&mut global, a, &orders[t]);
                result.actions[t] = a;
            }
            result.rollbacks += 1;
            result.total_policy_evals += delta;
            replayed = delta;
        }
        let critical = max_evals + replayed;
        result.policy_eval_count_sequential_equivalent += critical;
        result.trace.push(TimeWarpTraceRow {
            chunk: result.sync_rounds,
            iteration: result.sync_rounds + 1,
            changed_slots: replayed,
            max_evals: critical,
            t_reset: t0,
            window_length: delta,
        });
        result.sync_rounds += 1;

        for m in active.drain(..) {
            owned[m].clear();
        }
        t0 = end;
    }
    Ok(result)
}

/// Runs the baseline on `instance` with `M` product-partitioned processes.
pub fn time_warp_simulate<P: Policy<FoEnv>>(
    instance: &Instance,
    policy: &P,
    processes: usize,
    seed: u64,
) -> Result<TimeWarpResult> {
    let plan = make_product_partition(instance, processes, seed)?;
    time_warp_with_plan(&instance.env(), policy, &instance.orders, &plan, WindowRule::default())
}
