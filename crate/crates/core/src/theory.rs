//! Checks of the convergence theory against recorded runs.
//!
//! Time indices in this module follow the engine: step `t` is 0-based and
//! `states[t]` is the state entering step `t`, so a length-`T` horizon has
//! `T + 1` states. Depletion times `τ_j` are reported 1-based: `τ_j` is the
//! first `t` in `1..=T` whose entering state has `c_j = 0`, or `T + 1` if
//! there is none.

use serde::Serialize;

use crate::engine::{sequential_rollout_with, PicardResult, Policy, ProcessSnapshot};
use crate::error::{Result, SimError};
use crate::fo::{FoAction, FoEnv, FoState, Order};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepletionProfile {
    tau: Vec<usize>,
    horizon: usize,
}

impl DepletionProfile {
    /// Builds from the capacity vectors of the sequential trajectory,
    /// `T + 1` of them.
    pub fn from_capacities<'a>(capacities: impl IntoIterator<Item = &'a [u32]>) -> Result<Self> {
        let mut tau: Vec<usize> = Vec::new();
        let mut states = 0;
        for (u, c) in capacities.into_iter().enumerate() {
            if u == 0 {
                tau = vec![usize::MAX; c.len()];
            } else if c.len() != tau.len() {
                return Err(SimError::InvalidData(format!("state {u} has {} nodes", c.len())));
            }
            for (j, &cj) in c.iter().enumerate() {
                if cj == 0 && tau[j] == usize::MAX {
                    tau[j] = u + 1;
                }
            }
            states = u + 1;
        }
        if states == 0 {
            return Err(SimError::InvalidData("trajectory has no states".into()));
        }
        let horizon = states - 1;
        // The final state enters no step.
        for t in &mut tau {
            if *t > horizon {
                *t = horizon + 1;
            }
        }
        Ok(Self { tau, horizon })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// 1-based first depletion time per node.
    pub fn tau(&self) -> &[usize] {
        &self.tau
    }

    /// Depletion times in ascending order.
    pub fn sorted_times(&self) -> Vec<usize> {
        let mut t = self.tau.clone();
        t.sort_unstable();
        t
    }

    /// Whether node `j` has no capacity entering 0-based step `t`.
    #[inline]
    pub fn is_depleted(&self, j: usize, t: usize) -> bool {
        self.tau[j] <= t + 1
    }

    /// Nodes with no capacity entering 0-based step `t`.
    pub fn depleted_at(&self, t: usize) -> Vec<usize> {
        (0..self.tau.len()).filter(|&j| self.is_depleted(j, t)).collect()
    }

    /// Nodes that deplete at some step of the horizon.
    pub fn depleted_nodes(&self) -> Vec<usize> {
        (0..self.tau.len()).filter(|&j| self.tau[j] <= self.horizon).collect()
    }

    pub fn depleted_count(&self) -> usize {
        self.tau.iter().filter(|&&t| t <= self.horizon).count()
    }
}

/// Depletion profile of a sequential fulfillment trajectory.
pub fn compute_depletion(oracle_states: &[FoState]) -> Result<DepletionProfile> {
    DepletionProfile::from_capacities(oracle_states.iter().map(|s| s.capacity.as_slice()))
}

/// Sequential actions and depletion profile without keeping the states.
pub fn sequential_depletion<P: Policy<FoEnv>>(
    env: &FoEnv,
    policy: &P,
    orders: &[Order],
) -> Result<(Vec<FoAction>, DepletionProfile)> {
    let mut capacities = Vec::with_capacity(orders.len() + 1);
    let actions = sequential_rollout_with(env, policy, orders, |_, s| capacities.push(s.capacity.clone()))?;
    let profile = DepletionProfile::from_capacities(capacities.iter().map(Vec::as_slice))?;
    Ok((actions, profile))
}

/// One failed check. `k` is the iteration, `t` the 0-based step and `m` the
/// process when known.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: &'static str,
    pub k: usize,
    pub t: usize,
    pub m: Option<usize>,
    pub detail: String,
}

/// Violations as JSON lines.
pub fn violations_to_json_lines(violations: &[Violation]) -> String {
    let mut out = String::new();
    for v in violations {
        out.push_str(&serde_json::to_string(v).expect("violation serializes"));
        out.push('\n');
    }
    out
}

pub const SPECIAL_INVARIANT: &str = "special_invariant";
pub const MONOTONICITY: &str = "monotonicity";

/// Every cached action of every iteration `k >= 1` must be the sequential
/// action or a node that has already depleted on the sequential trajectory.
/// `cache_history[0]` is the initial cache and is not checked.
pub fn check_special_invariant(
    cache_history: &[Vec<FoAction>],
    oracle_actions: &[FoAction],
    profile: &DepletionProfile,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for (k, cache) in cache_history.iter().enumerate().skip(1) {
        for (t, (&a, &seq)) in cache.iter().zip(oracle_actions).enumerate() {
            if a == seq {
                continue;
            }
            let depleted = a.node().is_some_and(|j| j < profile.tau.len() && profile.is_depleted(j, t));
            if !depleted {
                out.push(Violation {
                    check: SPECIAL_INVARIANT,
                    k,
                    t,
                    m: None,
                    detail: format!("cached {a:?}, sequential {seq:?}"),
                });
            }
        }
    }
    out
}

/// Every recorded process state must hold at least the sequential
/// trajectory's capacity and inventory on nodes that still had capacity
/// entering the step that produced the snapshot.
pub fn check_monotonicity_invariant(
    snapshots: &[ProcessSnapshot<FoState>],
    oracle_states: &[FoState],
    profile: &DepletionProfile,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for snap in snapshots {
        let Some(step) = snap.state_index.checked_sub(1) else {
            continue;
        };
        let Some(seq) = oracle_states.get(snap.state_index) else {
            out.push(Violation {
                check: MONOTONICITY,
                k: snap.iteration,
                t: step,
                m: Some(snap.process),
                detail: format!("no sequential state {}", snap.state_index),
            });
            continue;
        };
        let local = &snap.state;
        let products = seq.inventory.products();
        for j in (0..seq.nodes()).filter(|&j| !profile.is_depleted(j, step)) {
            let mut fail = |detail: String| {
                out.push(Violation {
                    check: MONOTONICITY,
                    k: snap.iteration,
                    t: step,
                    m: Some(snap.process),
                    detail,
                })
            };
            if local.capacity[j] < seq.capacity[j] {
                fail(format!("c[{j}] = {} < {}", local.capacity[j], seq.capacity[j]));
            }
            for i in 0..products as u32 {
                let (xl, xs) = (local.inventory.get(i, j), seq.inventory.get(i, j));
                if xl < xs {
                    fail(format!("x[{i}][{j}] = {xl} < {xs}"));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IterationBound {
    /// `|Q_T| + 1`.
    pub bound: usize,
    /// `J + 1`.
    pub node_bound: usize,
    pub iterations_to_correct: Option<usize>,
    pub satisfied: bool,
}

/// Compares a run's `iterations_to_correct` against `|Q_T| + 1`. A run
/// without an oracle comparison is never satisfied.
pub fn check_iteration_bound<S, A>(result: &PicardResult<S, A>, profile: &DepletionProfile) -> IterationBound {
    let bound = profile.depleted_count() + 1;
    IterationBound {
        bound,
        node_bound: profile.tau.len() + 1,
        iterations_to_correct: result.iterations_to_correct,
        satisfied: result.iterations_to_correct.is_some_and(|k| k <= bound),
    }
}

/// Wall-clock speedup predicted when a transition costs `eta` policy
/// evaluations, the policy runs on `M` processes in parallel and the
/// iteration takes `K` rounds: `(η + 1) / ((η + 1/M) K)`.
pub fn speedup_model(eta: f64, processes: usize, iterations: usize) -> Result<f64> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(SimError::InvalidConfig(format!("eta must be finite and non-negative, got {eta}")));
    }
    if processes == 0 || iterations == 0 {
        return Err(SimError::InvalidConfig("M and K must be at least 1".into()));
    }
    Ok((eta + 1.0) / ((eta + 1.0 / processes as f64) * iterations as f64))
}

/// `T` divided by the number of policy evaluations on the critical path.
pub fn eval_proxy(horizon: usize, sequential_equivalent_evals: usize) -> Result<f64> {
    if horizon == 0 || sequential_equivalent_evals == 0 {
        return Err(SimError::InvalidConfig("speedup proxy needs T >= 1 and at least one evaluation".into()));
    }
    Ok(horizon as f64 / sequential_equivalent_evals as f64)
}

pub fn evaluation_speedup_proxy<S, A>(result: &PicardResult<S, A>, horizon: usize) -> Result<f64> {
    eval_proxy(horizon, result.policy_eval_count_sequential_equivalent)
}
