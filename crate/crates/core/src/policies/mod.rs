//! Fulfillment policies and an executable check of the regularity
//! conditions under which the iteration bound holds.
//!
//! Every policy picks the best-scoring node among those with positive
//! capacity and inventory of the order's product. Ties go to the lowest node
//! index and the null action is only chosen when nothing feasible scores at
//! least as well as it.

mod assumptions;
mod dual;

pub use assumptions::{check_assumptions, check_assumptions_on, Assumption, AssumptionReport, Witness};
pub use dual::{DualNetworkPolicy, MlpParams, HIDDEN_WIDTH};

use crate::engine::Policy;
use crate::error::PolicyError;
use crate::fo::{FoAction, FoEnv, FoState, Order};

/// Argmax of `score(j)` over feasible nodes. With `null_score` set, a node is
/// only chosen when its score is at least that value.
#[inline]
pub(crate) fn best_feasible_node(
    state: &FoState,
    order: &Order,
    null_score: Option<f64>,
    mut score: impl FnMut(usize) -> f64,
) -> FoAction {
    let Some(stock) = state.inventory.row(order.product) else {
        return FoAction::Null;
    };
    let mut best: Option<(usize, f64)> = None;
    for (j, (&c, &x)) in state.capacity.iter().zip(stock).enumerate() {
        if c == 0 || x == 0 {
            continue;
        }
        let s = score(j);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    match (best, null_score) {
        (Some((_, s)), Some(floor)) if s < floor => FoAction::Null,
        (Some((j, _)), _) => FoAction::Node(j as u32),
        (None, _) => FoAction::Null,
    }
}

/// Highest-reward feasible node.
pub fn greedy_evaluate(state: &FoState, order: &Order) -> FoAction {
    best_feasible_node(state, order, None, |j| order.rewards[j])
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyPolicy;

impl Policy<FoEnv> for GreedyPolicy {
    fn evaluate(&self, _env: &FoEnv, state: &FoState, order: &Order) -> Result<FoAction, PolicyError> {
        Ok(greedy_evaluate(state, order))
    }
}

/// Greedy with a bonus `gamma * c_j / max_j' c_j'` for remaining capacity.
/// `gamma = 0` is exactly greedy; a very large `gamma` picks the feasible node
/// with the most capacity left.
#[derive(Debug, Clone, Copy)]
pub struct CapacityPenalizedPolicy {
    pub gamma: f64,
}

impl CapacityPenalizedPolicy {
    pub fn new(gamma: f64) -> Result<Self, PolicyError> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(PolicyError(format!("gamma must be finite and non-negative, got {gamma}")));
        }
        Ok(Self { gamma })
    }
}

pub fn capacity_penalized_evaluate(policy: &CapacityPenalizedPolicy, state: &FoState, order: &Order) -> FoAction {
    if policy.gamma == 0.0 {
        return greedy_evaluate(state, order);
    }
    let max_c = state.capacity.iter().copied().max().unwrap_or(0);
    if max_c == 0 {
        return FoAction::Null;
    }
    let scale = policy.gamma / max_c as f64;
    best_feasible_node(state, order, None, |j| {
        order.rewards[j] + scale * state.capacity[j] as f64
    })
}

impl Policy<FoEnv> for CapacityPenalizedPolicy {
    fn evaluate(&self, _env: &FoEnv, state: &FoState, order: &Order) -> Result<FoAction, PolicyError> {
        Ok(capacity_penalized_evaluate(self, state, order))
    }
}

/// Any of the fulfillment policies, for callers that choose at runtime.
#[derive(Debug, Clone)]
pub enum FoPolicy {
    Greedy(GreedyPolicy),
    DualNetwork(Box<DualNetworkPolicy>),
    CapacityPenalized(CapacityPenalizedPolicy),
}

impl FoPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            FoPolicy::Greedy(_) => "greedy",
            FoPolicy::DualNetwork(_) => "dual",
            FoPolicy::CapacityPenalized(_) => "penalized",
        }
    }

    /// Capacity bonus strength, zero for policies without one.
    pub fn gamma(&self) -> f64 {
        match self {
            FoPolicy::CapacityPenalized(p) => p.gamma,
            _ => 0.0,
        }
    }
}

impl Policy<FoEnv> for FoPolicy {
    fn evaluate(&self, env: &FoEnv, state: &FoState, order: &Order) -> Result<FoAction, PolicyError> {
        match self {
            FoPolicy::Greedy(p) => p.evaluate(env, state, order),
            FoPolicy::DualNetwork(p) => p.evaluate(env, state, order),
            FoPolicy::CapacityPenalized(p) => p.evaluate(env, state, order),
        }
    }
}
