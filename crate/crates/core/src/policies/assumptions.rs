//! Randomised check of the three regularity conditions behind the
//! iteration bound:
//!
//! 1. inventory independence: the decision for product `i` ignores the
//!    inventory of every other product;
//! 2. consistency: changing the inventory `x_{i,j'}` and capacity `c_{j'}` of
//!    one node `j'` can only move the decision to `j'`;
//! 3. monotonicity: adding a unit of inventory at the chosen node, or a unit
//!    of capacity at any node with capacity left, leaves the decision alone.
//!
//! Violations are data: the report counts them and keeps the first witness
//! for each condition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Environment, Policy};
use crate::error::{Result, SimError};
use crate::fo::{FoAction, FoEnv, FoState, Inventory, Order};

const MAX_UNITS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    InventoryIndependence,
    Consistency,
    Monotonicity,
}

impl Assumption {
    pub const ALL: [Assumption; 3] = [
        Assumption::InventoryIndependence,
        Assumption::Consistency,
        Assumption::Monotonicity,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone)]
pub struct Witness {
    pub assumption: Assumption,
    pub state: FoState,
    pub perturbed: FoState,
    pub order: Order,
    pub before: FoAction,
    pub after: FoAction,
}

#[derive(Debug, Clone, Default)]
pub struct AssumptionReport {
    pub trials: usize,
    violations: [usize; 3],
    witnesses: [Option<Box<Witness>>; 3],
}

impl AssumptionReport {
    pub fn violations(&self, a: Assumption) -> usize {
        self.violations[a.index()]
    }

    pub fn witness(&self, a: Assumption) -> Option<&Witness> {
        self.witnesses[a.index()].as_deref()
    }

    pub fn total_violations(&self) -> usize {
        self.violations.iter().sum()
    }

    pub fn is_clean(&self) -> bool {
        self.total_violations() == 0
    }

    fn record(&mut self, w: Witness) {
        let i = w.assumption.index();
        self.violations[i] += 1;
        if self.witnesses[i].is_none() {
            self.witnesses[i] = Some(Box::new(w));
        }
    }
}

struct Probe<'a, P> {
    policy: &'a P,
    env: &'a FoEnv,
    order: &'a Order,
    base: &'a FoState,
    before: FoAction,
}

impl<P: Policy<FoEnv>> Probe<'_, P> {
    fn decide(&self, s: &FoState) -> Result<FoAction> {
        let a = self
            .policy
            .evaluate(self.env, s, self.order)
            .map_err(|e| SimError::Policy { t: self.order.t, reason: e.0 })?;
        if !self.env.is_feasible(s, self.order, &a) {
            return Err(SimError::InfeasibleAction { t: self.order.t });
        }
        Ok(a)
    }

    fn expect(
        &self,
        report: &mut AssumptionReport,
        assumption: Assumption,
        perturbed: FoState,
        allowed: &[FoAction],
    ) -> Result<()> {
        let after = self.decide(&perturbed)?;
        if !allowed.contains(&after) {
            report.record(Witness {
                assumption,
                state: self.base.clone(),
                perturbed,
                order: self.order.clone(),
                before: self.before,
                after,
            });
        }
        Ok(())
    }
}

/// Checks all three conditions at one `(state, order)` input. `rng` drives
/// the choice of perturbations.
pub fn check_assumptions_on<P: Policy<FoEnv>>(
    policy: &P,
    env: &FoEnv,
    state: &FoState,
    order: &Order,
    rng: &mut impl Rng,
    report: &mut AssumptionReport,
) -> Result<()> {
    let nodes = state.nodes();
    let products = state.inventory.products();
    let before = Probe {
        policy,
        env,
        order,
        base: state,
        before: FoAction::Null,
    }
    .decide(state)?;
    let probe = Probe {
        policy,
        env,
        order,
        base: state,
        before,
    };
    report.trials += 1;

    if products > 1 {
        let mut other = rng.gen_range(0..products as u32 - 1);
        if other >= order.product {
            other += 1;
        }
        let mut s = state.clone();
        for j in 0..nodes {
            s.inventory.set(other, j, rng.gen_range(0..=MAX_UNITS));
        }
        probe.expect(report, Assumption::InventoryIndependence, s, &[before])?;
    }

    let candidates: Vec<usize> = (0..nodes).filter(|&j| before.node() != Some(j)).collect();
    if !candidates.is_empty() {
        let jp = candidates[rng.gen_range(0..candidates.len())];
        let mut s = state.clone();
        s.inventory.set(order.product, jp, rng.gen_range(0..=MAX_UNITS));
        s.capacity[jp] = rng.gen_range(0..=MAX_UNITS);
        probe.expect(report, Assumption::Consistency, s, &[before, FoAction::Node(jp as u32)])?;
    }

    if let Some(j) = before.node() {
        let mut s = state.clone();
        s.inventory.add(order.product, j, 1);
        probe.expect(report, Assumption::Monotonicity, s, &[before])?;
    }
    for jp in (0..nodes).filter(|&j| state.capacity[j] > 0) {
        let mut s = state.clone();
        s.capacity[jp] += 1;
        probe.expect(report, Assumption::Monotonicity, s, &[before])?;
    }
    Ok(())
}

fn sample_input(env: &FoEnv, rng: &mut ChaCha8Rng, t: usize) -> (FoState, Order) {
    let nodes = env.nodes();
    let products = env.products().max(1);
    let product = rng.gen_range(0..products as u32);
    let mut inventory = Inventory::from_entries(products, nodes, []).expect("empty inventory");
    for j in 0..nodes {
        inventory.set(product, j, rng.gen_range(0..=MAX_UNITS));
    }
    let capacity = (0..nodes).map(|_| rng.gen_range(0..=MAX_UNITS)).collect();
    // Two-decimal rewards so that ties actually occur.
    let rewards = (0..nodes)
        .map(|_| rng.gen_range(0..=100) as f64 / 100.0)
        .collect();
    let order = Order {
        t,
        product,
        origin: 0,
        rewards,
    };
    (FoState { inventory, capacity }, order)
}

/// Runs `trials` random inputs shaped like `env` (its node and product
/// counts; states use small unit counts so that depletion is common).
pub fn check_assumptions<P: Policy<FoEnv>>(
    policy: &P,
    env: &FoEnv,
    trials: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    if trials == 0 {
        return Err(SimError::InvalidConfig("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AssumptionReport::default();
    for trial in 0..trials {
        let (state, order) = sample_input(env, &mut rng, trial);
        check_assumptions_on(policy, env, &state, &order, &mut rng, &mut report)?;
    }
    Ok(report)
}
