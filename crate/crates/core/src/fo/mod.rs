//! Fulfillment optimization environment.
//!
//! Orders arrive one per step. Each order names a product and carries a
//! reward per node; the action routes the order to a node that still has
//! both capacity and inventory of that product, or leaves it unfulfilled.
//! Fulfilling at node `j` decrements `c_j` and `x_{i,j}` by one.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::Environment;
use crate::error::{Result, SimError};

const NO_ROW: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FoAction {
    /// Leave the order unfulfilled.
    Null,
    Node(u32),
}

impl FoAction {
    pub fn node(self) -> Option<usize> {
        match self {
            FoAction::Null => None,
            FoAction::Node(j) => Some(j as usize),
        }
    }
}

/// One disturbance: a unit order for `product` originating near `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Order {
    pub t: usize,
    pub product: u32,
    pub origin: u32,
    pub rewards: Box<[f64]>,
}

/// Inventory stored only for products that have any. The product-to-row
/// index is shared between clones; only the unit counts are copied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inventory {
    nodes: usize,
    rows: Arc<Vec<u32>>,
    units: Vec<u32>,
}

impl Inventory {
    /// Builds from `(product, node, units)` triples. Repeated triples add up.
    pub fn from_entries(
        products: usize,
        nodes: usize,
        entries: impl IntoIterator<Item = (u32, u32, u32)>,
    ) -> Result<Self> {
        let mut inv = Inventory {
            nodes,
            rows: Arc::new(vec![NO_ROW; products]),
            units: Vec::new(),
        };
        for (product, node, units) in entries {
            if product as usize >= products || node as usize >= nodes {
                return Err(SimError::InvalidData(format!(
                    "inventory entry ({product}, {node}) outside {products}x{nodes}"
                )));
            }
            inv.add(product, node as usize, units);
        }
        Ok(inv)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn products(&self) -> usize {
        self.rows.len()
    }

    /// Units of `product` at every node, or `None` when the product has no
    /// stored row (all zero).
    #[inline]
    pub fn row(&self, product: u32) -> Option<&[u32]> {
        match self.rows.get(product as usize) {
            Some(&r) if r != NO_ROW => {
                let start = r as usize * self.nodes;
                Some(&self.units[start..start + self.nodes])
            }
            _ => None,
        }
    }

    #[inline]
    pub fn get(&self, product: u32, node: usize) -> u32 {
        self.row(product).map_or(0, |r| r[node])
    }

    /// Adds units, creating the product's row if needed.
    pub fn add(&mut self, product: u32, node: usize, units: u32) {
        let row = self.ensure_row(product);
        self.units[row * self.nodes + node] += units;
    }

    pub fn set(&mut self, product: u32, node: usize, units: u32) {
        let row = self.ensure_row(product);
        self.units[row * self.nodes + node] = units;
    }

    fn ensure_row(&mut self, product: u32) -> usize {
        let existing = self.rows[product as usize];
        if existing != NO_ROW {
            return existing as usize;
        }
        let row = self.units.len() / self.nodes.max(1);
        Arc::make_mut(&mut self.rows)[product as usize] = row as u32;
        self.units.resize(self.units.len() + self.nodes, 0);
        row
    }

    #[inline]
    fn decrement(&mut self, product: u32, node: usize) {
        let r = self.rows[product as usize] as usize;
        self.units[r * self.nodes + node] -= 1;
    }

    /// Non-zero `(product, node, units)` entries, products ascending.
    pub fn entries(&self) -> Vec<(u32, u32, u32)> {
        let mut out = Vec::new();
        for (product, &r) in self.rows.iter().enumerate() {
            if r == NO_ROW {
                continue;
            }
            let start = r as usize * self.nodes;
            for (j, &u) in self.units[start..start + self.nodes].iter().enumerate() {
                if u > 0 {
                    out.push((product as u32, j as u32, u));
                }
            }
        }
        out
    }

    /// Products that have a stored row, ascending.
    pub fn stocked_products(&self) -> impl Iterator<Item = u32> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, &r)| r != NO_ROW)
            .map(|(p, _)| p as u32)
    }

    /// Total units of `product` across nodes.
    pub fn product_total(&self, product: u32) -> u64 {
        self.row(product).map_or(0, |r| r.iter().map(|&u| u as u64).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoState {
    pub inventory: Inventory,
    pub capacity: Vec<u32>,
}

impl FoState {
    pub fn nodes(&self) -> usize {
        self.capacity.len()
    }
}

/// True iff the action is null, or the node has capacity and inventory of
/// the order's product.
#[inline]
pub fn fo_feasible(state: &FoState, order: &Order, action: FoAction) -> bool {
    match action {
        FoAction::Null => true,
        FoAction::Node(j) => {
            let j = j as usize;
            j < state.capacity.len()
                && state.capacity[j] > 0
                && state.inventory.get(order.product, j) > 0
        }
    }
}

/// Returns the successor state, or an error when the action is infeasible.
pub fn fo_transition(state: &FoState, action: FoAction, order: &Order) -> Result<FoState> {
    if !fo_feasible(state, order, action) {
        return Err(SimError::InfeasibleAction { t: order.t });
    }
    let mut next = state.clone();
    apply(&mut next, action, order);
    Ok(next)
}

#[inline]
fn apply(state: &mut FoState, action: FoAction, order: &Order) {
    if let FoAction::Node(j) = action {
        let j = j as usize;
        state.capacity[j] -= 1;
        state.inventory.decrement(order.product, j);
    }
}

/// Sum of the chosen nodes' rewards; null actions earn nothing.
pub fn fo_total_reward(orders: &[Order], actions: &[FoAction]) -> Result<f64> {
    if orders.len() != actions.len() {
        return Err(SimError::LengthMismatch {
            expected: orders.len(),
            actual: actions.len(),
        });
    }
    Ok(orders
        .iter()
        .zip(actions)
        .map(|(o, a)| a.node().map_or(0.0, |j| o.rewards[j]))
        .sum())
}

#[derive(Debug, Clone)]
pub struct FoEnv {
    initial: FoState,
    products: usize,
}

impl FoEnv {
    pub fn new(initial: FoState) -> Result<Self> {
        if initial.inventory.nodes() != initial.capacity.len() {
            return Err(SimError::InvalidData(format!(
                "inventory has {} nodes, capacity has {}",
                initial.inventory.nodes(),
                initial.capacity.len()
            )));
        }
        let products = initial.inventory.products();
        Ok(Self { initial, products })
    }

    pub fn nodes(&self) -> usize {
        self.initial.capacity.len()
    }

    pub fn products(&self) -> usize {
        self.products
    }

    pub fn initial(&self) -> &FoState {
        &self.initial
    }

    /// Checks every order against this network's dimensions.
    pub fn validate_orders(&self, orders: &[Order]) -> Result<()> {
        for (t, o) in orders.iter().enumerate() {
            if o.product as usize >= self.products {
                return Err(SimError::InvalidData(format!("order {t}: product {} out of range", o.product)));
            }
            if o.rewards.len() != self.nodes() {
                return Err(SimError::InvalidData(format!(
                    "order {t}: {} rewards for {} nodes",
                    o.rewards.len(),
                    self.nodes()
                )));
            }
            if o.rewards.iter().any(|r| !r.is_finite()) {
                return Err(SimError::InvalidData(format!("order {t}: non-finite reward")));
            }
        }
        Ok(())
    }
}

impl Environment for FoEnv {
    type State = FoState;
    type Action = FoAction;
    type Disturbance = Order;

    fn initial_state(&self) -> FoState {
        self.initial.clone()
    }

    fn null_action(&self) -> FoAction {
        FoAction::Null
    }

    #[inline]
    fn is_feasible(&self, state: &FoState, order: &Order, action: &FoAction) -> bool {
        fo_feasible(state, order, *action)
    }

    #[inline]
    fn step(&self, state: &mut FoState, action: &FoAction, order: &Order) {
        apply(state, *action, order);
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn order(t: usize, product: u32, rewards: &[f64]) -> Order {
        Order {
            t,
            product,
            origin: 0,
            rewards: rewards.into(),
        }
    }

    pub(crate) fn state(products: usize, x: &[&[u32]], c: &[u32]) -> FoState {
        let entries = x.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(move |(j, &u)| (i as u32, j as u32, u))
        });
        FoState {
            inventory: Inventory::from_entries(products, c.len(), entries).unwrap(),
            capacity: c.to_vec(),
        }
    }

    #[test]
    fn transition_decrements_one_unit() {
        let s = state(1, &[&[3, 0]], &[2, 5]);
        let o = order(0, 0, &[0.5, 0.5]);
        let next = fo_transition(&s, FoAction::Node(0), &o).unwrap();
        assert_eq!(next.inventory.get(0, 0), 2);
        assert_eq!(next.capacity, vec![1, 5]);
        assert_eq!(next.inventory.get(0, 1), 0);
    }

    #[test]
    fn null_leaves_state_alone() {
        let s = state(1, &[&[3, 0]], &[2, 5]);
        let o = order(0, 0, &[0.5, 0.5]);
        assert_eq!(fo_transition(&s, FoAction::Null, &o).unwrap(), s);
    }

    #[test]
    fn stockout_is_a_contract_violation() {
        let s = state(1, &[&[0, 1]], &[2, 5]);
        let o = order(4, 0, &[0.5, 0.5]);
        assert!(matches!(
            fo_transition(&s, FoAction::Node(0), &o),
            Err(SimError::InfeasibleAction { t: 4 })
        ));
    }

    #[test]
    fn feasibility_needs_capacity_and_inventory() {
        let o = order(0, 0, &[1.0]);
        assert!(fo_feasible(&state(1, &[&[0]], &[0]), &o, FoAction::Null));
        assert!(!fo_feasible(&state(1, &[&[0]], &[1]), &o, FoAction::Node(0)));
        assert!(fo_feasible(&state(1, &[&[5]], &[1]), &o, FoAction::Node(0)));
        assert!(!fo_feasible(&state(1, &[&[5]], &[0]), &o, FoAction::Node(0)));
        assert!(!fo_feasible(&state(1, &[&[5]], &[1]), &o, FoAction::Node(3)));
    }

    #[test]
    fn total_reward() {
        let orders = vec![order(0, 0, &[0.4, 0.7])];
        assert_eq!(fo_total_reward(&orders, &[FoAction::Null]).unwrap(), 0.0);
        assert_eq!(fo_total_reward(&orders, &[FoAction::Node(1)]).unwrap(), 0.7);
        let two = vec![order(0, 0, &[0.9, 0.1]), order(1, 0, &[0.8, 0.2])];
        let r = fo_total_reward(&two, &[FoAction::Node(0), FoAction::Node(1)]).unwrap();
        assert!((r - 1.1).abs() < 1e-12);
    }

    #[test]
    fn unstocked_products_read_as_zero() {
        let mut inv = Inventory::from_entries(4, 2, [(2, 1, 7)]).unwrap();
        assert_eq!(inv.get(0, 0), 0);
        assert_eq!(inv.get(2, 1), 7);
        assert!(inv.row(3).is_none());
        inv.add(3, 0, 2);
        assert_eq!(inv.row(3), Some(&[2, 0][..]));
        assert_eq!(inv.entries(), vec![(2, 1, 7), (3, 0, 2)]);
    }

    #[test]
    fn clones_share_the_row_index() {
        let inv = Inventory::from_entries(3, 2, [(0, 0, 1), (2, 1, 1)]).unwrap();
        let copy = inv.clone();
        assert!(Arc::ptr_eq(&inv.rows, &copy.rows));
    }
}
