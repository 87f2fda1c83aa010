//! Synthetic fulfillment instances.
//!
//! Nodes sit in the most populous US states. Product demand follows a power
//! law `Q_i ∝ i^{-|β|}`, orders arrive in a seeded random order, each order
//! originates at a node drawn in proportion to population, and rewards fall
//! linearly with great-circle distance from the origin. Network inventory and
//! capacity cover a fixed fraction of demand and are split across nodes by
//! population.

mod geometry;
mod io;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use geometry::{haversine_km, reward_vector, rewards_from_distances, NetworkGeometry, EARTH_RADIUS_KM, MAX_NODES};
pub use io::{load_instance, save_instance, Manifest, CAPACITY_FILE, INVENTORY_FILE, MANIFEST_FILE, ORDERS_FILE};

use crate::engine::PartitionPlan;
use crate::error::{Result, SimError};
use crate::fo::{FoEnv, FoState, Inventory, Order};

pub const DEFAULT_COVERAGE: f64 = 0.8;

/// Rewards are stored with this many decimals so that files round-trip
/// exactly.
pub const REWARD_DECIMALS: i32 = 9;

pub(crate) fn quantize_reward(r: f64) -> f64 {
    let scale = 10f64.powi(REWARD_DECIMALS);
    (r * scale).round() / scale
}

/// Splits `total` in proportion to `weights` by largest remainder. Ties in
/// the remainder go to the lower index.
pub fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &j in order.iter().cycle().take(total.saturating_sub(assigned) as usize) {
        out[j] += 1;
    }
    out
}

/// Order counts per product, most-demanded product first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub beta: f64,
    pub counts: Vec<u32>,
}

impl DemandProfile {
    /// `Q_i ∝ i^{-|β|}` rounded to sum to `horizon`. `β = 0` is uniform.
    pub fn power_law(products: usize, horizon: usize, beta: f64) -> Result<Self> {
        if products == 0 {
            return Err(SimError::InvalidConfig("I must be at least 1".into()));
        }
        if !beta.is_finite() {
            return Err(SimError::InvalidConfig(format!("beta must be finite, got {beta}")));
        }
        let weights: Vec<f64> = (1..=products).map(|i| (i as f64).powf(-beta.abs())).collect();
        let counts = apportion(horizon as u64, &weights).into_iter().map(|q| q as u32).collect();
        Ok(Self { beta, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|&q| q as usize).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub beta: f64,
    pub coverage: f64,
    pub seed: u64,
}

/// A complete fulfillment problem: initial network state plus the order stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub initial: FoState,
    pub orders: Vec<Order>,
    pub meta: InstanceMeta,
}

impl Instance {
    pub fn nodes(&self) -> usize {
        self.initial.capacity.len()
    }

    pub fn products(&self) -> usize {
        self.initial.inventory.products()
    }

    pub fn horizon(&self) -> usize {
        self.orders.len()
    }

    pub fn env(&self) -> FoEnv {
        FoEnv::new(self.initial.clone()).expect("instance dimensions are consistent")
    }

    /// Orders per product as they appear in the stream.
    pub fn product_counts(&self) -> Vec<u32> {
        let mut q = vec![0u32; self.products()];
        for o in &self.orders {
            q[o.product as usize] += 1;
        }
        q
    }

    /// Same orders and capacity, but every ordered product is stocked with
    /// `T` units at every node, so inventory never binds.
    pub fn with_unconstrained_inventory(&self) -> Instance {
        let horizon = self.horizon() as u32;
        let mut inventory = Inventory::from_entries(self.products(), self.nodes(), []).expect("empty inventory");
        for (i, &q) in self.product_counts().iter().enumerate() {
            if q > 0 {
                for j in 0..self.nodes() {
                    inventory.set(i as u32, j, horizon);
                }
            }
        }
        Instance {
            initial: FoState {
                inventory,
                capacity: self.initial.capacity.clone(),
            },
            orders: self.orders.clone(),
            meta: self.meta,
        }
    }

    /// Replaces the initial capacity, keeping everything else.
    pub fn with_capacity(&self, capacity: Vec<u32>) -> Result<Instance> {
        if capacity.len() != self.nodes() {
            return Err(SimError::InvalidConfig(format!(
                "{} capacities for {} nodes",
                capacity.len(),
                self.nodes()
            )));
        }
        let mut out = self.clone();
        out.initial.capacity = capacity;
        Ok(out)
    }
}

/// Instance on the first `nodes` sites of the built-in US geometry.
pub fn generate_instance(
    nodes: usize,
    products: usize,
    horizon: usize,
    beta: f64,
    coverage: f64,
    seed: u64,
) -> Result<Instance> {
    let geometry = NetworkGeometry::us_states(nodes)?;
    generate_instance_with_geometry(&geometry, products, horizon, beta, coverage, seed)
}

pub fn generate_instance_with_geometry(
    geometry: &NetworkGeometry,
    products: usize,
    horizon: usize,
    beta: f64,
    coverage: f64,
    seed: u64,
) -> Result<Instance> {
    if horizon == 0 {
        return Err(SimError::InvalidConfig("T must be at least 1".into()));
    }
    if products > u32::MAX as usize - 1 {
        return Err(SimError::InvalidConfig(format!("I = {products} is too large")));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(SimError::InvalidConfig(format!("coverage must be in (0, 1], got {coverage}")));
    }
    let nodes = geometry.nodes();
    let demand = DemandProfile::power_law(products, horizon, beta)?;

    let mut arrivals = Vec::with_capacity(horizon);
    for (i, &q) in demand.counts.iter().enumerate() {
        arrivals.extend(std::iter::repeat_n(i as u32, q as usize));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    arrivals.shuffle(&mut rng);

    let mut origin_rng = ChaCha8Rng::seed_from_u64(seed);
    origin_rng.set_stream(1);
    let origins = WeightedIndex::new(geometry.populations())
        .map_err(|e| SimError::InvalidConfig(format!("population weights: {e}")))?;
    let rewards: Vec<Box<[f64]>> = (0..nodes)
        .map(|o| {
            let r = rewards_from_distances(geometry.distances_from(o));
            r.into_iter().map(quantize_reward).collect()
        })
        .collect();
    let orders = arrivals
        .into_iter()
        .enumerate()
        .map(|(t, product)| {
            let origin = origins.sample(&mut origin_rng);
            Order {
                t,
                product,
                origin: origin as u32,
                rewards: rewards[origin].clone(),
            }
        })
        .collect();

    let pops = geometry.populations();
    let mut inventory = Inventory::from_entries(products, nodes, [])?;
    for (i, &q) in demand.counts.iter().enumerate() {
        if q == 0 {
            continue;
        }
        let units = (coverage * q as f64).round() as u64;
        for (j, u) in apportion(units, pops).into_iter().enumerate() {
            inventory.set(i as u32, j, u as u32);
        }
    }
    let network_capacity = (coverage * horizon as f64).round() as u64;
    let capacity = apportion(network_capacity, pops).into_iter().map(|u| u as u32).collect();

    Ok(Instance {
        initial: FoState { inventory, capacity },
        orders,
        meta: InstanceMeta { beta, coverage, seed },
    })
}

/// Assigns whole products to `processes` groups: products in decreasing
/// order count (seeded shuffle first, so equal counts are ordered randomly),
/// each to the currently lightest group, lowest group index on ties.
pub fn product_partition(orders: &[Order], products: usize, processes: usize, seed: u64) -> Result<PartitionPlan> {
    if processes == 0 {
        return Err(SimError::InvalidConfig("M must be at least 1".into()));
    }
    let mut counts = vec![0u64; products];
    for o in orders {
        let slot = counts
            .get_mut(o.product as usize)
            .ok_or_else(|| SimError::InvalidData(format!("order {}: product {} out of range", o.t, o.product)))?;
        *slot += 1;
    }
    let mut ranked: Vec<u32> = (0..products as u32).filter(|&i| counts[i as usize] > 0).collect();
    ranked.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ranked.sort_by_key(|&i| Reverse(counts[i as usize]));

    let mut group = vec![0u32; products];
    let mut heap: BinaryHeap<Reverse<(u64, u32)>> = (0..processes as u32).map(|m| Reverse((0, m))).collect();
    for i in ranked {
        let Reverse((load, m)) = heap.pop().expect("at least one group");
        group[i as usize] = m;
        heap.push(Reverse((load + counts[i as usize], m)));
    }
    PartitionPlan::new(orders.iter().map(|o| group[o.product as usize]).collect(), processes)
}

pub fn make_product_partition(instance: &Instance, processes: usize, seed: u64) -> Result<PartitionPlan> {
    product_partition(&instance.orders, instance.products(), processes, seed)
}

/// Each order independently to a uniformly random process.
pub fn make_uniform_partition(instance: &Instance, processes: usize, seed: u64) -> Result<PartitionPlan> {
    PartitionPlan::uniform(instance.horizon(), processes, seed)
}
