//! Dual-price policy backed by a small feed-forward network.
//!
//! The network maps a feature vector to two blocks of `J` prices: one per
//! node for the order's product inventory, one per node for capacity. The
//! order goes to the feasible node maximising `r_j - mu_inv_j - mu_cap_j`,
//! or stays unfulfilled when every such score is negative.
//!
//! Features (length `2J + 1`): remaining capacity over initial capacity per
//! node, remaining inventory of the order's product over its initial
//! inventory per node (0/0 reads as 0), and the elapsed fraction `t / T`.
//!
//! # Parameter file layout
//!
//! All integers are little-endian `u32`, all reals little-endian `f64`:
//!
//! ```text
//! n_sizes
//! size_0 size_1 ... size_{n_sizes-1}          layer widths, input first
//! for each layer l in 1..n_sizes:
//!     weights   size_l x size_{l-1}, row-major
//!     biases    size_l
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::best_feasible_node;
use crate::engine::Policy;
use crate::error::{PolicyError, Result, SimError};
use crate::fo::{FoAction, FoEnv, FoState, Inventory, Order};

pub const HIDDEN_WIDTH: usize = 64;
const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>, squash: bool) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.biases) {
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b;
            out.push(if squash { z.tanh() } else { z });
        }
    }
}

/// Fully connected network with `tanh` hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

impl MlpParams {
    fn build(sizes: &[usize], mut fill: impl FnMut() -> f64) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: (0..w[0] * w[1]).map(|_| fill()).collect(),
                biases: (0..w[1]).map(|_| fill()).collect(),
            })
            .collect();
        Self {
            sizes: sizes.to_vec(),
            layers,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self::build(sizes, || 0.0)
    }

    /// Every weight and bias drawn from uniform(-0.1, 0.1).
    pub fn seeded(sizes: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(sizes, || rng.gen_range(-INIT_SCALE..INIT_SCALE))
    }

    /// `[2J + 1, 64, 64, 2J]`.
    pub fn dual_shape(nodes: usize) -> Vec<usize> {
        vec![2 * nodes + 1, HIDDEN_WIDTH, HIDDEN_WIDTH, 2 * nodes]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Raw `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        (&self.layers[l].weights, &self.layers[l].biases)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let layer = &mut self.layers[l];
        (&mut layer.weights, &mut layer.biases)
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut a = input.to_vec();
        let mut b = Vec::with_capacity(HIDDEN_WIDTH);
        let last = self.layers.len().saturating_sub(1);
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward(&a, &mut b, l < last);
            std::mem::swap(&mut a, &mut b);
        }
        a
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for &s in &self.sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for layer in &self.layers {
            for v in layer.weights.iter().chain(&layer.biases) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cursor.len() < n {
                return Err(SimError::InvalidData("parameter record truncated".into()));
            }
            let (head, rest) = cursor.split_at(n);
            cursor = rest;
            Ok(head)
        };
        let read_u32 = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
        let count = read_u32(take(4)?);
        if count < 2 {
            return Err(SimError::InvalidData("need at least two layer sizes".into()));
        }
        let sizes = (0..count)
            .map(|_| take(4).map(read_u32))
            .collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(count - 1);
        for w in sizes.windows(2) {
            let mut read = |n: usize| -> Result<Vec<f64>> {
                (0..n)
                    .map(|_| take(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))))
                    .collect()
            };
            let weights = read(w[0] * w[1])?;
            let biases = read(w[1])?;
            layers.push(Layer {
                inputs: w[0],
                outputs: w[1],
                weights,
                biases,
            });
        }
        if !cursor.is_empty() {
            return Err(SimError::InvalidData(format!("{} trailing bytes", cursor.len())));
        }
        Ok(Self { sizes, layers })
    }
}

#[derive(Debug, Clone)]
pub struct DualNetworkPolicy {
    params: MlpParams,
    initial_capacity: Vec<u32>,
    initial_inventory: Inventory,
    horizon: usize,
}

impl DualNetworkPolicy {
    /// Normalisation comes from the environment's initial state.
    pub fn new(params: MlpParams, env: &FoEnv, horizon: usize) -> Result<Self> {
        let nodes = env.nodes();
        let sizes = params.sizes();
        if sizes.first() != Some(&(2 * nodes + 1)) || sizes.last() != Some(&(2 * nodes)) {
            return Err(SimError::InvalidConfig(format!(
                "network shape {sizes:?} does not fit {nodes} nodes"
            )));
        }
        Ok(Self {
            params,
            initial_capacity: env.initial().capacity.clone(),
            initial_inventory: env.initial().inventory.clone(),
            horizon,
        })
    }

    pub fn zeros(env: &FoEnv, horizon: usize) -> Self {
        Self::new(MlpParams::zeros(&MlpParams::dual_shape(env.nodes())), env, horizon)
            .expect("shape matches by construction")
    }

    pub fn seeded(env: &FoEnv, horizon: usize, seed: u64) -> Self {
        Self::new(MlpParams::seeded(&MlpParams::dual_shape(env.nodes()), seed), env, horizon)
            .expect("shape matches by construction")
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn features(&self, state: &FoState, order: &Order) -> Vec<f64> {
        let ratio = |now: u32, start: u32| if start == 0 { 0.0 } else { now as f64 / start as f64 };
        let mut f: Vec<f64> = state
            .capacity
            .iter()
            .zip(&self.initial_capacity)
            .map(|(&c, &c0)| ratio(c, c0))
            .collect();
        let nodes = state.nodes();
        for j in 0..nodes {
            let now = state.inventory.get(order.product, j);
            let start = self.initial_inventory.get(order.product, j);
            f.push(ratio(now, start));
        }
        f.push(if self.horizon == 0 {
            0.0
        } else {
            order.t as f64 / self.horizon as f64
        });
        f
    }

    pub fn dual_network_evaluate(&self, state: &FoState, order: &Order) -> Result<FoAction, PolicyError> {
        let nodes = state.nodes();
        let prices = self.params.forward(&self.features(state, order));
        if let Some(bad) = prices.iter().position(|p| !p.is_finite()) {
            return Err(PolicyError(format!("network output {bad} is not finite")));
        }
        let (inv, cap) = prices.split_at(nodes);
        Ok(best_feasible_node(state, order, Some(0.0), |j| {
            order.rewards[j] - inv[j] - cap[j]
        }))
    }
}

impl Policy<FoEnv> for DualNetworkPolicy {
    fn evaluate(&self, _env: &FoEnv, state: &FoState, order: &Order) -> Result<FoAction, PolicyError> {
        self.dual_network_evaluate(state, order)
    }
}
