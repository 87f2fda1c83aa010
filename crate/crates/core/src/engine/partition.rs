use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};

/// Total assignment of time-steps `0..T` to logical processes `0..M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    owners: Vec<u32>,
    processes: usize,
}

impl PartitionPlan {
    pub fn new(owners: Vec<u32>, processes: usize) -> Result<Self> {
        if processes == 0 {
            return Err(SimError::InvalidConfig("process count must be at least 1".into()));
        }
        if let Some(t) = owners.iter().position(|&m| m as usize >= processes) {
            return Err(SimError::InvalidConfig(format!(
                "step {t} assigned to process {} but only {processes} exist",
                owners[t]
            )));
        }
        Ok(Self { owners, processes })
    }

    /// Every step owned by a single process.
    pub fn single(horizon: usize) -> Self {
        Self {
            owners: vec![0; horizon],
            processes: 1,
        }
    }

    /// Each step assigned independently and uniformly at random.
    pub fn uniform(horizon: usize, processes: usize, seed: u64) -> Result<Self> {
        if processes == 0 {
            return Err(SimError::InvalidConfig("process count must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let owners = (0..horizon)
            .map(|_| rng.gen_range(0..processes as u32))
            .collect();
        Ok(Self { owners, processes })
    }

    /// One step per process (`M = T`).
    pub fn one_step_each(horizon: usize) -> Self {
        Self {
            owners: (0..horizon as u32).collect(),
            processes: horizon.max(1),
        }
    }

    #[inline]
    pub fn owner(&self, t: usize) -> usize {
        self.owners[t] as usize
    }

    pub fn owners(&self) -> &[u32] {
        &self.owners
    }

    pub fn processes(&self) -> usize {
        self.processes
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    /// |T_m| for every process.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.processes];
        for &m in &self.owners {
            sizes[m as usize] += 1;
        }
        sizes
    }

    pub fn max_size(&self) -> usize {
        self.sizes().into_iter().max().unwrap_or(0)
    }

    /// Steps owned by `m`, ascending.
    pub fn members(&self, m: usize) -> Vec<usize> {
        self.owners
            .iter()
            .enumerate()
            .filter(|(_, &o)| o as usize == m)
            .map(|(t, _)| t)
            .collect()
    }
}
