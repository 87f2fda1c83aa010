//! Time-varying linear system under linear state feedback,
//! `s_{t+1} = A_t s_t + B_t a_t + w_t` with `a_t = G s_t`.
//!
//! When `ρ = max_t ‖A_t + B_t G‖₂ < 1` an error in the cached actions
//! shrinks by at least `ρ` per step it propagates, so Picard iteration
//! converges geometrically instead of needing `T` iterations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{
    picard_iterate_once, replay_actions, sequential_simulate, ActionCache, CostClass, Environment, PartitionPlan,
    Policy,
};
use crate::error::{PolicyError, Result, SimError};

/// Relative tolerance for comparing continuous actions.
pub const ACTION_RTOL: f64 = 1e-9;

const POWER_ITERATIONS: usize = 1000;

/// Largest singular value by power iteration on `MᵀM`.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let mut v = DVector::from_fn(m.ncols(), |i, _| 1.0 + i as f64 / m.ncols() as f64);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let next = &gram * &v;
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = next / norm;
        let converged = (norm - lambda).abs() <= 1e-15 * norm;
        lambda = norm;
        if converged {
            break;
        }
    }
    lambda.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystemSpec {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    gain: DMatrix<f64>,
    disturbances: Vec<DVector<f64>>,
    initial: DVector<f64>,
    rho: f64,
}

impl LinearSystemSpec {
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        gain: DMatrix<f64>,
        disturbances: Vec<DVector<f64>>,
        initial: DVector<f64>,
    ) -> Result<Self> {
        let n = initial.len();
        let p = gain.nrows();
        let horizon = disturbances.len();
        let bad = |what: String| Err(SimError::InvalidConfig(format!("dimension mismatch: {what}")));
        if a.len() != horizon || b.len() != horizon {
            return bad(format!("{} A and {} B matrices for T = {horizon}", a.len(), b.len()));
        }
        if gain.ncols() != n {
            return bad(format!("G is {p}x{}, state has {n} entries", gain.ncols()));
        }
        for t in 0..horizon {
            if a[t].shape() != (n, n) || b[t].shape() != (n, p) || disturbances[t].len() != n {
                return bad(format!("step {t}"));
            }
        }
        let rho = a
            .iter()
            .zip(&b)
            .map(|(at, bt)| operator_norm(&(at + bt * &gain)))
            .fold(0.0, f64::max);
        Ok(Self {
            a,
            b,
            gain,
            disturbances,
            initial,
            rho,
        })
    }

    /// Entries of every `A_t`, `B_t`, `G`, `w_t` and `s_0` uniform in
    /// `[-1, 1]`, then `A_t` and `B_t` scaled so that the contraction factor
    /// is `rho`.
    pub fn random(n: usize, p: usize, horizon: usize, rho: f64, seed: u64) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(SimError::InvalidConfig("n and p must be at least 1".into()));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(SimError::InvalidConfig(format!("rho must be finite and non-negative, got {rho}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..=1.0));
        let gain = uniform(p, n);
        let mut a: Vec<DMatrix<f64>> = (0..horizon).map(|_| uniform(n, n)).collect();
        let mut b: Vec<DMatrix<f64>> = (0..horizon).map(|_| uniform(n, p)).collect();
        let disturbances = (0..horizon).map(|_| uniform(n, 1).column(0).into_owned()).collect();
        let initial = uniform(n, 1).column(0).into_owned();
        let raw = a
            .iter()
            .zip(&b)
            .map(|(at, bt)| operator_norm(&(at + bt * &gain)))
            .fold(0.0, f64::max);
        if raw > 0.0 {
            let scale = rho / raw;
            for m in a.iter_mut().chain(b.iter_mut()) {
                *m *= scale;
            }
        }
        Self::new(a, b, gain, disturbances, initial)
    }

    pub fn state_dim(&self) -> usize {
        self.initial.len()
    }

    pub fn input_dim(&self) -> usize {
        self.gain.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.disturbances.len()
    }

    pub fn contraction_factor(&self) -> f64 {
        self.rho
    }

    pub fn is_contractive(&self) -> bool {
        self.rho < 1.0
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn closed_loop(&self, t: usize) -> DMatrix<f64> {
        &self.a[t] + &self.b[t] * &self.gain
    }

    /// The same system with a different feedback gain.
    pub fn with_gain(&self, gain: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.b.clone(),
            gain,
            self.disturbances.clone(),
            self.initial.clone(),
        )
    }
}

/// Disturbance of step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStep {
    pub t: usize,
    pub w: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearEnv {
    spec: LinearSystemSpec,
}

impl LinearEnv {
    pub fn new(spec: LinearSystemSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &LinearSystemSpec {
        &self.spec
    }

    pub fn disturbances(&self) -> Vec<LinearStep> {
        self.spec
            .disturbances
            .iter()
            .enumerate()
            .map(|(t, w)| LinearStep { t, w: w.clone() })
            .collect()
    }

    pub fn policy(&self) -> FeedbackPolicy {
        FeedbackPolicy {
            gain: self.spec.gain.clone(),
        }
    }
}

impl Environment for LinearEnv {
    type State = DVector<f64>;
    type Action = DVector<f64>;
    type Disturbance = LinearStep;

    fn initial_state(&self) -> DVector<f64> {
        self.spec.initial.clone()
    }

    fn null_action(&self) -> DVector<f64> {
        DVector::zeros(self.spec.input_dim())
    }

    fn is_feasible(&self, _state: &DVector<f64>, _w: &LinearStep, _action: &DVector<f64>) -> bool {
        true
    }

    fn step(&self, state: &mut DVector<f64>, action: &DVector<f64>, w: &LinearStep) {
        let next = &self.spec.a[w.t] * &*state + &self.spec.b[w.t] * action + &w.w;
        *state = next;
    }

    fn same_action(&self, a: &DVector<f64>, b: &DVector<f64>) -> bool {
        (a - b).norm() <= ACTION_RTOL * a.norm().max(b.norm())
    }
}

/// `a = G s`.
#[derive(Debug, Clone)]
pub struct FeedbackPolicy {
    pub gain: DMatrix<f64>,
}

impl Policy<LinearEnv> for FeedbackPolicy {
    fn evaluate(&self, _env: &LinearEnv, state: &DVector<f64>, _w: &LinearStep) -> Result<DVector<f64>, PolicyError> {
        Ok(&self.gain * state)
    }

    fn cost_class(&self) -> CostClass {
        CostClass::Expensive
    }
}

/// Denominator of [`relative_rmse`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization<'a> {
    /// `Σ_t ‖ref_t‖₂`.
    Reference,
    /// `Σ_t ‖ref_t − draft_t‖₂` for a draft trajectory.
    Draft(&'a [DVector<f64>]),
}

/// `Σ_t ‖ref_t − cand_t‖₂` divided by the chosen normalization.
pub fn relative_rmse(
    candidate: &[DVector<f64>],
    reference: &[DVector<f64>],
    normalization: Normalization<'_>,
) -> Result<f64> {
    let distance = |xs: &[DVector<f64>]| -> Result<f64> {
        if xs.len() != reference.len() {
            return Err(SimError::LengthMismatch {
                expected: reference.len(),
                actual: xs.len(),
            });
        }
        Ok(reference.iter().zip(xs).map(|(r, x)| (r - x).norm()).sum())
    };
    let num = distance(candidate)?;
    let den = match normalization {
        Normalization::Reference => reference.iter().map(|r| r.norm()).sum(),
        Normalization::Draft(draft) => distance(draft)?,
    };
    if den == 0.0 || !den.is_finite() {
        return Err(SimError::InvalidData("relative RMSE denominator is zero".into()));
    }
    Ok(num / den)
}

/// Per-iteration error of a Picard run with one step per process.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurve {
    /// `rmse[k - 1]` is the relative RMSE of the trajectory induced by the
    /// cache after iteration `k`.
    pub rmse: Vec<f64>,
    /// RMSE of the trajectory induced by the initial cache.
    pub initial_rmse: f64,
    pub iterations_to_tolerance: Option<usize>,
}

impl ConvergenceCurve {
    /// `rmse[k] / rmse[k - 1]` for `k >= 1`, skipping steps that start at zero.
    pub fn ratios(&self) -> Vec<f64> {
        self.rmse
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

fn induced_states(env: &LinearEnv, actions: &[DVector<f64>], steps: &[LinearStep]) -> Vec<DVector<f64>> {
    let mut states = Vec::with_capacity(steps.len() + 1);
    replay_actions(env, actions, steps, |_, s| states.push(s.clone()));
    states
}

/// Actions of a rollout under a different gain, the usual warm start when
/// the policy has just been updated.
pub fn warm_start_cache(spec: &LinearSystemSpec, gain: DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    let env = LinearEnv::new(spec.with_gain(gain)?);
    let policy = env.policy();
    Ok(sequential_simulate(&env, &policy, &env.disturbances())?.actions)
}

/// `G + scale * U` with `U` uniform in `[-1, 1]`.
pub fn perturbed_gain(spec: &LinearSystemSpec, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spec.gain.map(|g| g + scale * rng.gen_range(-1.0..=1.0))
}

/// Iterates a cache with one process per step, recording the relative RMSE
/// (normalized by the reference trajectory) after every iteration, until it
/// drops to `tolerance` or `T` iterations have run. `initial_cache` defaults
/// to all zeros.
pub fn picard_convergence_curve(
    spec: &LinearSystemSpec,
    initial_cache: Option<Vec<DVector<f64>>>,
    tolerance: f64,
) -> Result<ConvergenceCurve> {
    let env = LinearEnv::new(spec.clone());
    let policy = env.policy();
    let steps = env.disturbances();
    let horizon = steps.len();
    let reference = sequential_simulate(&env, &policy, &steps)?.states;
    let plan = PartitionPlan::one_step_each(horizon);
    let mut cache = match initial_cache {
        Some(c) => ActionCache::from_actions(c),
        None => ActionCache::filled(horizon, env.null_action()),
    };
    if cache.len() != horizon {
        return Err(SimError::LengthMismatch {
            expected: horizon,
            actual: cache.len(),
        });
    }
    let initial_rmse = relative_rmse(&induced_states(&env, &cache.slots, &steps), &reference, Normalization::Reference)?;
    let start = env.initial_state();
    let mut rmse = Vec::new();
    let mut iterations_to_tolerance = None;
    for k in 1..=horizon.max(1) {
        let outcome = picard_iterate_once(&env, &policy, &steps, &plan, &cache, 0..horizon, &start)?;
        cache = outcome.cache;
        let e = relative_rmse(&induced_states(&env, &cache.slots, &steps), &reference, Normalization::Reference)?;
        rmse.push(e);
        if e <= tolerance {
            iterations_to_tolerance = Some(k);
            break;
        }
    }
    Ok(ConvergenceCurve {
        rmse,
        initial_rmse,
        iterations_to_tolerance,
    })
}

fn matrix_rows(name: &str, t: Option<usize>, m: &DMatrix<f64>, out: &mut Vec<String>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let t = t.map_or(String::new(), |t| t.to_string());
            out.push(format!("{name},{t},{i},{j},{}", m[(i, j)]));
        }
    }
}

/// Writes `manifest.json` and `matrices.csv` (`name,t,row,col,value`, with
/// `t` empty for time-invariant entries) into `dir`.
pub fn save_linear_spec(spec: &LinearSystemSpec, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut lines = vec!["name,t,row,col,value".to_string()];
    for t in 0..spec.horizon() {
        matrix_rows("A", Some(t), &spec.a[t], &mut lines);
        matrix_rows("B", Some(t), &spec.b[t], &mut lines);
        matrix_rows("w", Some(t), &DMatrix::from_column_slice(spec.state_dim(), 1, spec.disturbances[t].as_slice()), &mut lines);
    }
    matrix_rows("G", None, &spec.gain, &mut lines);
    matrix_rows("s0", None, &DMatrix::from_column_slice(spec.state_dim(), 1, spec.initial.as_slice()), &mut lines);
    let mut body = lines.join("\n");
    body.push('\n');
    fs::write(dir.join(MATRICES_FILE), &body)?;
    let manifest = LinearManifest {
        n: spec.state_dim(),
        p: spec.input_dim(),
        horizon: spec.horizon(),
        rho: spec.rho,
        checksums: BTreeMap::from([(MATRICES_FILE.to_string(), hex::encode(Sha256::digest(body.as_bytes())))]),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::write(dir.join(crate::instgen::MANIFEST_FILE), json)?;
    Ok(())
}

pub const MATRICES_FILE: &str = "matrices.csv";

#[derive(Debug, Serialize, Deserialize)]
struct LinearManifest {
    n: usize,
    p: usize,
    #[serde(rename = "T")]
    horizon: usize,
    rho: f64,
    checksums: BTreeMap<String, String>,
}

pub fn load_linear_spec(dir: &Path) -> Result<LinearSystemSpec> {
    let manifest: LinearManifest = serde_json::from_slice(&fs::read(dir.join(crate::instgen::MANIFEST_FILE))?)?;
    let body = fs::read(dir.join(MATRICES_FILE))?;
    if manifest.checksums.get(MATRICES_FILE) != Some(&hex::encode(Sha256::digest(&body))) {
        return Err(SimError::Checksum {
            file: MATRICES_FILE.to_string(),
        });
    }
    let (n, p, horizon) = (manifest.n, manifest.p, manifest.horizon);
    let mut a = vec![DMatrix::zeros(n, n); horizon];
    let mut b = vec![DMatrix::zeros(n, p); horizon];
    let mut w = vec![DVector::zeros(n); horizon];
    let mut gain = DMatrix::zeros(p, n);
    let mut initial = DVector::zeros(n);
    for rec in csv::Reader::from_reader(body.as_slice()).into_records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = || SimError::InvalidData(format!("{MATRICES_FILE} line {line}: bad entry"));
        let idx = |k: usize| rec.get(k).and_then(|s| s.parse::<usize>().ok()).ok_or_else(bad);
        let (i, j) = (idx(2)?, idx(3)?);
        let value: f64 = rec.get(4).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let slot = match rec.get(0) {
            Some("A") => a.get_mut(idx(1)?).and_then(|m| m.get_mut((i, j))),
            Some("B") => b.get_mut(idx(1)?).and_then(|m| m.get_mut((i, j))),
            Some("w") if j == 0 => w.get_mut(idx(1)?).and_then(|v| v.get_mut(i)),
            Some("G") => gain.get_mut((i, j)),
            Some("s0") if j == 0 => initial.get_mut(i),
            _ => None,
        };
        *slot.ok_or_else(bad)? = value;
    }
    LinearSystemSpec::new(a, b, gain, w, initial)
}
