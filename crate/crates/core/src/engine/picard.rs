//! The Picard iteration over a shared action cache.
//!
//! Each iteration runs every process over the active window against a frozen
//! copy of the previous cache. Process `m` evaluates the policy only on the
//! steps it owns; elsewhere it replays the cached action when that action is
//! feasible in its local state and the null action otherwise. Owned slots are
//! published at the end of the iteration. The run stops once an iteration
//! leaves the cache unchanged.
//!
//! Two bookkeeping refinements keep iterations short without changing the
//! result: the window starts at `t_reset`, the first slot that changed in the
//! previous iteration (everything before it is already correct), and the
//! window is capped at `max_steps` steps so that the horizon converges chunk
//! by chunk.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use super::{evaluate_checked, ActionCache, Environment, PartitionPlan, Policy};
use crate::error::{Result, SimError};

/// Default chunk width is this many steps per process.
pub const DEFAULT_STEPS_PER_PROCESS: usize = 300;

/// How the processes of one iteration are scheduled. Both produce identical
/// results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Serial,
    Parallel,
}

#[derive(Debug, Clone)]
pub struct PicardConfig<A> {
    /// Chunk width in steps. `None` uses `300 * M`; `Some(0)` runs the whole
    /// horizon as one window.
    pub max_steps: Option<usize>,
    /// Iteration cap. `None` uses `T` plus one confirming pass per chunk,
    /// which the correctness argument never exceeds.
    pub max_iterations: Option<usize>,
    /// Starting cache; all-null when absent.
    pub initial_cache: Option<Vec<A>>,
    pub record_trace: bool,
    /// Keep a copy of the cache after every iteration (index 0 is the
    /// initial cache).
    pub record_caches: bool,
    /// Record each process's local state after every `stride`-th step.
    pub snapshot_stride: Option<usize>,
    pub execution: Execution,
}

impl<A> Default for PicardConfig<A> {
    fn default() -> Self {
        Self {
            max_steps: None,
            max_iterations: None,
            initial_cache: None,
            record_trace: false,
            record_caches: false,
            snapshot_stride: None,
            execution: Execution::Serial,
        }
    }
}

impl<A> PicardConfig<A> {
    pub fn whole_horizon() -> Self {
        Self {
            max_steps: Some(0),
            ..Self::default()
        }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = Some(max_steps);
        self
    }

    pub fn with_initial_cache(mut self, cache: Vec<A>) -> Self {
        self.initial_cache = Some(cache);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn with_cache_history(mut self) -> Self {
        self.record_caches = true;
        self
    }

    pub fn with_snapshots(mut self, stride: usize) -> Self {
        self.snapshot_stride = Some(stride.max(1));
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    fn chunk_width(&self, horizon: usize, processes: usize) -> usize {
        match self.max_steps {
            None => DEFAULT_STEPS_PER_PROCESS.saturating_mul(processes),
            Some(0) => horizon,
            Some(w) => w,
        }
        .max(1)
    }
}

/// One row per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub chunk: usize,
    pub iteration: usize,
    pub changed_slots: usize,
    pub max_evals: usize,
    pub t_reset: usize,
}

/// Local state of process `process` after applying step `state_index - 1`
/// in iteration `iteration`.
#[derive(Debug, Clone)]
pub struct ProcessSnapshot<S> {
    pub iteration: usize,
    pub process: usize,
    pub state_index: usize,
    pub state: S,
}

#[derive(Debug, Clone)]
pub struct IterationOutcome<S, A> {
    pub cache: ActionCache<A>,
    /// Policy evaluations per process.
    pub evals: Vec<usize>,
    /// Slots whose value changed, ascending.
    pub changed: Vec<usize>,
    pub snapshots: Vec<ProcessSnapshot<S>>,
}

#[derive(Debug, Clone)]
pub struct PicardResult<S, A> {
    pub actions: Vec<A>,
    /// Iterations run by the stopping rule, summed over chunks.
    pub iterations_to_converged: usize,
    /// First iteration whose cache equals the oracle actions. Only filled
    /// when an oracle was supplied.
    pub iterations_to_correct: Option<usize>,
    /// Number of `(k, t)` where iteration `k` changed a slot that the policy
    /// had already written in an earlier iteration.
    pub conflicts: usize,
    /// Sum over iterations of the busiest process's evaluation count.
    pub policy_eval_count_sequential_equivalent: usize,
    pub total_policy_evals: usize,
    pub trace: Vec<TraceRow>,
    pub cache_history: Vec<Vec<A>>,
    pub snapshots: Vec<ProcessSnapshot<S>>,
}

struct ProcessPass<S, A> {
    writes: Vec<(usize, A)>,
    snapshots: Vec<ProcessSnapshot<S>>,
}

#[allow(clippy::too_many_arguments)]
fn process_pass<E: Environment, P: Policy<E>>(
    env: &E,
    policy: &P,
    disturbances: &[E::Disturbance],
    plan: &PartitionPlan,
    cache: &[E::Action],
    m: usize,
    window: Range<usize>,
    checkpoint: &E::State,
    iteration: usize,
    stride: Option<usize>,
) -> Result<ProcessPass<E::State, E::Action>> {
    let mut state = checkpoint.clone();
    let null = env.null_action();
    let mut writes = Vec::new();
    let mut snapshots = Vec::new();
    for t in window {
        let w = &disturbances[t];
        if plan.owner(t) == m {
            let action = evaluate_checked(env, policy, &state, w, t)?;
            env.step(&mut state, &action, w);
            writes.push((t, action));
        } else if env.is_feasible(&state, w, &cache[t]) {
            env.step(&mut state, &cache[t], w);
        } else {
            env.step(&mut state, &null, w);
        }
        if let Some(stride) = stride {
            if (t + 1) % stride == 0 {
                snapshots.push(ProcessSnapshot {
                    iteration,
                    process: m,
                    state_index: t + 1,
                    state: state.clone(),
                });
            }
        }
    }
    Ok(ProcessPass { writes, snapshots })
}

#[allow(clippy::too_many_arguments)]
fn run_iteration<E: Environment, P: Policy<E>>(
    env: &E,
    policy: &P,
    disturbances: &[E::Disturbance],
    plan: &PartitionPlan,
    cache: &ActionCache<E::Action>,
    window: Range<usize>,
    checkpoint: &E::State,
    iteration: usize,
    stride: Option<usize>,
    execution: Execution,
) -> Result<IterationOutcome<E::State, E::Action>> {
    let processes = plan.processes();
    let mut evals = vec![0usize; processes];
    let mut last_owned = vec![0usize; processes];
    for t in window.clone() {
        let m = plan.owner(t);
        evals[m] += 1;
        last_owned[m] = t;
    }
    // A process only needs to run up to its last owned step; with snapshots
    // requested it runs the whole window.
    let active: Vec<usize> = (0..processes).filter(|&m| evals[m] > 0).collect();
    let span = |m: usize| {
        if stride.is_some() {
            window.clone()
        } else {
            window.start..last_owned[m] + 1
        }
    };
    let run = |&m: &usize| {
        process_pass(
            env,
            policy,
            disturbances,
            plan,
            &cache.slots,
            m,
            span(m),
            checkpoint,
            iteration,
            stride,
        )
    };
    let passes: Vec<Result<ProcessPass<E::State, E::Action>>> = match execution {
        Execution::Serial => active.iter().map(run).collect(),
        Execution::Parallel => active.par_iter().map(run).collect(),
    };

    let mut next = cache.clone();
    next.version = iteration;
    let mut changed = Vec::new();
    let mut snapshots = Vec::new();
    for pass in passes {
        let pass = pass?;
        for (t, action) in pass.writes {
            if !env.same_action(&cache.slots[t], &action) {
                changed.push(t);
            }
            next.slots[t] = action;
        }
        snapshots.extend(pass.snapshots);
    }
    changed.sort_unstable();
    Ok(IterationOutcome {
        cache: next,
        evals,
        changed,
        snapshots,
    })
}

/// Runs a single iteration over `window`, starting every process from
/// `checkpoint` (the state reached by the cache prefix before `window.start`).
#[allow(clippy::too_many_arguments)]
pub fn picard_iterate_once<E: Environment, P: Policy<E>>(
    env: &E,
    policy: &P,
    disturbances: &[E::Disturbance],
    plan: &PartitionPlan,
    cache: &ActionCache<E::Action>,
    window: Range<usize>,
    checkpoint: &E::State,
) -> Result<IterationOutcome<E::State, E::Action>> {
    check_lengths(disturbances.len(), plan, cache.len())?;
    if window.end > disturbances.len() || window.start > window.end {
        return Err(SimError::InvalidConfig(format!(
            "window {window:?} outside horizon {}",
            disturbances.len()
        )));
    }
    run_iteration(
        env,
        policy,
        disturbances,
        plan,
        cache,
        window,
        checkpoint,
        cache.version + 1,
        None,
        Execution::Serial,
    )
}

fn check_lengths(horizon: usize, plan: &PartitionPlan, cache_len: usize) -> Result<()> {
    if plan.len() != horizon {
        return Err(SimError::LengthMismatch {
            expected: horizon,
            actual: plan.len(),
        });
    }
    if cache_len != horizon {
        return Err(SimError::LengthMismatch {
            expected: horizon,
            actual: cache_len,
        });
    }
    Ok(())
}

fn advance<E: Environment>(
    env: &E,
    state: &mut E::State,
    cache: &[E::Action],
    disturbances: &[E::Disturbance],
    range: Range<usize>,
) {
    let null = env.null_action();
    for t in range {
        let w = &disturbances[t];
        if env.is_feasible(state, w, &cache[t]) {
            env.step(state, &cache[t], w);
        } else {
            env.step(state, &null, w);
        }
    }
}

/// Runs the Picard iteration to its fixed point. When `oracle` is given the
/// result also reports the first iteration at which the cache was correct.
pub fn picard_simulate<E: Environment, P: Policy<E>>(
    env: &E,
    policy: &P,
    disturbances: &[E::Disturbance],
    plan: &PartitionPlan,
    config: &PicardConfig<E::Action>,
    oracle: Option<&[E::Action]>,
) -> Result<PicardResult<E::State, E::Action>> {
    let horizon = disturbances.len();
    let mut cache = match &config.initial_cache {
        Some(initial) => ActionCache::from_actions(initial.clone()),
        None => ActionCache::filled(horizon, env.null_action()),
    };
    check_lengths(horizon, plan, cache.len())?;
    if let Some(oracle) = oracle {
        if oracle.len() != horizon {
            return Err(SimError::LengthMismatch {
                expected: horizon,
                actual: oracle.len(),
            });
        }
    }

    let width = config.chunk_width(horizon, plan.processes());
    let cap = match config.max_iterations {
        Some(0) => return Err(SimError::InvalidConfig("max_iterations must be at least 1".into())),
        Some(cap) => cap,
        None => horizon + horizon.div_ceil(width) + 1,
    };

    let mut mismatches = oracle.map(|o| {
        cache
            .slots
            .iter()
            .zip(o)
            .filter(|(a, b)| !env.same_action(a, b))
            .count()
    });
    let mut iterations_to_correct = (mismatches == Some(0)).then_some(0);

    let mut result = PicardResult {
        actions: Vec::new(),
        iterations_to_converged: 0,
        iterations_to_correct: None,
        conflicts: 0,
        policy_eval_count_sequential_equivalent: 0,
        total_policy_evals: 0,
        trace: Vec::new(),
        cache_history: Vec::new(),
        snapshots: Vec::new(),
    };
    if config.record_caches {
        result.cache_history.push(cache.slots.clone());
    }

    let mut written = vec![false; horizon];
    let mut checkpoint = env.initial_state();
    let mut t_reset = 0;
    let mut chunk = 0;
    let mut k = 0;
    while t_reset < horizon {
        if k >= cap {
            return Err(SimError::IterationCap {
                cap,
                trace: result.trace,
            });
        }
        k += 1;
        let hi = horizon.min(t_reset.saturating_add(width));
        let outcome = run_iteration(
            env,
            policy,
            disturbances,
            plan,
            &cache,
            t_reset..hi,
            &checkpoint,
            k,
            config.snapshot_stride,
            config.execution,
        )?;

        let max_evals = outcome.evals.iter().copied().max().unwrap_or(0);
        result.policy_eval_count_sequential_equivalent += max_evals;
        result.total_policy_evals += outcome.evals.iter().sum::<usize>();
        result.conflicts += outcome.changed.iter().filter(|&&t| written[t]).count();
        written[t_reset..hi].iter_mut().for_each(|w| *w = true);
        if let (Some(count), Some(oracle)) = (mismatches.as_mut(), oracle) {
            for &t in &outcome.changed {
                let was = env.same_action(&cache.slots[t], &oracle[t]);
                let now = env.same_action(&outcome.cache.slots[t], &oracle[t]);
                match (was, now) {
                    (true, false) => *count += 1,
                    (false, true) => *count -= 1,
                    _ => {}
                }
            }
            if *count == 0 && iterations_to_correct.is_none() {
                iterations_to_correct = Some(k);
            }
        }
        if config.record_trace {
            result.trace.push(TraceRow {
                chunk,
                iteration: k,
                changed_slots: outcome.changed.len(),
                max_evals,
                t_reset,
            });
        }
        result.snapshots.extend(outcome.snapshots);

        let next_reset = outcome.changed.first().copied().unwrap_or(hi);
        cache = outcome.cache;
        if config.record_caches {
            result.cache_history.push(cache.slots.clone());
        }
        advance(env, &mut checkpoint, &cache.slots, disturbances, t_reset..next_reset);
        if outcome.changed.is_empty() {
            chunk += 1;
        }
        t_reset = next_reset;
    }

    result.iterations_to_converged = k;
    result.iterations_to_correct = iterations_to_correct;
    result.actions = cache.slots;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::PolicyError;

    /// Shared budget: each step requests `w` units, policy grants
    /// `min(w, remaining)`. Cached grants larger than what is left are
    /// infeasible, which exercises the null fallback.
    struct Budget(u32);

    impl Environment for Budget {
        type State = u32;
        type Action = u32;
        type Disturbance = u32;
        fn initial_state(&self) -> u32 {
            self.0
        }
        fn null_action(&self) -> u32 {
            0
        }
        fn is_feasible(&self, s: &u32, _w: &u32, a: &u32) -> bool {
            a <= s
        }
        fn step(&self, s: &mut u32, a: &u32, _w: &u32) {
            *s -= a;
        }
    }

    struct Grant;

    impl Policy<Budget> for Grant {
        fn evaluate(&self, _env: &Budget, s: &u32, w: &u32) -> Result<u32, PolicyError> {
            Ok((*w).min(*s))
        }
    }

    /// State remembers the last action; the policy flips it. Errors travel
    /// one step per iteration, so convergence takes about `T` iterations.
    struct Toggle;

    impl Environment for Toggle {
        type State = u8;
        type Action = u8;
        type Disturbance = ();
        fn initial_state(&self) -> u8 {
            0
        }
        fn null_action(&self) -> u8 {
            0
        }
        fn is_feasible(&self, _s: &u8, _w: &(), a: &u8) -> bool {
            *a <= 1
        }
        fn step(&self, s: &mut u8, a: &u8, _w: &()) {
            *s = *a;
        }
    }

    struct Flip;

    impl Policy<Toggle> for Flip {
        fn evaluate(&self, _env: &Toggle, s: &u8, _w: &()) -> Result<u8, PolicyError> {
            Ok(1 - *s)
        }
    }

    fn oracle(env: &Budget, w: &[u32]) -> Vec<u32> {
        crate::engine::sequential_actions(env, &Grant, w).unwrap()
    }

    #[test]
    fn single_process_needs_one_confirming_pass() {
        let env = Budget(20);
        let w = [3, 4, 5, 6, 7];
        let seq = oracle(&env, &w);
        let plan = PartitionPlan::single(w.len());
        let out = picard_simulate(&env, &Grant, &w, &plan, &PicardConfig::default(), Some(&seq)).unwrap();
        assert_eq!(out.actions, seq);
        assert_eq!(out.iterations_to_correct, Some(1));
        assert_eq!(out.iterations_to_converged, 2);
        assert_eq!(out.policy_eval_count_sequential_equivalent, 2 * w.len());
    }

    #[test]
    fn one_step_per_process_matches_oracle() {
        let env = Budget(12);
        let w = [5, 5, 5, 5, 1, 2];
        let seq = oracle(&env, &w);
        let plan = PartitionPlan::one_step_each(w.len());
        let out = picard_simulate(&env, &Grant, &w, &plan, &PicardConfig::default().with_trace(), Some(&seq))
            .unwrap();
        assert_eq!(out.actions, seq);
        assert!(out.iterations_to_correct.unwrap() <= w.len());
        let resets: Vec<usize> = out.trace.iter().map(|r| r.t_reset).collect();
        assert!(resets.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn first_slot_is_correct_after_one_iteration() {
        let env = Budget(12);
        let w = [5, 5, 5, 5];
        let seq = oracle(&env, &w);
        let plan = PartitionPlan::one_step_each(w.len());
        let cache = ActionCache::filled(w.len(), 0);
        let out = picard_iterate_once(&env, &Grant, &w, &plan, &cache, 0..w.len(), &12).unwrap();
        assert_eq!(out.cache.slots[0], seq[0]);
        assert_eq!(out.evals, vec![1; 4]);
    }

    #[test]
    fn converged_cache_reports_no_changes() {
        let env = Budget(12);
        let w = [5, 5, 5, 5];
        let seq = oracle(&env, &w);
        let plan = PartitionPlan::new(vec![0, 1, 0, 1], 2).unwrap();
        let cache = ActionCache::from_actions(seq.clone());
        let out = picard_iterate_once(&env, &Grant, &w, &plan, &cache, 0..4, &12).unwrap();
        assert!(out.changed.is_empty());
        assert_eq!(out.cache.slots, seq);
    }

    #[test]
    fn chunking_does_not_change_actions() {
        let env = Budget(40);
        let w: Vec<u32> = (0..30).map(|t| (t * 7 % 5) as u32 + 1).collect();
        let seq = oracle(&env, &w);
        let plan = PartitionPlan::uniform(w.len(), 4, 11).unwrap();
        for max_steps in [0, 1, 3, 7, 64] {
            let cfg = PicardConfig::default().with_max_steps(max_steps);
            let out = picard_simulate(&env, &Grant, &w, &plan, &cfg, Some(&seq)).unwrap();
            assert_eq!(out.actions, seq, "max_steps={max_steps}");
        }
    }

    #[test]
    fn iteration_cap_surfaces_partial_trace() {
        let w = vec![(); 50];
        let plan = PartitionPlan::one_step_each(50);
        let cfg = PicardConfig {
            max_iterations: Some(2),
            max_steps: Some(0),
            record_trace: true,
            ..PicardConfig::default()
        };
        match picard_simulate(&Toggle, &Flip, &w, &plan, &cfg, None) {
            Err(SimError::IterationCap { cap, trace }) => {
                assert_eq!(cap, 2);
                assert_eq!(trace.len(), 2);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn worst_case_chain_converges_within_horizon() {
        let w = vec![(); 40];
        let seq = crate::engine::sequential_actions(&Toggle, &Flip, &w).unwrap();
        let plan = PartitionPlan::one_step_each(40);
        let cfg = PicardConfig::whole_horizon();
        let out = picard_simulate(&Toggle, &Flip, &w, &plan, &cfg, Some(&seq)).unwrap();
        assert_eq!(out.actions, seq);
        assert!(out.iterations_to_correct.unwrap() <= 40);
        assert!(out.iterations_to_converged <= 41);
        assert!(out.iterations_to_correct.unwrap() >= 20);
    }

    #[test]
    fn parallel_execution_is_identical() {
        let env = Budget(60);
        let w: Vec<u32> = (0..40).map(|t| (t % 4) as u32 + 1).collect();
        let plan = PartitionPlan::uniform(40, 6, 5).unwrap();
        let serial = picard_simulate(&env, &Grant, &w, &plan, &PicardConfig::default().with_trace(), None).unwrap();
        let parallel = picard_simulate(
            &env,
            &Grant,
            &w,
            &plan,
            &PicardConfig::default().with_trace().with_execution(Execution::Parallel),
            None,
        )
        .unwrap();
        assert_eq!(serial.actions, parallel.actions);
        assert_eq!(serial.trace, parallel.trace);
    }

    #[test]
    fn empty_horizon_converges_immediately() {
        let env = Budget(1);
        let plan = PartitionPlan::single(0);
        let out = picard_simulate(&env, &Grant, &[], &plan, &PicardConfig::default(), Some(&[])).unwrap();
        assert!(out.actions.is_empty());
        assert_eq!(out.iterations_to_converged, 0);
        assert_eq!(out.iterations_to_correct, Some(0));
    }

    #[test]
    fn rejects_mismatched_initial_cache() {
        let env = Budget(5);
        let plan = PartitionPlan::single(3);
        let cfg = PicardConfig::default().with_initial_cache(vec![0, 0]);
        assert!(picard_simulate(&env, &Grant, &[1, 1, 1], &plan, &cfg, None).is_err());
    }
}
