//! Environment- and policy-agnostic simulation engine.
//!
//! An [`Environment`] describes deterministic dynamics driven by a fixed
//! disturbance sequence, and a [`Policy`] maps (state, disturbance) to an
//! action. [`sequential_simulate`] is the ground-truth oracle;
//! [`picard_simulate`] reproduces the same action sequence by iterating a
//! shared action cache to a fixed point, with the work of each iteration split
//! across `M` independent logical processes.

mod partition;
mod picard;

use std::fmt;

pub use partition::PartitionPlan;
pub use picard::{
    picard_iterate_once, picard_simulate, Execution, IterationOutcome, PicardConfig,
    PicardResult, ProcessSnapshot, TraceRow, DEFAULT_STEPS_PER_PROCESS,
};

use crate::error::{PolicyError, Result, SimError};

/// Deterministic dynamics `s' = f(s, a, w)` with an always-feasible null action.
pub trait Environment: Sync {
    type State: Clone + Send + Sync;
    type Action: Clone + PartialEq + Send + Sync + fmt::Debug;
    type Disturbance: Sync;

    fn initial_state(&self) -> Self::State;

    /// The action that is feasible in every state.
    fn null_action(&self) -> Self::Action;

    fn is_feasible(
        &self,
        state: &Self::State,
        disturbance: &Self::Disturbance,
        action: &Self::Action,
    ) -> bool;

    /// Applies a feasible action in place.
    fn step(&self, state: &mut Self::State, action: &Self::Action, disturbance: &Self::Disturbance);

    /// Equality used by the stopping rule. Discrete environments keep the
    /// default exact comparison.
    fn same_action(&self, a: &Self::Action, b: &Self::Action) -> bool {
        a == b
    }
}

/// Only used for evaluation accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostClass {
    #[default]
    Expensive,
    Cheap,
}

pub trait Policy<E: Environment>: Sync {
    fn evaluate(
        &self,
        env: &E,
        state: &E::State,
        disturbance: &E::Disturbance,
    ) -> Result<E::Action, PolicyError>;

    fn cost_class(&self) -> CostClass {
        CostClass::Expensive
    }
}

impl<E: Environment, P: Policy<E> + ?Sized> Policy<E> for &P {
    fn evaluate(
        &self,
        env: &E,
        state: &E::State,
        disturbance: &E::Disturbance,
    ) -> Result<E::Action, PolicyError> {
        (**self).evaluate(env, state, disturbance)
    }

    fn cost_class(&self) -> CostClass {
        (**self).cost_class()
    }
}

/// Length-T array of provisional actions plus the iteration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionCache<A> {
    pub slots: Vec<A>,
    pub version: usize,
}

impl<A: Clone> ActionCache<A> {
    pub fn filled(len: usize, action: A) -> Self {
        Self {
            slots: vec![action; len],
            version: 0,
        }
    }

    pub fn from_actions(slots: Vec<A>) -> Self {
        Self { slots, version: 0 }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Actions and the full state trajectory `s_1 .. s_{T+1}`.
#[derive(Debug, Clone)]
pub struct Rollout<S, A> {
    pub actions: Vec<A>,
    pub states: Vec<S>,
}

/// Evaluates the policy once per step and checks feasibility. Shared by the
/// sequential oracle and every Picard process.
pub(crate) fn evaluate_checked<E: Environment, P: Policy<E>>(
    env: &E,
    policy: &P,
    state: &E::State,
    disturbance: &E::Disturbance,
    t: usize,
) -> Result<E::Action> {
    let action = policy
        .evaluate(env, state, disturbance)
        .map_err(|e| SimError::Policy { t, reason: e.0 })?;
    if !env.is_feasible(state, disturbance, &action) {
        return Err(SimError::InfeasibleAction { t });
    }
    Ok(action)
}

/// Serial rollout that calls `observe(t, state)` on every state `s_t`,
/// `t = 0..=T`, and returns the actions. Exactly `T` policy evaluations.
pub fn sequential_rollout_with<E, P, F>(
    env: &E,
    policy: &P,
    disturbances: &[E::Disturbance],
    mut observe: F,
) -> Result<Vec<E::Action>>
where
    E: Environment,
    P: Policy<E>,
    F: FnMut(usize, &E::State),
{
    let mut state = env.initial_state();
    let mut actions = Vec::with_capacity(disturbances.len());
    for (t, w) in disturbances.iter().enumerate() {
        observe(t, &state);
        let action = evaluate_checked(env, policy, &state, w, t)?;
        env.step(&mut state, &action, w);
        actions.push(action);
    }
    observe(disturbances.len(), &state);
    Ok(actions)
}

/// Sequential oracle: actions only. Use this for large states.
pub fn sequential_actions<E: Environment, P: Policy<E>>(
    env: &E,
    policy: &P,
    disturbances: &[E::Disturbance],
) -> Result<Vec<E::Action>> {
    sequential_rollout_with(env, policy, disturbances, |_, _| {})
}

/// Sequential oracle with the full state trajectory (`T + 1` states).
pub fn sequential_simulate<E: Environment, P: Policy<E>>(
    env: &E,
    policy: &P,
    disturbances: &[E::Disturbance],
) -> Result<Rollout<E::State, E::Action>> {
    let mut states = Vec::with_capacity(disturbances.len() + 1);
    let actions = sequential_rollout_with(env, policy, disturbances, |_, s| states.push(s.clone()))?;
    Ok(Rollout { actions, states })
}

/// Replays a fixed action sequence, falling back to the null action wherever
/// an action is infeasible. Calls `observe` on every state `s_0 ..= s_T`.
pub fn replay_actions<E, F>(env: &E, actions: &[E::Action], disturbances: &[E::Disturbance], mut observe: F)
where
    E: Environment,
    F: FnMut(usize, &E::State),
{
    let mut state = env.initial_state();
    let null = env.null_action();
    for (t, (a, w)) in actions.iter().zip(disturbances).enumerate() {
        observe(t, &state);
        if env.is_feasible(&state, w, a) {
            env.step(&mut state, a, w);
        } else {
            env.step(&mut state, &null, w);
        }
    }
    observe(actions.len().min(disturbances.len()), &state);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleComparison {
    pub equal: bool,
    pub first_mismatch: Option<usize>,
}

pub fn compare_to_oracle<A: PartialEq>(actions: &[A], oracle: &[A]) -> Result<OracleComparison> {
    if actions.len() != oracle.len() {
        return Err(SimError::LengthMismatch {
            expected: oracle.len(),
            actual: actions.len(),
        });
    }
    let first_mismatch = actions.iter().zip(oracle).position(|(a, b)| a != b);
    Ok(OracleComparison {
        equal: first_mismatch.is_none(),
        first_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counter that saturates at a ceiling; action = increment or not.
    struct Counter {
        ceiling: u32,
    }

    impl Environment for Counter {
        type State = u32;
        type Action = u32;
        type Disturbance = u32;

        fn initial_state(&self) -> u32 {
            0
        }
        fn null_action(&self) -> u32 {
            0
        }
        fn is_feasible(&self, s: &u32, _w: &u32, a: &u32) -> bool {
            s + a <= self.ceiling
        }
        fn step(&self, s: &mut u32, a: &u32, w: &u32) {
            *s += a;
            let _ = w;
        }
    }

    struct TakeWhatYouCan;

    impl Policy<Counter> for TakeWhatYouCan {
        fn evaluate(&self, env: &Counter, s: &u32, w: &u32) -> Result<u32, PolicyError> {
            Ok((*w).min(env.ceiling - s))
        }
    }

    struct Greedy;

    impl Policy<Counter> for Greedy {
        fn evaluate(&self, _env: &Counter, _s: &u32, w: &u32) -> Result<u32, PolicyError> {
            Ok(*w)
        }
    }

    #[test]
    fn empty_horizon_yields_only_the_initial_state() {
        let env = Counter { ceiling: 5 };
        let out = sequential_simulate(&env, &TakeWhatYouCan, &[]).unwrap();
        assert!(out.actions.is_empty());
        assert_eq!(out.states, vec![0]);
    }

    #[test]
    fn sequential_matches_hand_trace() {
        let env = Counter { ceiling: 5 };
        let out = sequential_simulate(&env, &TakeWhatYouCan, &[2, 2, 2, 2]).unwrap();
        assert_eq!(out.actions, vec![2, 2, 1, 0]);
        assert_eq!(out.states, vec![0, 2, 4, 5, 5]);
    }

    #[test]
    fn infeasible_policy_names_the_step() {
        let env = Counter { ceiling: 3 };
        let err = sequential_simulate(&env, &Greedy, &[1, 1, 2]).unwrap_err();
        assert!(matches!(err, SimError::InfeasibleAction { t: 2 }));
    }

    #[test]
    fn compare_reports_first_mismatch() {
        assert_eq!(
            compare_to_oracle(&[1, 2, 3], &[1, 2, 3]).unwrap(),
            OracleComparison { equal: true, first_mismatch: None }
        );
        assert_eq!(
            compare_to_oracle(&[0, 1, 2, 9, 4], &[0, 1, 2, 3, 4]).unwrap().first_mismatch,
            Some(3)
        );
        assert!(compare_to_oracle(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn replay_reproduces_oracle_states() {
        let env = Counter { ceiling: 5 };
        let w = [3, 1, 4, 1, 5];
        let out = sequential_simulate(&env, &TakeWhatYouCan, &w).unwrap();
        let mut replayed = Vec::new();
        replay_actions(&env, &out.actions, &w, |_, s| replayed.push(*s));
        assert_eq!(replayed, out.states);
    }
}
