use picard_sim::engine::{
    picard_simulate, sequential_actions, Execution, PartitionPlan, PicardConfig,
};
use picard_sim::fo::FoAction;
use picard_sim::instgen::{generate_instance, make_product_partition, make_uniform_partition, Instance};
use picard_sim::linear::{LinearEnv, LinearSystemSpec};
use picard_sim::policies::{CapacityPenalizedPolicy, DualNetworkPolicy, FoPolicy, GreedyPolicy};
use proptest::prelude::*;

fn policy(kind: u8, instance: &Instance, seed: u64) -> FoPolicy {
    match kind % 4 {
        0 => FoPolicy::Greedy(GreedyPolicy),
        1 => FoPolicy::DualNetwork(Box::new(DualNetworkPolicy::zeros(&instance.env(), instance.horizon()))),
        2 => FoPolicy::DualNetwork(Box::new(DualNetworkPolicy::seeded(&instance.env(), instance.horizon(), seed))),
        _ => FoPolicy::CapacityPenalized(CapacityPenalizedPolicy::new(f64::from(kind) / 16.0).unwrap()),
    }
}

fn small_instance() -> impl Strategy<Value = (Instance, u64)> {
    (1usize..=6, 1usize..=25, 1usize..=150, 0u8..=3, 0.2f64..=1.0, any::<u64>()).prop_map(
        |(j, i, t, b, coverage, seed)| {
            let beta = -0.4 * f64::from(b);
            (generate_instance(j, i, t, beta, coverage, seed).unwrap(), seed)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn picard_reproduces_the_sequential_actions(
        (instance, seed) in small_instance(),
        kind in any::<u8>(),
        processes in 1usize..=12,
        uniform in any::<bool>(),
        max_steps in prop_oneof![Just(0usize), 1usize..=40],
    ) {
        let env = instance.env();
        let p = policy(kind, &instance, seed);
        let oracle = sequential_actions(&env, &p, &instance.orders).unwrap();
        let plan = if uniform {
            make_uniform_partition(&instance, processes, seed).unwrap()
        } else {
            make_product_partition(&instance, processes, seed).unwrap()
        };
        let config = PicardConfig::default().with_max_steps(max_steps);
        let run = picard_simulate(&env, &p, &instance.orders, &plan, &config, Some(&oracle)).unwrap();
        prop_assert_eq!(&run.actions, &oracle);
        prop_assert!(run.iterations_to_correct.unwrap() <= run.iterations_to_converged);
        prop_assert!(run.policy_eval_count_sequential_equivalent <= run.total_policy_evals);
    }

    #[test]
    fn any_initial_cache_converges_to_the_same_actions(
        (instance, seed) in small_instance(),
        junk in prop::collection::vec(prop::option::of(0u32..8), 150),
        processes in 1usize..=6,
    ) {
        let env = instance.env();
        let oracle = sequential_actions(&env, &GreedyPolicy, &instance.orders).unwrap();
        let cache: Vec<FoAction> = junk[..instance.horizon()]
            .iter()
            .map(|a| match a {
                Some(j) if (*j as usize) < instance.nodes() => FoAction::Node(*j),
                _ => FoAction::Null,
            })
            .collect();
        let plan = make_uniform_partition(&instance, processes, seed).unwrap();
        let config = PicardConfig::whole_horizon().with_initial_cache(cache);
        let run = picard_simulate(&env, &GreedyPolicy, &instance.orders, &plan, &config, Some(&oracle)).unwrap();
        prop_assert_eq!(run.actions, oracle);
    }

    #[test]
    fn product_partition_keeps_each_product_on_one_process(
        (instance, seed) in small_instance(),
        processes in 1usize..=10,
    ) {
        let plan = make_product_partition(&instance, processes, seed).unwrap();
        let mut owner = vec![None; instance.products()];
        for (t, order) in instance.orders.iter().enumerate() {
            let slot = &mut owner[order.product as usize];
            let m = plan.owner(t);
            prop_assert!(m < processes);
            prop_assert_eq!(*slot.get_or_insert(m), m);
        }
    }

    #[test]
    fn parallel_and_serial_execution_agree(
        (instance, seed) in small_instance(),
        processes in 1usize..=8,
    ) {
        let env = instance.env();
        let plan = make_uniform_partition(&instance, processes, seed).unwrap();
        let serial = PicardConfig::default().with_trace();
        let parallel = PicardConfig::default().with_trace().with_execution(Execution::Parallel);
        let a = picard_simulate(&env, &GreedyPolicy, &instance.orders, &plan, &serial, None).unwrap();
        let b = picard_simulate(&env, &GreedyPolicy, &instance.orders, &plan, &parallel, None).unwrap();
        prop_assert_eq!(a.actions, b.actions);
        prop_assert_eq!(a.trace, b.trace);
        prop_assert_eq!(a.conflicts, b.conflicts);
    }

    #[test]
    fn linear_picard_matches_the_rollout(
        n in 1usize..=4,
        p in 1usize..=3,
        horizon in 1usize..=60,
        rho in 0.05f64..0.95,
        processes in 1usize..=8,
        seed in any::<u64>(),
    ) {
        let spec = LinearSystemSpec::random(n, p, horizon, rho, seed).unwrap();
        let env = LinearEnv::new(spec);
        let policy = env.policy();
        let steps = env.disturbances();
        let oracle = sequential_actions(&env, &policy, &steps).unwrap();
        let plan = PartitionPlan::uniform(horizon, processes, seed).unwrap();
        let run = picard_simulate(&env, &policy, &steps, &plan, &PicardConfig::default(), None).unwrap();
        for (a, b) in run.actions.iter().zip(&oracle) {
            prop_assert!((a - b).norm() <= 1e-6 * (1.0 + b.norm()));
        }
    }
}

#[test]
fn empty_horizon() {
    let instance = generate_instance(3, 4, 1, 0.0, 0.8, 0).unwrap();
    let plan = PartitionPlan::single(0);
    let run = picard_simulate(&instance.env(), &GreedyPolicy, &[], &plan, &PicardConfig::default(), Some(&[])).unwrap();
    assert!(run.actions.is_empty());
}
