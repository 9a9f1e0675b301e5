use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use rebuild_core::agents::{
    random_policy, select_action, tabular_update, AgentKind, Bootstrap, Environment, Policy, QTable,
    ReplayBuffer,
};
use rebuild_core::city::{
    build_dependency_graph, parse_dataset, to_canonical_string, DependencyEdge, DependencyGraph, ItemId,
};
use rebuild_core::instance::Instance;
use rebuild_core::metrics::{BenefitConfig, IntactSet};
use rebuild_core::planner::{generate_instance, parallel_sublists};

fn chi_square_p(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn full_exploration_is_uniform_over_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let q = [5.0, 1.0, 9.0, 0.0, 3.0];
    let feasible = [0, 1, 3, 4];
    let mut counts = [0usize; 4];
    for _ in 0..10_000 {
        let a = select_action(&q, &feasible, 1.0, &mut rng).unwrap();
        counts[feasible.iter().position(|&f| f == a).unwrap()] += 1;
    }
    assert!(chi_square_p(&counts) > 0.01, "{counts:?}");
}

#[test]
fn random_policy_is_uniform_and_reproducible() {
    let feasible = [2, 4, 6, 8];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = [0usize; 4];
    for _ in 0..10_000 {
        let a = random_policy(&feasible, &mut rng).unwrap();
        counts[a / 2 - 1] += 1;
    }
    assert!(chi_square_p(&counts) > 0.01, "{counts:?}");
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..20)
            .map(|_| random_policy(&feasible, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(5), draw(5));
}

#[test]
fn greedy_sarsa_reaches_the_value_iteration_fixpoint() {
    // chain s0 -> s1 -> terminal with a detour back to s0
    let mdp = [[(1usize, 1.0), (2usize, 0.0)], [(2, 2.0), (0, 0.5)]];
    let gamma = 0.9;
    let mut oracle = [[0.0f64; 2]; 2];
    for _ in 0..10_000 {
        let mut next = oracle;
        for s in 0..2 {
            for a in 0..2 {
                let (s2, r) = mdp[s][a];
                let v = if s2 == 2 { 0.0 } else { oracle[s2][0].max(oracle[s2][1]) };
                next[s][a] = r + gamma * v;
            }
        }
        oracle = next;
    }
    let mut table: QTable<usize> = QTable::new(2);
    for _ in 0..1000 {
        for s in 0..2 {
            for a in 0..2 {
                let (s2, r) = mdp[s][a];
                let boot = if s2 == 2 {
                    Bootstrap::Terminal
                } else {
                    let greedy = if table.get(&s2, 1) > table.get(&s2, 0) { 1 } else { 0 };
                    Bootstrap::Action(greedy)
                };
                tabular_update(&mut table, &s, a, r, &s2, boot, 0.5, gamma);
            }
        }
    }
    for s in 0..2 {
        for a in 0..2 {
            assert!((table.get(&s, a) - oracle[s][a]).abs() < 1e-3);
        }
    }
}

#[test]
fn fifteen_item_plan_with_four_dependencies_has_five_groups() {
    let ids: Vec<ItemId> = (1..=15).map(|i| ItemId::new(format!("v{i:02}"))).collect();
    let graph = DependencyGraph::from_edges([
        DependencyEdge::new("v04", "v02"),
        DependencyEdge::new("v07", "v05"),
        DependencyEdge::new("v10", "v08"),
        DependencyEdge::new("v13", "v11"),
    ]);
    let groups = parallel_sublists(&ids, &graph);
    assert_eq!(groups.len(), 5);
    assert_eq!(groups.concat(), ids);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_buffer_keeps_the_newest(capacity in 1usize..50, extra in 0usize..100) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..capacity + extra {
            buf.push(i);
        }
        prop_assert_eq!(buf.len(), capacity);
        let kept: Vec<usize> = buf.iter().copied().collect();
        prop_assert_eq!(kept, (extra..capacity + extra).collect::<Vec<_>>());
    }

    #[test]
    fn episode_reward_equals_plan_item_benefits(
        units in 3usize..12,
        damage in 0.2f64..0.9,
        seed in any::<u64>(),
        incremental in any::<bool>(),
    ) {
        let ds = generate_instance(units, damage, 0.3, seed).unwrap();
        prop_assume!(ds.has_damage());
        let config = BenefitConfig {
            intact_set: if incremental { IntactSet::Incremental } else { IntactSet::Frozen },
            ..Default::default()
        };
        let inst = Instance::new(&ds, config).unwrap();
        let env = Environment::new(&inst, 100_000.0, 60.0, Default::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut episode = env.reset(&mut rng);
        let mut total = 0.0;
        while !episode.is_done() {
            let a = Policy::Random.act(&env, &episode, 0.0, &mut rng).unwrap();
            let t = env.step(&mut episode, a).unwrap();
            prop_assert!(t.reward >= 0.0);
            prop_assert!(t.next_state.remaining_budget >= 0.0 && t.next_state.remaining_time >= 0.0);
            prop_assert_eq!(t.terminal, episode.feasible().is_empty());
            total += t.reward;
        }
        let expected: f64 = inst.benefit().plan_item_benefits(episode.plan()).unwrap().iter().sum();
        prop_assert!((total - expected).abs() <= 1e-9 * expected.max(1.0), "{} vs {}", total, expected);
    }

    #[test]
    fn generated_datasets_round_trip_through_text(units in 1usize..25, seed in any::<u64>()) {
        let ds = generate_instance(units, 0.4, 0.5, seed).unwrap();
        let back = parse_dataset(&to_canonical_string(&ds)).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert!(build_dependency_graph(&ds).is_acyclic());
    }
}

#[test]
fn agent_kinds_cover_the_baseline() {
    assert_eq!(AgentKind::ALL.len(), 5);
    assert!(AgentKind::ALL.iter().filter(|k| !k.is_learning()).eq([&AgentKind::Random]));
}
