use anytime_cmdp::approx::{build_approx, make_config, Mode};
use anytime_cmdp::augment::{build_augmented, precision_diversity_bound};
use anytime_cmdp::history::{derandomize, evaluate_policy, random_history_policy, DEFAULT_HISTORY_CEILING};
use anytime_cmdp::instances::{self, RandomOptions};
use anytime_cmdp::learn::{learn_policy, LearnerConfig, ProtocolEnv};
use anytime_cmdp::oracle::{self, DEFAULT_ORACLE_CEILING};
use anytime_cmdp::rational::{self, ratio};
use anytime_cmdp::simulate::{enumerate_trajectories, DEFAULT_TRAJECTORY_CEILING};
use anytime_cmdp::solve::backward_induction;
use anytime_cmdp::{BuildLimits, Error};

fn solve_exact(spec: &anytime_cmdp::CmdpSpec) -> Option<anytime_cmdp::Rational> {
    backward_induction(&build_augmented(spec, &BuildLimits::default()).unwrap())
        .optimal_value()
        .cloned()
}

#[test]
fn knapsack_instances_match_the_dp() {
    let spec = instances::gen_knapsack(&[3, 4, 5], &[2, 3, 4], 5).unwrap();
    assert_eq!(oracle::knapsack_dp(&[3, 4, 5], &[2, 3, 4], 5), Some(7));
    assert_eq!(solve_exact(&spec), Some(rational::int(7)));
    for seed in 0..40 {
        let (v, w, b) = instances::random_knapsack(seed, 5, 6);
        let spec = instances::gen_knapsack(&v, &w, b).unwrap();
        assert_eq!(solve_exact(&spec), oracle::knapsack_dp(&v, &w, b).map(rational::int), "seed {seed}");
    }
}

#[test]
fn partition_instances_match_subset_search() {
    assert_eq!(solve_exact(&instances::gen_partition(&[1, 2]).unwrap()), None);
    assert!(solve_exact(&instances::gen_partition(&[3, 1, 1, 2, 2, 1]).unwrap()).is_some());
    for seed in 0..40 {
        let items = instances::random_partition(seed, 6, 5);
        let spec = instances::gen_partition(&items).unwrap();
        assert_eq!(
            solve_exact(&spec).is_some(),
            oracle::partition_feasibility(&items).is_some(),
            "items {items:?}"
        );
    }
}

#[test]
fn mode_parameter_arithmetic() {
    let spec = instances::gen_hard_family(10, &rational::int(10), 0, instances::DEFAULT_QUANTUM).unwrap();
    let additive = make_config(&spec, Mode::Additive, &ratio(1, 10)).unwrap();
    assert_eq!(additive.ell(), &[ratio(1, 100)]);
    let feasible = make_config(&spec, Mode::FeasibleRelative, &ratio(1, 10)).unwrap();
    assert_eq!(feasible.budget_used(), &[ratio(100, 11)]);
    let zero = instances::gen_hard_family(10, &rational::zero(), 0, instances::DEFAULT_QUANTUM).unwrap();
    assert!(matches!(make_config(&zero, Mode::Relative, &ratio(1, 10)), Err(Error::Config(_))));
}

#[test]
fn zero_cost_actions_make_layers_exact() {
    for seed in 0..60 {
        let opts = RandomOptions { zero_cost_action: true, budget: Some(vec![seed as i64 % 3]), ..instances::tiny_options(seed) };
        let spec = instances::gen_random(&opts, seed).unwrap();
        let aug = build_augmented(&spec, &BuildLimits::default()).unwrap();
        let feasible = oracle::exact_feasible_sets(&spec, DEFAULT_ORACLE_CEILING).unwrap();
        for h in 1..=spec.horizon() + 1 {
            let layer: std::collections::BTreeSet<_> =
                aug.layer(h).nodes().iter().map(|n| (n.state, n.key.clone())).collect();
            assert_eq!(layer, feasible[h - 1], "seed {seed}, h {h}");
        }
    }
}

#[test]
fn diversity_stays_under_the_precision_bound() {
    for seed in 0..40 {
        let opts = RandomOptions { horizon: 4, denominator: 2, cost_bound: 2, ..Default::default() };
        let spec = instances::gen_random(&opts, seed).unwrap();
        let aug = build_augmented(&spec, &BuildLimits::default()).unwrap();
        assert!(aug.diversity() as u128 <= precision_diversity_bound(4, 1, 2));
        assert!(precision_diversity_bound(4, 1, 2) <= 32);
    }
}

#[test]
fn additive_policies_stay_within_the_relaxed_budget() {
    for seed in 0..60 {
        let spec = instances::gen_tiny(seed).unwrap();
        let eps = ratio(1, 4);
        let cfg = make_config(&spec, Mode::Additive, &eps).unwrap();
        let sol = backward_induction(&build_approx(&spec, &cfg, &BuildLimits::default()).unwrap());
        let exact = solve_exact(&spec);
        if let Some(e) = &exact {
            assert!(sol.optimal_value().unwrap() >= e, "seed {seed}");
        }
        if !sol.is_feasible() {
            continue;
        }
        let relaxed: Vec<_> = spec.budget().to_rationals().iter().map(|b| b + &eps).collect();
        for (traj, _) in enumerate_trajectories(&spec, sol.policy(), Some(&cfg), DEFAULT_TRAJECTORY_CEILING).unwrap() {
            assert!(traj.within(&relaxed, spec.denominator()), "seed {seed}");
        }
    }
}

#[test]
fn derandomization_dominates_random_policies() {
    for seed in 0..40 {
        let spec = instances::gen_tiny(seed).unwrap();
        let random = random_history_policy(&spec, seed, DEFAULT_HISTORY_CEILING).unwrap();
        let before = evaluate_policy(&spec, &random, DEFAULT_HISTORY_CEILING).unwrap();
        let det = derandomize(&spec, &random, DEFAULT_HISTORY_CEILING).unwrap();
        assert!(det.is_deterministic());
        let after = evaluate_policy(&spec, &det, DEFAULT_HISTORY_CEILING).unwrap();
        assert!(after.value >= before.value, "seed {seed}");
        assert!(after.anytime_cost.le(&before.anytime_cost), "seed {seed}");
    }
}

#[test]
fn approximate_protocol_learning_respects_the_additive_bound() {
    let spec = instances::gen_hard_family(6, &rational::int(2), 3, instances::DEFAULT_QUANTUM).unwrap();
    let eps = ratio(1, 2);
    let cfg = make_config(&spec, Mode::Additive, &eps).unwrap();
    let mut env = ProtocolEnv::new(spec.clone(), Some(cfg), 5).unwrap();
    let learner = LearnerConfig { episodes: 500, delta: 0.1, gamma: 0.01, bonus_scale: 1.0, seed: 5 };
    let outcome = learn_policy(&mut env, &learner).unwrap();
    let bound = rational::to_f64(&(rational::int(2) + &eps)) + 1e-9;
    assert!(!outcome.log.is_empty());
    assert!(outcome.log.iter().any(|r| r.max_prefix[0] > 0.0));
    for record in &outcome.log {
        assert!(record.max_prefix.iter().all(|c| *c <= bound), "episode {}", record.episode);
    }
}

#[test]
fn learning_under_the_exact_protocol_never_violates() {
    for seed in 0..10 {
        let spec = instances::gen_tiny(seed).unwrap();
        if solve_exact(&spec).is_none() {
            continue;
        }
        let mut env = ProtocolEnv::new(spec, None, seed).unwrap();
        let learner = LearnerConfig { episodes: 200, delta: 0.1, gamma: 0.01, bonus_scale: 1.0, seed };
        let outcome = learn_policy(&mut env, &learner).unwrap();
        assert!(outcome.log.iter().all(|r| !r.violation), "seed {seed}");
    }
}
