//! Exact evaluation checked against independent oracles: permutation
//! enumeration, closed-form visitation, finite differences and the
//! performance-difference identity.

#![allow(clippy::needless_range_loop)]

mod common;

use common::{best_so_far, permutations, random_one_hot_policy, sp_obs};
use lmdp_npg::envs::{sp_optimal_policy_dp, SpConfig, SpEnv, ThresholdPolicy};
use lmdp_npg::lmdp::{entropy, evaluate_value_mc, ExactEvaluation, TabularComponent, Transition, DEFAULT_STATE_CAP};
use lmdp_npg::policy::{stable_sigmoid, ConstantPolicy, NaiveRandomPolicy};
use lmdp_npg::rng::stream;
use lmdp_npg::{Action, Environment, FeatureMap, LogLinearPolicy, Policy, TabularLmdp};
use rand::Rng;

/// Value of an index-set SP policy by averaging over all `n!` rank orders.
fn brute_force_value(n: usize, accepts: impl Fn(usize) -> bool) -> f64 {
    let perms = permutations(n);
    let wins = perms
        .iter()
        .filter(|perm| {
            let x = best_so_far(perm);
            match (1..=n).find(|&i| x[i - 1] && accepts(i)) {
                Some(i) => perm[i - 1] == 0,
                None => false,
            }
        })
        .count();
    wins as f64 / perms.len() as f64
}

#[test]
fn dp_matches_permutation_enumeration() {
    for n in 3..=6 {
        let cfg = SpConfig::classical(n).unwrap();
        let dp = sp_optimal_policy_dp(&cfg);
        let policy = dp.policy();
        let brute = brute_force_value(n, |i| policy.accepts(i));
        assert!(
            (dp.value - brute).abs() <= 1e-12,
            "n={n}: dp {} brute {brute}",
            dp.value
        );
        // Both exact routes agree with the brute force as well.
        let env = SpEnv::new(cfg);
        let collapsed = env.collapsed_tabular().unwrap().value(&policy, 0.0).unwrap();
        let explicit = env.tabular(DEFAULT_STATE_CAP).unwrap().value(&policy, 0.0).unwrap();
        assert!((collapsed - brute).abs() <= 1e-12);
        assert!((explicit - brute).abs() <= 1e-12);
        // No threshold does better than the DP.
        for k in 0..n {
            assert!(brute_force_value(n, |i| i > k) <= dp.value + 1e-12);
        }
    }
    let dp5 = sp_optimal_policy_dp(&SpConfig::classical(5).unwrap());
    assert!((dp5.value - 13.0 / 30.0).abs() <= 1e-12);
}

#[test]
fn uniform_policy_on_zero_reward_step_has_entropy_value() {
    let model = TabularLmdp::new(
        1,
        vec![vec![0.5], vec![0.0]],
        vec![false, true],
        vec![TabularComponent {
            weight: 1.0,
            states: vec![0, 1],
            initial: vec![(0, 1.0)],
            transitions: vec![
                [
                    vec![Transition {
                        next: 1,
                        prob: 1.0,
                        reward: 0.0,
                    }],
                    vec![Transition {
                        next: 1,
                        prob: 1.0,
                        reward: 0.0,
                    }],
                ],
                [Vec::new(), Vec::new()],
            ],
        }],
    )
    .unwrap();
    let v = model.value(&NaiveRandomPolicy, 1.0).unwrap();
    assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    assert_eq!(model.value(&NaiveRandomPolicy, 0.0).unwrap(), 0.0);
}

#[test]
fn best_always_last_gives_certain_success() {
    let cfg = SpConfig::from_series(vec![1.0; 6]).unwrap();
    let dp = sp_optimal_policy_dp(&cfg);
    assert!((1..6).all(|i| !dp.policy().accepts(i)) && dp.policy().accepts(6));
    let model = SpEnv::new(cfg).collapsed_tabular().unwrap();
    assert!((model.value(&dp.policy(), 0.0).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(model.value(&ConstantPolicy::ALWAYS_REJECT, 0.0).unwrap(), 0.0);
}

#[test]
fn advantage_edge_cases() {
    let n = 5;
    let model = SpEnv::new(SpConfig::classical(n).unwrap()).collapsed_tabular().unwrap();
    let mut rng = stream(11, &[]);
    let pi = random_one_hot_policy(&model, 2.0, &mut rng);
    let eval = ExactEvaluation::new(&model, &pi, 0.3).unwrap();
    for (m, c) in model.components().iter().enumerate() {
        for s in 0..c.states.len() {
            for a in Action::ALL {
                assert_eq!(eval.advantage(m, 0, s, a), 0.0);
            }
        }
    }
    // A deterministic policy has zero advantage for the action it takes.
    let dp = sp_optimal_policy_dp(&SpConfig::classical(n).unwrap()).policy();
    let eval = ExactEvaluation::new(&model, &dp, 0.0).unwrap();
    for (m, c) in model.components().iter().enumerate() {
        for (s, &g) in c.states.iter().enumerate() {
            if model.is_terminal(g) {
                continue;
            }
            let probs = dp.action_probs(&model.observations()[g]).unwrap();
            let taken = if probs[0] == 1.0 {
                Action::Accept
            } else {
                Action::Reject
            };
            for h in 1..=n {
                assert!(eval.advantage(m, h, s, taken).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn uniform_policy_advantage_matches_permutation_enumeration() {
    let n = 4;
    let perms = permutations(n);
    // Uniform-policy value from candidate j on, per permutation.
    let tail = |perm: &[usize], j: usize| -> f64 {
        let x = best_so_far(perm);
        let mut v = 0.0;
        for k in (j..=n).rev() {
            let win = if x[k - 1] && perm[k - 1] == 0 { 1.0 } else { 0.0 };
            v = 0.5 * win + 0.5 * v;
        }
        v
    };
    let cfg = SpConfig::classical(n).unwrap();
    let env = SpEnv::new(cfg);
    let collapsed = env.collapsed_tabular().unwrap();
    let explicit = env.tabular(DEFAULT_STATE_CAP).unwrap();
    let eval_c = ExactEvaluation::new(&collapsed, &NaiveRandomPolicy, 0.0).unwrap();
    let eval_e = ExactEvaluation::new(&explicit, &NaiveRandomPolicy, 0.0).unwrap();
    for i in 1..=n {
        for x in [false, true] {
            if i == 1 && !x {
                continue;
            }
            let group: Vec<&Vec<usize>> = perms.iter().filter(|p| best_so_far(p)[i - 1] == x).collect();
            let count = group.len() as f64;
            let q_acc = group.iter().filter(|p| x && p[i - 1] == 0).count() as f64 / count;
            let q_rej = group
                .iter()
                .map(|p| if i < n { tail(p, i + 1) } else { 0.0 })
                .sum::<f64>()
                / count;
            let v = 0.5 * (q_acc + q_rej);
            let obs = sp_obs(i, n, x);
            let h = n - (i - 1);
            for (a, q) in [(Action::Accept, q_acc), (Action::Reject, q_rej)] {
                let expected = q - v;
                let got = eval_c.advantage_at(0, h, &obs, a).unwrap();
                assert!((got - expected).abs() < 1e-12, "i={i} x={x} {a:?}: {got} vs {expected}");
                let cond = eval_e
                    .conditional_advantage(&NaiveRandomPolicy, i - 1, &obs, a)
                    .unwrap();
                assert!((cond - expected).abs() < 1e-12);
            }
        }
    }
}

fn reach_probability(model: &TabularLmdp, policy: &dyn Policy, i: usize, n: usize) -> f64 {
    let at = model.visitation_at(policy, i - 1).unwrap();
    at.iter()
        .flatten()
        .filter(|(g, _)| !model.is_terminal(*g) && model.observations()[*g][0] == i as f64 / n as f64)
        .map(|(_, p)| p)
        .sum()
}

#[test]
fn visitation_matches_closed_forms() {
    let n = 12;
    let cfg = lmdp_npg::envs::sp_generate_distribution(n, 4).unwrap();
    let model = SpEnv::new(cfg.clone()).collapsed_tabular().unwrap();
    for p in [0.2, 0.5, 1.0 / std::f64::consts::E] {
        let policy = ThresholdPolicy::new(p);
        let np = (n as f64 * p).floor() as usize;
        for i in 1..=n {
            let expected: f64 = (np + 1..i).map(|j| 1.0 - cfg.p(j)).product();
            let got = reach_probability(&model, &policy, i, n);
            assert!((got - expected).abs() < 1e-12, "p={p} i={i}: {got} vs {expected}");
        }
    }
    for i in 1..=n {
        let got = reach_probability(&model, &NaiveRandomPolicy, i, n);
        assert!((got - 0.5f64.powi(i as i32 - 1)).abs() < 1e-12);
    }
    // Step 0 is the initial distribution.
    let d = model.visitation(&NaiveRandomPolicy).unwrap();
    for (m, c) in model.components().iter().enumerate() {
        let mut nu = vec![0.0; c.states.len()];
        for &(s, p) in &c.initial {
            nu[s] += p;
        }
        assert_eq!(d[m][0], nu);
    }
}

#[test]
fn visitation_sums_to_one_and_regularized_value_splits() {
    let mut rng = stream(21, &[]);
    for trial in 0..40 {
        let model = TabularLmdp::random(&mut rng, 1 + trial % 3, 3 + trial % 4, 1 + trial % 5);
        let pi = random_one_hot_policy(&model, 3.0, &mut rng);
        let d = model.visitation(&pi).unwrap();
        for per_m in &d {
            for slice in per_m {
                assert!((slice.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let lambda: f64 = rng.gen_range(0.0..1.0);
        let reg = model.value(&pi, lambda).unwrap();
        let plain = model.value(&pi, 0.0).unwrap();
        let ent = model.entropy_return(&pi).unwrap();
        assert!((reg - (plain + lambda * ent)).abs() < 1e-10);
        let eval = ExactEvaluation::new(&model, &pi, lambda).unwrap();
        assert!((eval.unregularized_value() - plain).abs() < 1e-12);
    }
}

#[test]
fn performance_difference_identity_on_random_models() {
    let mut rng = stream(5, &[]);
    for trial in 0..100 {
        let model = TabularLmdp::random(&mut rng, 1 + trial % 3, 2 + trial % 5, 1 + trial % 6);
        let pi1 = random_one_hot_policy(&model, 2.0, &mut rng);
        let pi2 = random_one_hot_policy(&model, 2.0, &mut rng);
        let lambda = if trial % 4 == 0 { 0.0 } else { rng.gen_range(0.0..0.5) };
        let lhs = model.value(&pi1, lambda).unwrap() - model.value(&pi2, lambda).unwrap();
        // Right-hand side assembled from public pieces.
        let e2 = ExactEvaluation::new(&model, &pi2, lambda).unwrap();
        let d1 = model.visitation(&pi1).unwrap();
        let horizon = model.horizon();
        let mut rhs = 0.0;
        for (m, c) in model.components().iter().enumerate() {
            for h in 0..horizon {
                for (s, &p) in d1[m][h].iter().enumerate() {
                    let g = c.states[s];
                    if p == 0.0 || model.is_terminal(g) {
                        continue;
                    }
                    let obs = &model.observations()[g];
                    let p1 = pi1.action_probs(obs).unwrap();
                    let p2 = pi2.action_probs(obs).unwrap();
                    for a in Action::ALL {
                        let k = a.index();
                        rhs +=
                            c.weight * p * p1[k] * (e2.advantage(m, horizon - h, s, a) + lambda * (p2[k] / p1[k]).ln());
                    }
                }
            }
        }
        assert!((lhs - rhs).abs() < 1e-10, "trial {trial}: {lhs} vs {rhs}");
        let (l, r) = model.performance_difference(&pi1, &pi2, lambda).unwrap();
        assert!((l - lhs).abs() < 1e-12 && (r - rhs).abs() < 1e-10);
    }
}

#[test]
fn policy_gradient_matches_finite_differences() {
    let env = SpEnv::new(SpConfig::classical(4).unwrap());
    let models = [
        env.collapsed_tabular().unwrap(),
        env.tabular(DEFAULT_STATE_CAP).unwrap(),
    ];
    let theta = vec![0.3, -1.1, 0.8, 0.45, 1.2, -0.7, 0.9, -0.35];
    let policy = LogLinearPolicy::new(theta.clone(), FeatureMap::SpPoly { d0: 4 }).unwrap();
    let eps = 1e-5;
    for model in &models {
        for lambda in [0.0, 0.01] {
            let grad = model.policy_gradient(&policy, lambda).unwrap();
            for k in 0..theta.len() {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[k] += eps;
                dn[k] -= eps;
                let vu = model.value(&policy.with_theta(up).unwrap(), lambda).unwrap();
                let vd = model.value(&policy.with_theta(dn).unwrap(), lambda).unwrap();
                let fd = (vu - vd) / (2.0 * eps);
                let rel = (fd - grad[k]).abs() / grad[k].abs();
                assert!(rel < 1e-5, "lambda={lambda} k={k}: fd {fd} exact {}", grad[k]);
            }
        }
    }
}

#[test]
fn policy_gradient_of_regularized_bandit() {
    // One state, one step: accept pays 1. V = s + lambda H(s) with s = sigmoid(z),
    // so dV/dz = s (1 - s) (1 - lambda z).
    let model = TabularLmdp::new(
        1,
        vec![vec![0.5, 1.0], vec![0.0, 0.0]],
        vec![false, true],
        vec![TabularComponent {
            weight: 1.0,
            states: vec![0, 1],
            initial: vec![(0, 1.0)],
            transitions: vec![
                [
                    vec![Transition {
                        next: 1,
                        prob: 1.0,
                        reward: 1.0,
                    }],
                    vec![Transition {
                        next: 1,
                        prob: 1.0,
                        reward: 0.0,
                    }],
                ],
                [Vec::new(), Vec::new()],
            ],
        }],
    )
    .unwrap();
    for (z, lambda) in [(0.0, 0.5), (0.7, 0.1), (-1.3, 0.01), (2.0, 0.0)] {
        let policy = LogLinearPolicy::new(vec![z, 0.0], FeatureMap::SpPoly { d0: 1 }).unwrap();
        let s = stable_sigmoid(z);
        let expected = s * (1.0 - s) * (1.0 - lambda * z);
        let grad = model.policy_gradient(&policy, lambda).unwrap();
        assert!((grad[0] - expected).abs() < 1e-14, "z={z}: {} vs {expected}", grad[0]);
        // The x-coordinate multiplies the x = 1 observation feature.
        assert!((grad[1] - expected).abs() < 1e-14);
        let v = model.value(&policy, lambda).unwrap();
        assert!((v - (s + lambda * entropy(&[s, 1.0 - s]))).abs() < 1e-15);
    }
}

#[test]
fn zero_reward_gradient_vanishes() {
    let mut rng = stream(3, &[]);
    let base = TabularLmdp::random(&mut rng, 2, 4, 3);
    let components = base
        .components()
        .iter()
        .cloned()
        .map(|mut c| {
            for per_state in c.transitions.iter_mut() {
                for list in per_state.iter_mut() {
                    list.iter_mut().for_each(|t| t.reward = 0.0);
                }
            }
            c
        })
        .collect();
    let terminal = (0..base.observations().len()).map(|g| base.is_terminal(g)).collect();
    let model = TabularLmdp::new(base.horizon(), base.observations().to_vec(), terminal, components).unwrap();
    let pi = random_one_hot_policy(&model, 2.0, &mut rng);
    assert!(model.policy_gradient(&pi, 0.0).unwrap().iter().all(|g| *g == 0.0));
    let mc = evaluate_value_mc(&model, &pi, 0.0, 500, 1).unwrap();
    assert_eq!((mc.mean, mc.ci95), (0.0, 0.0));
}

#[test]
fn monte_carlo_value_tracks_exact_value() {
    let cfg = SpConfig::classical(5).unwrap();
    let env = SpEnv::new(cfg.clone());
    let dp = sp_optimal_policy_dp(&cfg).policy();
    let mc = evaluate_value_mc(&env, &dp, 0.0, 1_000_000, 17).unwrap();
    assert!((mc.mean - 13.0 / 30.0).abs() <= 3.0 * mc.ci95, "{mc:?}");
    let again = evaluate_value_mc(&env, &dp, 0.0, 1_000_000, 17).unwrap();
    assert_eq!(mc.mean.to_bits(), again.mean.to_bits());
    assert_eq!(mc.ci95.to_bits(), again.ci95.to_bits());

    // Regularized value on a random model, over repeated seeds.
    let mut rng = stream(8, &[]);
    let model = TabularLmdp::random(&mut rng, 3, 5, 4);
    let pi = random_one_hot_policy(&model, 1.5, &mut rng);
    let exact = model.value(&pi, 0.2).unwrap();
    let hits = (0..100)
        .filter(|&seed| {
            let mc = evaluate_value_mc(&model, &pi, 0.2, 4000, seed).unwrap();
            (mc.mean - exact).abs() <= 4.0 * mc.ci95
        })
        .count();
    assert!(hits >= 99, "{hits}/100 within 4 ci95");
}
