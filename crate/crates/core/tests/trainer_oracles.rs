//! Sampler, estimator and solver checked against exact and dense oracles.

#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::BTreeMap;

use common::{one_hot_features, random_one_hot_policy};
use lmdp_npg::analysis::fitting_error_exact;
use lmdp_npg::envs::{sp_optimal_policy_dp, SpConfig, SpEnv};
use lmdp_npg::lmdp::StateActionWeighting;
use lmdp_npg::lmdp::{ExactEvaluation, TabularComponent, Transition};
use lmdp_npg::policy::ConstantPolicy;
use lmdp_npg::rng::stream;
use lmdp_npg::trainer::{
    estimate_fisher_and_gradient, sample_advantage, solve_constrained_quadratic, AdvantageSample, DEFAULT_CLIP,
};
use lmdp_npg::{Action, FeatureMap, LogLinearPolicy, Policy, TabularLmdp};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

/// Per-cell (observation, action) sample means at step `h`, reached by
/// always rejecting and then acting uniformly.
fn cell_means(
    env: &SpEnv,
    pi_t: &LogLinearPolicy,
    h: usize,
    draws: usize,
    seed: u64,
) -> BTreeMap<(Vec<u64>, usize), (f64, f64, usize)> {
    let samples: Vec<AdvantageSample> = (0..draws)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = stream(seed, &[h as u64, k as u64]);
            sample_advantage(
                env,
                &ConstantPolicy::ALWAYS_REJECT,
                true,
                pi_t,
                h,
                0.0,
                DEFAULT_CLIP,
                &mut rng,
            )
            .unwrap()
        })
        .collect();
    let mut cells: BTreeMap<(Vec<u64>, usize), (f64, f64, usize)> = BTreeMap::new();
    for s in samples {
        let key = (s.observation.iter().map(|x| x.to_bits()).collect(), s.action.index());
        let e = cells.entry(key).or_default();
        e.0 += s.a_hat;
        e.1 += s.a_hat * s.a_hat;
        e.2 += 1;
    }
    cells
}

#[test]
fn advantage_samples_are_unbiased_per_cell() {
    let n = 5;
    let env = SpEnv::new(SpConfig::classical(n).unwrap());
    let model = env.collapsed_tabular().unwrap();
    let mut rng = stream(2, &[]);
    let theta: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let pi = LogLinearPolicy::new(theta, FeatureMap::SpPoly { d0: 4 }).unwrap();
    let eval = ExactEvaluation::new(&model, &pi, 0.0).unwrap();
    let (mut cells, mut pass) = (0, 0);
    for h in 0..n {
        for ((bits, a), (sum, sq, count)) in cell_means(&env, &pi, h, 40_000, 9) {
            let obs: Vec<f64> = bits.iter().map(|b| f64::from_bits(*b)).collect();
            let mean = sum / count as f64;
            let var = (sq / count as f64 - mean * mean).max(0.0);
            let se = (var / count as f64).sqrt();
            let exact = eval.advantage_at(0, n - h, &obs, Action::from_index(a)).unwrap();
            cells += 1;
            if (mean - exact).abs() <= 3.0 * se + 1e-12 {
                pass += 1;
            }
        }
    }
    assert_eq!(cells, 18);
    assert!(pass >= 17, "{pass}/{cells} cells within 3 sigma");
}

fn bandit(reward_accept: f64) -> TabularLmdp {
    TabularLmdp::new(
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
                        reward: reward_accept,
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
    .unwrap()
}

#[test]
fn last_step_estimate_is_one_step_advantage() {
    let model = bandit(1.0);
    let pi = LogLinearPolicy::new(vec![0.4, 0.3], FeatureMap::SpPoly { d0: 1 }).unwrap();
    let p_acc = pi.action_probs(&[0.5, 1.0]).unwrap()[0];
    let draws = 200_000;
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    let mut rng = stream(4, &[]);
    for _ in 0..draws {
        let s = sample_advantage(&model, &pi, true, &pi, 0, 0.0, DEFAULT_CLIP, &mut rng)
            .unwrap()
            .unwrap();
        sums[s.action.index()] += s.a_hat;
        counts[s.action.index()] += 1;
        assert!(s.a_hat.abs() <= 2.0);
    }
    // r(s,a) - E_{a' ~ pi}[r(s,a')]; each estimate has variance at most 4.
    let expected = [1.0 - p_acc, -p_acc];
    for a in 0..2 {
        let mean = sums[a] / counts[a] as f64;
        assert!(
            (mean - expected[a]).abs() < 3.0 * 2.0 / (counts[a] as f64).sqrt(),
            "{a}: {mean}"
        );
    }
    // Zero reward gives exactly zero estimates.
    let zero = bandit(0.0);
    for _ in 0..1000 {
        let s = sample_advantage(&zero, &pi, false, &pi, 0, 0.0, DEFAULT_CLIP, &mut rng)
            .unwrap()
            .unwrap();
        assert_eq!(s.a_hat, 0.0);
    }
}

#[test]
fn exhaustive_fisher_sum_equals_generic_fisher_at_zero() {
    let n = 4;
    let model = SpEnv::new(SpConfig::classical(n).unwrap()).collapsed_tabular().unwrap();
    let pi = LogLinearPolicy::zeros(FeatureMap::SpPoly { d0: 4 });
    // Integer replication of the visitation weights: d_h(s) * scale is whole.
    let scale = 192.0;
    let mut samples = Vec::new();
    let mut total = 0.0;
    for h in 0..n {
        for per_m in model.visitation_at(&pi, h).unwrap() {
            for (g, p) in per_m {
                if model.is_terminal(g) || p == 0.0 {
                    continue;
                }
                let copies = p * scale;
                assert!(
                    (copies - copies.round()).abs() < 1e-9,
                    "weight {p} is not a multiple of 1/{scale}"
                );
                for _ in 0..copies.round() as usize {
                    for a in Action::ALL {
                        samples.push(AdvantageSample {
                            observation: model.observations()[g].clone(),
                            action: a,
                            a_hat: 0.0,
                            h,
                        });
                    }
                }
                total += p;
            }
        }
    }
    assert!(total > 0.0);
    let est = estimate_fisher_and_gradient(&samples, &pi).unwrap();
    // Each copy contributes both actions at probability 1/2.
    let normalized = &est.f_hat / (2.0 * scale);
    let sigma = model.fisher(&pi, StateActionWeighting::OnPolicy(&pi)).unwrap();
    assert!((normalized - &sigma).amax() < 1e-10);
    assert!((&est.f_hat - est.f_hat.transpose()).amax() < 1e-12);
}

#[test]
fn fitting_error_with_zero_step_is_expected_advantage() {
    let n = 5;
    let cfg = SpConfig::classical(n).unwrap();
    let model = SpEnv::new(cfg.clone()).collapsed_tabular().unwrap();
    let reference = sp_optimal_policy_dp(&cfg).policy();
    let mut rng = stream(6, &[]);
    let theta: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let pi = LogLinearPolicy::new(theta, FeatureMap::SpPoly { d0: 4 }).unwrap();
    for lambda in [0.0, 0.01] {
        let eval = ExactEvaluation::new(&model, &pi, lambda).unwrap();
        let d = model.visitation(&reference).unwrap();
        let mut expected = 0.0;
        for (m, c) in model.components().iter().enumerate() {
            for h in 0..n {
                for (s, &p) in d[m][h].iter().enumerate() {
                    let g = c.states[s];
                    if model.is_terminal(g) {
                        continue;
                    }
                    let probs = reference.action_probs(&model.observations()[g]).unwrap();
                    for a in Action::ALL {
                        expected += c.weight * p * probs[a.index()] * eval.advantage(m, n - h, s, a);
                    }
                }
            }
        }
        let got = fitting_error_exact(&model, &reference, &pi, &[0.0; 8], lambda).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }
}

#[test]
fn perfect_one_hot_fit_has_zero_fitting_error() {
    let n = 6;
    let cfg = SpConfig::classical(n).unwrap();
    let model = SpEnv::new(cfg.clone()).collapsed_tabular().unwrap();
    let reference = sp_optimal_policy_dp(&cfg).policy();
    let mut rng = stream(7, &[]);
    let pi = random_one_hot_policy(&model, 1.0, &mut rng);
    let FeatureMap::OneHot(hot) = one_hot_features(&model) else {
        unreachable!()
    };
    for lambda in [0.0, 0.01] {
        let eval = ExactEvaluation::new(&model, &pi, lambda).unwrap();
        // Each decision observation is reached at exactly one step: (i/n, x) at i - 1.
        let step: Vec<f64> = hot
            .observations()
            .iter()
            .map(|obs| {
                let i = (obs[0] * n as f64).round() as usize;
                let p_acc = pi.action_probs(obs).unwrap()[0];
                eval.advantage_at(0, n - (i - 1), obs, Action::Accept).unwrap() / (1.0 - p_acc)
            })
            .collect();
        let err = fitting_error_exact(&model, &reference, &pi, &step, lambda).unwrap();
        assert!(err.abs() < 1e-8, "lambda={lambda}: err {err}");
    }
}

fn random_psd<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    (&a * a.transpose()) / d as f64 + DMatrix::identity(d, d) * 0.1
}

/// Ball-constrained minimizer by bisection on the multiplier.
fn kkt_oracle(f: &DMatrix<f64>, nabla: &DVector<f64>, radius: f64) -> DVector<f64> {
    let d = nabla.len();
    let solve = |mu: f64| (f + DMatrix::identity(d, d) * mu).cholesky().unwrap().solve(nabla);
    let (mut lo, mut hi) = (0.0, 1.0);
    while solve(hi).norm() > radius {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if solve(mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    solve(hi)
}

#[test]
fn solver_matches_dense_and_kkt_oracles() {
    let mut rng = stream(12, &[]);
    let radius = 50.0;
    for trial in 0..40 {
        let d = [2, 5, 8, 20, 64, 243][trial % 6];
        let f = random_psd(d, &mut rng);
        // Interior: the unconstrained solution lies inside the ball.
        let target: DVector<f64> = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let target: DVector<f64> = &target * (rng.gen_range(0.1..0.9f64) * radius / target.norm());
        let nabla = &f * &target;
        let g = solve_constrained_quadratic(&f, &nabla, radius, 1e-10, 5000).unwrap();
        let dense = f.clone().lu().solve(&nabla).unwrap();
        assert!((&g - &dense).amax() < 1e-6, "interior d={d}: {}", (&g - &dense).amax());
        // Boundary: scale the gradient until the unconstrained solution leaves.
        let nabla_out: DVector<f64> = &nabla * (rng.gen_range(2.0..20.0f64) * radius / target.norm());
        let g = solve_constrained_quadratic(&f, &nabla_out, radius, 1e-10, 5000).unwrap();
        let oracle = kkt_oracle(&f, &nabla_out, radius);
        assert!(
            (&g - &oracle).amax() < 1e-6,
            "boundary d={d}: {}",
            (&g - &oracle).amax()
        );
        assert!(g.norm() <= radius * (1.0 + 1e-12));
    }
}
