//! Scheme matrix behaviour at small scale.

use lmdp_npg::curriculum::{generate_curriculum, run_scheme, CurriculumConfig, SchemePolicy};
use lmdp_npg::envs::{okd_bang_per_buck_reference, sp_optimal_policy_dp, SpConfig};
use lmdp_npg::lmdp::evaluate_value_mc;
use lmdp_npg::policy::ConstantPolicy;
use lmdp_npg::{
    npg_train, AnyEnv, EnvConfig, EnvKind, FeatureMap, LogLinearPolicy, Policy, Sampler, TrainConfig, TrainingScheme,
};

fn small_train(seed: u64) -> TrainConfig {
    TrainConfig {
        eta: 0.2,
        episodes: 6,
        batch: 8,
        seed,
        log_every: 3,
        eval_episodes: 200,
        checkpoint_every: 1,
        ..Default::default()
    }
}

#[test]
fn every_scheme_runs_and_labels_its_rows() {
    let mut cfg = CurriculumConfig::new(EnvConfig::sp_seeded(8, 3), small_train(1));
    cfg.warmup_n = 4;
    for scheme in TrainingScheme::ALL {
        let out = run_scheme(scheme, &cfg).unwrap();
        let log = out.combined_log();
        assert!(!log.rows.is_empty());
        assert!(
            log.rows
                .iter()
                .all(|r| r.mode.starts_with(&format!("{}:", scheme.name()))),
            "{scheme}"
        );
        assert_eq!(out.warmup_log.is_some(), scheme.is_curriculum());
        let lambda = if scheme.is_regularized() { 0.01 } else { 0.0 };
        assert!(out.final_log.rows.iter().all(|r| r.lambda == lambda));
        // Sample counts never decrease across the phase boundary.
        assert!(log
            .rows
            .windows(2)
            .all(|w| w[0].samples_cumulative <= w[1].samples_cumulative));
    }
}

#[test]
fn direct_is_plain_npg_from_zero() {
    let env_cfg = EnvConfig::sp_classical(6);
    // The default warm-up size equals n here; single-phase schemes ignore it.
    let cfg = CurriculumConfig::new(env_cfg.clone(), small_train(4));
    let out = run_scheme(TrainingScheme::Direct, &cfg).unwrap();
    let env = env_cfg.build().unwrap();
    let train = TrainConfig {
        label: "direct".into(),
        ..small_train(4)
    };
    let plain = npg_train(&env, LogLinearPolicy::zeros(FeatureMap::SpPoly { d0: 4 }), &train, None).unwrap();
    assert_eq!(out.policy.trained().unwrap().theta(), plain.policy.theta());
    assert_eq!(out.final_log.checkpoints, plain.log.checkpoints);
}

#[test]
fn empty_warmup_curl_matches_direct() {
    let mut cfg = CurriculumConfig::new(EnvConfig::sp_classical(6), small_train(5));
    cfg.warmup_n = 3;
    cfg.warmup.episodes = Some(0);
    let curl = run_scheme(TrainingScheme::Curl, &cfg).unwrap();
    let direct = run_scheme(TrainingScheme::Direct, &cfg).unwrap();
    assert_eq!(curl.final_log.checkpoints, direct.final_log.checkpoints);
    let rewards = |o: &lmdp_npg::SchemeOutcome| o.final_log.rows.iter().map(|r| r.reward_mean).collect::<Vec<_>>();
    assert_eq!(rewards(&curl), rewards(&direct));
}

#[test]
fn fixed_sampler_restarts_from_zero() {
    let mut cfg = CurriculumConfig::new(EnvConfig::sp_classical(6), small_train(6));
    cfg.warmup_n = 3;
    let out = run_scheme(TrainingScheme::FixSampCurl, &cfg).unwrap();
    let warm = out.warmup_policy.as_ref().unwrap();
    assert!(warm.theta().iter().any(|x| *x != 0.0));
    // Restarting from zero: the first evaluated reward matches the untrained direct run.
    let direct = run_scheme(TrainingScheme::Direct, &cfg).unwrap();
    assert_eq!(out.final_log.rows[0].iteration, 0);
    assert_eq!(out.final_log.rows[0].reward_mean, direct.final_log.rows[0].reward_mean);
    assert!(
        out.final_log.rows[0].mode.ends_with("/fixed"),
        "{}",
        out.final_log.rows[0].mode
    );
}

#[test]
fn reference_scheme_on_classical_hundred() {
    let cfg = CurriculumConfig::new(EnvConfig::sp_classical(100), small_train(0));
    let out = run_scheme(TrainingScheme::Reference, &cfg).unwrap();
    let SchemePolicy::Reference(policy) = &out.policy else {
        panic!("reference must not train")
    };
    let dp = sp_optimal_policy_dp(&SpConfig::classical(100).unwrap());
    assert!(dp.value >= 1.0 / std::f64::consts::E - 0.01);
    assert!(dp.threshold.is_some());
    let expected = dp.policy();
    for i in 1..=100 {
        for x in [0.0, 1.0] {
            let obs = [i as f64 / 100.0, x];
            assert_eq!(policy.action_probs(&obs).unwrap(), expected.action_probs(&obs).unwrap());
        }
    }
    assert!((out.final_log.rows[0].reward_mean - dp.value).abs() < 1e-12);
}

#[test]
fn curricula_are_reproducible_and_scaled() {
    let sp = EnvConfig::sp_seeded(100, 9);
    let a = generate_curriculum(&sp, 10, 1).unwrap();
    assert_eq!(a, generate_curriculum(&sp, 10, 1).unwrap());
    assert_eq!((a.env, a.n), (EnvKind::Sp, 10));
    assert_ne!(a.seed, sp.seed);
    let classical = generate_curriculum(&EnvConfig::sp_classical(100), 10, 1).unwrap();
    assert!(classical.classical);

    let okd = EnvConfig::okd(100, 20.0, 25.0, 0, 2);
    let w = generate_curriculum(&okd, 10, 1).unwrap();
    assert_eq!(w.n, 10);
    assert!((w.budget / w.n as f64 - okd.budget / okd.n as f64).abs() < 1e-12);
    assert!(w.target / w.budget < okd.target / okd.budget);
    assert!(generate_curriculum(&okd, 100, 1).is_err());
}

#[test]
fn bang_per_buck_beats_trivial_policies() {
    let env_cfg = EnvConfig::okd(10, 2.0, 2.5, 0, 0);
    let AnyEnv::Okd(env) = env_cfg.build().unwrap() else {
        unreachable!()
    };
    let search = okd_bang_per_buck_reference(env.config(), 5000, 3).unwrap();
    // Common random numbers: identical seeds give identical instances.
    let v = |p: &dyn lmdp_npg::Policy| evaluate_value_mc(&env, p, 0.0, 20_000, 8).unwrap();
    let reference = v(&search.policy);
    let accept = v(&ConstantPolicy::ALWAYS_ACCEPT);
    let reject = v(&ConstantPolicy::ALWAYS_REJECT);
    assert!(reference.mean > accept.mean + 3.0 * (reference.ci95 + accept.ci95));
    assert_eq!(reject.mean, 0.0);
    let _ = Sampler::OnPolicy;
}
