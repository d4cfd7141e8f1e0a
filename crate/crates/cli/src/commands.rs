use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use lmdp_npg::analysis::{kappa_closed_form_sp, kappa_empirical, kappa_empirical_mc};
use lmdp_npg::curriculum::{reference_policy, SchemePolicy};
use lmdp_npg::envs::{sp_optimal_policy_dp, SpConfig, SpDpSolution, ThresholdPolicy};
use lmdp_npg::rng::{derive_seed, label};
use lmdp_npg::trainer::Checkpoint;
use lmdp_npg::{run_scheme, AnyEnv, EnvConfig, KappaReport, Sampler, SpEnv, TrainingScheme};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint::{CheckpointFile, CheckpointMeta};
use crate::config::ExperimentConfig;
use crate::csv;
use crate::plot::{render_svg, Series};

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const PLOT_FILE: &str = "plot.svg";
pub const LOG_FILE: &str = "log.csv";

/// Options of the `run` subcommand after flag overrides.
#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub schemes: Vec<TrainingScheme>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    seed: u64,
    schemes: Vec<&'static str>,
    config: &'a ExperimentConfig,
    stream_labels: Vec<StreamLabel>,
    derived_seeds: serde_json::Value,
    stream_layout: serde_json::Value,
}

#[derive(Debug, Serialize)]
struct StreamLabel {
    name: &'static str,
    value: u64,
}

fn write_manifest(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let s = cfg.seed;
    let manifest = Manifest {
        seed: s,
        schemes: cfg.schemes.iter().map(|x| x.name()).collect(),
        config: cfg,
        stream_labels: label::ALL
            .iter()
            .map(|&(name, value)| StreamLabel { name, value })
            .collect(),
        derived_seeds: json!({
            "curriculum_instance_seed": derive_seed(s, &[label::CURRICULUM]),
            "diagnostic_seed": derive_seed(s, &[label::DIAGNOSTIC]),
            "reference_seed_final": derive_seed(s, &[label::REFERENCE, cfg.env.n as u64]),
        }),
        stream_layout: json!({
            "training_cell": "[phase, iteration, n * H + h]",
            "evaluation_episode": "[eval, episode, instance | actions]",
            "environment_distribution": "env seed: [env_dist, which]",
        }),
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn write_checkpoints(
    dir: &Path,
    env: &EnvConfig,
    feature: &lmdp_npg::FeatureMap,
    seed: u64,
    scheme: TrainingScheme,
    phase: &str,
    checkpoints: &[Checkpoint],
) -> Result<()> {
    for ck in checkpoints {
        let file = CheckpointFile {
            env: env.clone(),
            feature: feature.clone(),
            theta: ck.theta.clone(),
            meta: CheckpointMeta {
                seed,
                iteration: ck.iteration,
                scheme: Some(scheme.name().into()),
                phase: Some(phase.into()),
            },
        };
        file.save(&dir.join(format!("{phase}_{:06}.json", ck.iteration)))?;
    }
    Ok(())
}

/// Runs every configured scheme. Failures are reported and skipped so that
/// the remaining schemes still produce output; the result is an error if
/// any scheme failed.
pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !args.schemes.is_empty() {
        cfg.schemes = args.schemes.clone();
        cfg.validate()?;
    }
    if cfg.schemes.is_empty() {
        log::warn!("no schemes configured; nothing to do");
        return Ok(());
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| anyhow!("no output directory: pass --out or set `out` in the config"))?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_manifest(&out, &cfg)?;

    let ccfg = cfg.curriculum_config();
    let features = ccfg.features();
    let mut series = Vec::new();
    let mut failed = Vec::new();
    for &scheme in &cfg.schemes {
        log::info!("running scheme {scheme}");
        let dir = out.join(scheme.name());
        let result = (|| -> Result<Series> {
            let outcome = run_scheme(scheme, &ccfg)?;
            let ck_dir = dir.join("checkpoints");
            std::fs::create_dir_all(&ck_dir)?;
            let log = outcome.combined_log();
            csv::write_file(&dir.join(LOG_FILE), &log.rows)?;
            if let (Some(wlog), Some(wenv)) = (&outcome.warmup_log, &outcome.warmup_env) {
                write_checkpoints(&ck_dir, wenv, &features, cfg.seed, scheme, "warmup", &wlog.checkpoints)?;
            }
            write_checkpoints(
                &ck_dir,
                &cfg.env,
                &features,
                cfg.seed,
                scheme,
                "final",
                &outcome.final_log.checkpoints,
            )?;
            if let SchemePolicy::Reference(p) = &outcome.policy {
                std::fs::write(dir.join("reference_policy.txt"), p.describe() + "\n")?;
            }
            Ok(Series {
                label: scheme.name().into(),
                solid: scheme.is_curriculum(),
                rows: log.rows,
            })
        })();
        match result {
            Ok(s) => series.push(s),
            Err(e) => {
                log::error!("scheme {scheme} failed: {e:#}");
                failed.push(scheme.name());
            }
        }
    }
    if !series.is_empty() {
        std::fs::write(out.join(PLOT_FILE), render_svg(&series))?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        bail!("{} scheme(s) failed: {}", failed.len(), failed.join(", "))
    }
}

/// Plots one or more log CSVs. Each file becomes one series labelled by its
/// scheme, solid when the scheme is a curriculum scheme.
pub fn cmd_plot(csv_paths: &[PathBuf], out_svg: &Path) -> Result<()> {
    if csv_paths.is_empty() {
        bail!("no CSV files given");
    }
    let mut series = Vec::new();
    for path in csv_paths {
        let rows = csv::read_file(path)?;
        let label = series_label(path, rows.first().map(|r| r.mode.as_str()));
        let solid = label
            .parse::<TrainingScheme>()
            .map(|s| s.is_curriculum())
            .unwrap_or(false);
        series.push(Series { label, solid, rows });
    }
    std::fs::write(out_svg, render_svg(&series)).with_context(|| format!("writing {}", out_svg.display()))
}

fn series_label(path: &Path, mode: Option<&str>) -> String {
    if let Some(scheme) = mode.and_then(|m| m.split(':').next()).filter(|s| !s.is_empty()) {
        return scheme.to_string();
    }
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaMode {
    Closed,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerChoice {
    OnPolicy,
    Naive,
    Curl,
}

impl SamplerChoice {
    fn name(self) -> &'static str {
        match self {
            SamplerChoice::OnPolicy => "on_policy",
            SamplerChoice::Naive => "naive_random",
            SamplerChoice::Curl => "curl",
        }
    }
}

#[derive(Debug, Clone)]
pub struct KappaArgs {
    pub checkpoint: PathBuf,
    pub env: Option<PathBuf>,
    pub mode: KappaMode,
    pub sampler: SamplerChoice,
    /// Threshold of the curriculum sampler, as a fraction of n.
    pub q: f64,
    pub ridge: f64,
    /// Trajectories per step index for Monte Carlo estimates.
    pub batches: usize,
    pub seed: u64,
}

fn sp_threshold_fraction(dp: &SpDpSolution, n: usize) -> Result<f64> {
    let k = dp
        .threshold
        .ok_or_else(|| anyhow!("the optimal policy is not a threshold policy"))?;
    Ok(k as f64 / n as f64)
}

/// Computes a [`KappaReport`] for a checkpoint.
pub fn analyze_kappa(args: &KappaArgs) -> Result<KappaReport> {
    let ck = CheckpointFile::load(&args.checkpoint)?;
    let env_cfg = match &args.env {
        Some(p) => load_env(p)?,
        None => ck.env.clone(),
    };
    env_cfg.validate()?;
    let env = env_cfg.build()?;
    let theta = ck.policy()?;

    match (&env, args.mode) {
        (AnyEnv::Sp(sp), mode) => {
            let dp = sp_optimal_policy_dp(sp.config());
            let p = sp_threshold_fraction(&dp, sp.n());
            let closed = match (args.sampler, &p) {
                (SamplerChoice::OnPolicy, _) | (_, Err(_)) => None,
                (s, Ok(p)) => {
                    let (k_curl, k_naive) = kappa_closed_form_sp(&sp.config().p_series, *p, args.q)?;
                    Some(if s == SamplerChoice::Curl { k_curl } else { k_naive })
                }
            };
            let mut report = match closed {
                Some(k) => KappaReport::closed_form(k, ck.theta.clone(), args.sampler.name()),
                None => KappaReport {
                    kappa_lower: None,
                    kappa_upper: None,
                    kappa_empirical: None,
                    at_theta: ck.theta.clone(),
                    sampler: args.sampler.name().into(),
                    reference_relative: false,
                },
            };
            match mode {
                KappaMode::Closed => {
                    if closed.is_none() {
                        p?;
                        bail!("closed form needs a naive or curl sampler");
                    }
                }
                KappaMode::Empirical => {
                    let model = sp.collapsed_tabular()?;
                    let reference = dp.policy();
                    let sampler = sampler_for(args, &env)?;
                    report.kappa_empirical = Some(kappa_empirical(&model, &reference, &sampler, &theta, args.ridge)?);
                }
            }
            Ok(report)
        }
        (AnyEnv::Okd(_), KappaMode::Closed) => bail!("closed-form kappa exists only for the Secretary Problem"),
        (AnyEnv::Okd(_), KappaMode::Empirical) => {
            if args.sampler == SamplerChoice::Curl {
                bail!("the curl sampler is only defined for the Secretary Problem");
            }
            let reference = reference_policy(&env_cfg, &env, 20_000, args.seed)?;
            let sampler = sampler_for(args, &env)?;
            let k = kappa_empirical_mc(
                &env,
                reference.as_ref(),
                &sampler,
                &theta,
                args.batches,
                args.seed,
                args.ridge,
            )?;
            Ok(KappaReport {
                kappa_lower: None,
                kappa_upper: None,
                kappa_empirical: Some(k),
                at_theta: ck.theta.clone(),
                sampler: args.sampler.name().into(),
                reference_relative: true,
            })
        }
    }
}

fn sampler_for(args: &KappaArgs, env: &AnyEnv) -> Result<Sampler> {
    Ok(match args.sampler {
        SamplerChoice::OnPolicy => Sampler::OnPolicy,
        SamplerChoice::Naive => Sampler::NaiveRandom,
        SamplerChoice::Curl => match env {
            AnyEnv::Sp(_) => Sampler::Fixed(Arc::new(ThresholdPolicy::new(args.q))),
            AnyEnv::Okd(_) => bail!("the curl sampler is only defined for the Secretary Problem"),
        },
    })
}

fn load_env(path: &Path) -> Result<EnvConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // Accept a bare environment block or a full experiment config.
    let block = v.get("env").filter(|e| e.is_object()).cloned().unwrap_or(v);
    serde_json::from_value(block).with_context(|| format!("{} is not an environment config", path.display()))
}

/// Input to `oracle`: an environment block, an experiment config, or an
/// explicit SP series.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OracleInput {
    Series { p_series: Vec<f64> },
    Env(serde::de::IgnoredAny),
}

fn describe_sp_policy(dp: &SpDpSolution) -> String {
    let n = dp.accept_at.len();
    match dp.threshold {
        Some(k) if k + 1 == n => format!("accept at {n}"),
        Some(0) => "accept the first candidate".into(),
        Some(k) => format!("accept the first candidate after {k}"),
        None => {
            let idx: Vec<String> = (1..=n)
                .filter(|&i| dp.accept_at[i - 1])
                .map(|i| i.to_string())
                .collect();
            format!("accept candidates at {{{}}}", idx.join(","))
        }
    }
}

/// Exact optimum and closed-form condition numbers of an SP instance.
pub fn oracle_report(input_path: &Path, q: Option<f64>) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(input_path).with_context(|| format!("reading {}", input_path.display()))?;
    let input: OracleInput =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", input_path.display()))?;
    let config = match input {
        OracleInput::Series { p_series } => SpConfig::from_series(p_series)?,
        OracleInput::Env(_) => {
            let env_cfg = load_env(input_path)?;
            env_cfg.validate()?;
            match env_cfg.build()? {
                AnyEnv::Sp(sp) => sp.config().clone(),
                AnyEnv::Okd(_) => bail!(
                    "OKD instances with continuous item distributions cannot be enumerated; the oracle covers the Secretary Problem"
                ),
            }
        }
    };
    let n = config.n;
    let dp = sp_optimal_policy_dp(&config);
    let mut out = json!({
        "n": n,
        "optimal_value": dp.value,
        "policy": describe_sp_policy(&dp),
        "threshold": dp.threshold,
        "formula_threshold": dp.formula_threshold,
    });
    // Cross-check against exact evaluation of the DP policy on the model.
    let model = SpEnv::new(config.clone()).collapsed_tabular()?;
    out["policy_value_exact"] = json!(model.value(&dp.policy(), 0.0)?);
    if let Ok(p) = sp_threshold_fraction(&dp, n) {
        let (k_curl, k_naive) = kappa_closed_form_sp(&config.p_series, p, q.unwrap_or(0.0))?;
        out["kappa"] = json!({
            "p": p,
            "k_naive": finite_or_string(k_naive),
            "k_curl": q.map(|_| finite_or_string(k_curl)),
            "q": q,
        });
    }
    Ok(out)
}

fn finite_or_string(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}
