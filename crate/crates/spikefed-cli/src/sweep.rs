//! Sweeps: a base config plus a list of deltas, executed (optionally in
//! parallel) with automatic clean baselines so every attacked row carries
//! its accuracy loss.

use crate::config::{
    attack_intensity, attack_name, AttackConfig, AttackKindConfig, CompressionConfigFile,
    ExperimentConfig, ModelKindConfig, PerturbationConfig, RawConfig,
};
use crate::runner::{run_experiment, RayonRunner};
use anyhow::Context;
use rayon::prelude::*;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// One override set on top of the base config.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDelta {
    pub label: Option<String>,
    pub model: Option<ModelKindConfig>,
    pub attack: Option<AttackKindConfig>,
    pub sigma: Option<f32>,
    pub epsilon: Option<f32>,
    pub malicious_fraction: Option<f32>,
    pub perturbation: Option<PerturbationConfig>,
    pub tau: Option<f64>,
    pub kappa: Option<f64>,
    /// Drop compression even if the base has it.
    #[serde(default)]
    pub dense: bool,
    pub seed: Option<u64>,
    pub rounds: Option<u64>,
}

/// Sweep file: `[base]` is a full experiment config, `[[runs]]` the deltas.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    #[serde(default)]
    pub base: RawConfig,
    #[serde(default)]
    pub runs: Vec<SweepDelta>,
}

impl SweepFile {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading sweep file {}", path.display()))?;
        Ok(toml::from_str(&text)
            .with_context(|| format!("parsing sweep file {}", path.display()))?)
    }
}

pub fn apply_delta(base: &RawConfig, delta: &SweepDelta) -> anyhow::Result<ExperimentConfig> {
    let mut raw = base.clone();
    if let Some(m) = delta.model {
        raw.model.kind = Some(m);
        // A model switch invalidates inherited optimizer settings; fall back
        // to the kind's defaults unless the delta is based on them already.
        if base.model.kind != Some(m) {
            raw.optimizer = Default::default();
        }
    }
    if let Some(a) = delta.attack {
        raw.attack.kind = Some(a);
    }
    if let Some(v) = delta.sigma {
        raw.attack.sigma = Some(v);
    }
    if let Some(v) = delta.epsilon {
        raw.attack.epsilon = Some(v);
    }
    if let Some(v) = delta.malicious_fraction {
        raw.attack.malicious_fraction = Some(v);
    }
    if let Some(v) = delta.perturbation {
        raw.attack.perturbation = Some(v);
    }
    if let Some(v) = delta.tau {
        raw.attack.tau = Some(v);
    }
    if delta.dense {
        raw.compression = None;
    } else if let Some(k) = delta.kappa {
        raw.compression = Some(CompressionConfigFile { kappa: k });
    }
    if let Some(s) = delta.seed {
        raw.seed = Some(s);
    }
    if let Some(r) = delta.rounds {
        raw.rounds = Some(r);
    }
    raw.resolve()
}

/// One line of the sweep summary.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub label: String,
    pub model: String,
    pub attack: String,
    pub intensity: f64,
    pub malicious_fraction: f64,
    pub kappa: Option<f64>,
    pub seed: u64,
    pub rounds: u64,
    pub clean_acc: Option<f64>,
    pub attacked_acc: Option<f64>,
    pub accuracy_loss: Option<f64>,
    pub total_uplink_bytes: Option<u64>,
    pub diverged: bool,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: &str = "label,model,attack,intensity,malicious_fraction,kappa,seed,rounds,clean_acc,attacked_acc,accuracy_loss,total_uplink_bytes,diverged,error";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let optf = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.label,
            r.model,
            r.attack,
            r.intensity,
            r.malicious_fraction,
            optf(r.kappa),
            r.seed,
            r.rounds,
            optf(r.clean_acc),
            optf(r.attacked_acc),
            optf(r.accuracy_loss),
            r.total_uplink_bytes.map(|b| b.to_string()).unwrap_or_default(),
            r.diverged,
            r.error.clone().unwrap_or_default(),
        )
        .expect("string write");
    }
    out
}

fn clean_config(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut clean = cfg.clone();
    clean.attack = AttackConfig {
        kind: AttackKindConfig::None,
        malicious_fraction: 0.0,
        sigma: None,
        epsilon: None,
        perturbation: None,
        tau: None,
    };
    clean
}

fn default_label(idx: usize, cfg: &ExperimentConfig) -> String {
    let kappa = cfg
        .compression
        .map(|c| format!("k{}", c.kappa))
        .unwrap_or_else(|| "dense".into());
    format!(
        "{idx:02}_{}_{}_{}_{}_s{}",
        match cfg.model.kind {
            ModelKindConfig::Snn => "snn",
            ModelKindConfig::Ann => "ann",
        },
        attack_name(cfg.attack.kind),
        attack_intensity(cfg),
        kappa,
        cfg.seed
    )
}

/// Execute every delta (plus deduplicated clean baselines), in parallel when
/// asked. Individual failures are recorded in their row; the sweep carries
/// on past them.
pub fn run_sweep(
    base: &RawConfig,
    deltas: &[SweepDelta],
    out_dir: Option<&Path>,
    parallel: bool,
) -> anyhow::Result<Vec<SweepRow>> {
    // Resolve everything first so config errors surface as rows, not runs.
    let mut jobs: Vec<(String, Result<ExperimentConfig, String>)> = Vec::new();
    for (i, delta) in deltas.iter().enumerate() {
        match apply_delta(base, delta) {
            Ok(cfg) => {
                let label = delta.label.clone().unwrap_or_else(|| default_label(i, &cfg));
                jobs.push((label, Ok(cfg)));
            }
            Err(e) => {
                let label = delta
                    .label
                    .clone()
                    .unwrap_or_else(|| format!("{i:02}_invalid"));
                jobs.push((label, Err(e.to_string())));
            }
        }
    }

    // Baselines keyed by their canonical serialized form.
    let mut baselines: BTreeMap<String, ExperimentConfig> = BTreeMap::new();
    for (_, job) in &jobs {
        if let Ok(cfg) = job {
            if cfg.attack.kind != AttackKindConfig::None {
                let clean = clean_config(cfg);
                baselines.entry(clean.to_toml()).or_insert(clean);
            }
        }
    }
    let baseline_jobs: Vec<(String, ExperimentConfig)> = baselines
        .into_values()
        .enumerate()
        .map(|(i, cfg)| (format!("baseline_{i:02}_{}", default_label(i, &cfg)), cfg))
        .collect();

    let run_one = |label: &str, cfg: &ExperimentConfig| -> Result<crate::runner::RunOutput, String> {
        let dir = out_dir.map(|d| d.join(label));
        run_experiment(cfg, &RayonRunner, dir.as_deref(), false).map_err(|e| e.to_string())
    };

    let baseline_results: Vec<(String, Result<crate::runner::RunOutput, String>)> = if parallel {
        baseline_jobs
            .par_iter()
            .map(|(label, cfg)| (cfg.to_toml(), run_one(label, cfg)))
            .collect()
    } else {
        baseline_jobs
            .iter()
            .map(|(label, cfg)| (cfg.to_toml(), run_one(label, cfg)))
            .collect()
    };
    let baseline_acc: BTreeMap<String, Result<f64, String>> = baseline_results
        .into_iter()
        .map(|(key, res)| (key, res.map(|o| o.summary.final_accuracy)))
        .collect();

    let attacked_results: Vec<Result<crate::runner::RunOutput, String>> = if parallel {
        jobs.par_iter()
            .map(|(label, job)| match job {
                Ok(cfg) => run_one(label, cfg),
                Err(e) => Err(e.clone()),
            })
            .collect()
    } else {
        jobs.iter()
            .map(|(label, job)| match job {
                Ok(cfg) => run_one(label, cfg),
                Err(e) => Err(e.clone()),
            })
            .collect()
    };

    let mut rows = Vec::with_capacity(jobs.len() + baseline_acc.len());
    for ((label, job), result) in jobs.iter().zip(attacked_results) {
        match (job, result) {
            (Ok(cfg), Ok(out)) => {
                let clean = if cfg.attack.kind == AttackKindConfig::None {
                    Some(out.summary.final_accuracy)
                } else {
                    baseline_acc
                        .get(&clean_config(cfg).to_toml())
                        .and_then(|r| r.as_ref().ok())
                        .copied()
                };
                let attacked = out.summary.final_accuracy;
                rows.push(SweepRow {
                    label: label.clone(),
                    model: out.summary.model.clone(),
                    attack: out.summary.attack.clone(),
                    intensity: out.summary.intensity,
                    malicious_fraction: out.summary.malicious_fraction,
                    kappa: out.summary.kappa,
                    seed: out.summary.seed,
                    rounds: out.summary.rounds_requested,
                    clean_acc: clean,
                    attacked_acc: Some(attacked),
                    accuracy_loss: clean.map(|c| spikefed::fl::accuracy_loss(c, attacked)),
                    total_uplink_bytes: Some(out.summary.total_uplink_bytes),
                    diverged: out.summary.diverged,
                    error: None,
                });
            }
            (job, result) => {
                let err = result.err().or_else(|| job.as_ref().err().cloned());
                rows.push(SweepRow {
                    label: label.clone(),
                    model: String::new(),
                    attack: String::new(),
                    intensity: 0.0,
                    malicious_fraction: 0.0,
                    kappa: None,
                    seed: 0,
                    rounds: 0,
                    clean_acc: None,
                    attacked_acc: None,
                    accuracy_loss: None,
                    total_uplink_bytes: None,
                    diverged: false,
                    error: err,
                });
            }
        }
    }

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep_summary.csv"), sweep_csv(&rows))?;
    }
    Ok(rows)
}

/// The intensity grids used for attack comparisons, crossed with both model
/// kinds and `seeds` repetitions.
pub fn grid_deltas(grid: &str, seeds: u64, base_seed: u64) -> anyhow::Result<Vec<SweepDelta>> {
    let mut deltas = Vec::new();
    let models = [ModelKindConfig::Snn, ModelKindConfig::Ann];
    let mut push = |model: ModelKindConfig, f: &dyn Fn(&mut SweepDelta), rep: u64| {
        let mut d = SweepDelta {
            model: Some(model),
            seed: Some(base_seed + rep),
            ..Default::default()
        };
        f(&mut d);
        deltas.push(d);
    };
    for rep in 0..seeds.max(1) {
        for model in models {
            match grid {
                "noise" => {
                    for sigma in [0.005f32, 0.01, 0.05, 0.1] {
                        push(
                            model,
                            &|d: &mut SweepDelta| {
                                d.attack = Some(AttackKindConfig::Noise);
                                d.sigma = Some(sigma);
                                d.malicious_fraction = Some(0.25);
                            },
                            rep,
                        );
                    }
                }
                "ipm" => {
                    for epsilon in [0.1f32, 0.2, 0.5, 1.0] {
                        push(
                            model,
                            &|d: &mut SweepDelta| {
                                d.attack = Some(AttackKindConfig::Ipm);
                                d.epsilon = Some(epsilon);
                                d.malicious_fraction = Some(0.25);
                            },
                            rep,
                        );
                    }
                }
                "alie" | "minmax" => {
                    let kind = if grid == "alie" {
                        AttackKindConfig::Alie
                    } else {
                        AttackKindConfig::MinMax
                    };
                    for frac in [0.25f32, 0.30, 0.35, 0.40] {
                        push(
                            model,
                            &|d: &mut SweepDelta| {
                                d.attack = Some(kind);
                                d.malicious_fraction = Some(frac);
                            },
                            rep,
                        );
                    }
                }
                "kappa" => {
                    for kappa in [0.06f64, 0.1, 0.2] {
                        push(
                            model,
                            &|d: &mut SweepDelta| {
                                d.kappa = Some(kappa);
                            },
                            rep,
                        );
                    }
                }
                other => anyhow::bail!(
                    "unknown grid '{other}' (expected noise|ipm|alie|minmax|kappa)"
                ),
            }
        }
    }
    Ok(deltas)
}
