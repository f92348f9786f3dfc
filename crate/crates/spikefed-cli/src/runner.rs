//! Experiment execution: dataset loading, the round loop with its
//! evaluation cadence, divergence handling, and run-directory output.

use crate::config::{attack_intensity, attack_name, DatasetConfig, ExperimentConfig, DATA_ROOT_ENV};
use crate::idx;
use crate::metrics::{final_accuracy, CsvWriter, MetricsRow, RunSummary};
use crate::report::write_heatmap;
use anyhow::Context;
use rayon::prelude::*;
use spikefed::data::{synth_blobs, Dataset};
use spikefed::fl::{client_step_for_round, evaluate, Simulation, StepCtx, StepRunner, TrainConfig};
use spikefed::Error as CoreError;
use std::path::{Path, PathBuf};

/// Schedules the local steps of one round on the rayon pool. Results come
/// back in client order, so parallel and sequential execution agree
/// bit-for-bit.
pub struct RayonRunner;

impl StepRunner for RayonRunner {
    fn run_steps(
        &self,
        clients: &mut [spikefed::fl::ClientRecord],
        ctx: &StepCtx<'_>,
    ) -> Vec<Result<Option<spikefed::fl::LocalOutcome>, CoreError>> {
        clients
            .par_iter_mut()
            .map(|c| client_step_for_round(c, ctx))
            .collect()
    }
}

/// Load (train, test) for a config. Synthetic data is generated jointly and
/// split per class so both halves share the same blob centers; IDX data is
/// read from the configured directory, resolved against the
/// `SPIKEFED_DATA_ROOT` environment variable when relative.
pub fn load_datasets(cfg: &ExperimentConfig) -> anyhow::Result<(Dataset, Dataset)> {
    match &cfg.dataset {
        DatasetConfig::Synthetic {
            classes,
            dim,
            train_per_class,
            test_per_class,
            spread,
            data_seed,
        } => Ok(split_blobs(
            *classes,
            *dim,
            *train_per_class,
            *test_per_class,
            *spread,
            *data_seed,
        )),
        DatasetConfig::Idx { dir } => {
            let dir = resolve_data_dir(dir);
            let (ti, tl) = idx::standard_pair(&dir, true)?;
            let (vi, vl) = idx::standard_pair(&dir, false)?;
            let train = idx::load_idx(&ti, &tl)?;
            let test = idx::load_idx(&vi, &vl)?;
            Ok((train, test))
        }
    }
}

pub fn resolve_data_dir(dir: &Path) -> PathBuf {
    if dir.is_relative() {
        if let Ok(root) = std::env::var(DATA_ROOT_ENV) {
            return PathBuf::from(root).join(dir);
        }
    }
    dir.to_path_buf()
}

/// One seeded generation, split per class block into train and test so the
/// two halves are disjoint draws around identical centers.
pub fn split_blobs(
    classes: usize,
    dim: usize,
    train_per_class: usize,
    test_per_class: usize,
    spread: f32,
    seed: u64,
) -> (Dataset, Dataset) {
    let per_class = train_per_class + test_per_class;
    let all = synth_blobs(classes, dim, per_class, spread, seed);
    let mut train_samples = Vec::with_capacity(classes * train_per_class * dim);
    let mut train_labels = Vec::with_capacity(classes * train_per_class);
    let mut test_samples = Vec::with_capacity(classes * test_per_class * dim);
    let mut test_labels = Vec::with_capacity(classes * test_per_class);
    for c in 0..classes {
        for i in 0..per_class {
            let idx = c * per_class + i;
            if i < train_per_class {
                train_samples.extend_from_slice(all.sample(idx));
                train_labels.push(all.label(idx) as u32);
            } else {
                test_samples.extend_from_slice(all.sample(idx));
                test_labels.push(all.label(idx) as u32);
            }
        }
    }
    (
        Dataset::new(train_samples, dim, train_labels, classes).expect("split is consistent"),
        Dataset::new(test_samples, dim, test_labels, classes).expect("split is consistent"),
    )
}

/// Everything a finished (or diverged) run hands back to callers.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    /// `(round, accuracy)` pairs; round 0 is the initial model.
    pub evaluations: Vec<(u64, f64)>,
    pub rows: Vec<MetricsRow>,
}

/// Execute a config. When `out_dir` is set the run writes `config.toml`,
/// `metrics.csv` (incrementally), `summary.toml`, `model.ckpt`, and
/// `retention.csv` (when compression is on). `progress` echoes evaluation
/// rounds to stderr.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    runner: &dyn StepRunner,
    out_dir: Option<&Path>,
    progress: bool,
) -> anyhow::Result<RunOutput> {
    cfg.validate()?;
    let (train, test) = load_datasets(cfg)?;
    let model = cfg.model_spec(train.dim(), train.num_classes())?;
    let mut sim = Simulation::new(
        model.clone(),
        TrainConfig {
            optimizer: cfg.optimizer_hyper(),
            batch_size: cfg.batch_size,
        },
        cfg.attack_spec()?,
        cfg.compression_config(),
        cfg.clients,
        &train,
        cfg.seed,
    )
    .map_err(|e| anyhow::anyhow!("building simulation: {e}"))?;

    let mut csv = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating output dir {}", dir.display()))?;
            std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
            Some(CsvWriter::create(&dir.join("metrics.csv"))?)
        }
        None => None,
    };

    let mut evaluations: Vec<(u64, f64)> = Vec::new();
    let initial = evaluate(sim.params(), &model, &test, cfg.seed)
        .map_err(|e| anyhow::anyhow!("evaluating: {e}"))?;
    evaluations.push((0, initial));

    let mut rows: Vec<MetricsRow> = Vec::with_capacity(cfg.rounds as usize);
    let mut total_uplink = 0u64;
    let mut total_downlink = 0u64;
    let mut retained = None;
    let mut diverged = false;

    for r in 1..=cfg.rounds {
        let mut report = sim
            .run_round_with(&train, runner)
            .map_err(|e| anyhow::anyhow!("round {r}: {e}"))?;
        total_uplink += report.uplink_bytes;
        total_downlink += report.downlink_bytes;
        retained = report.retained_per_update.or(retained);

        if !report.train_loss.is_finite() {
            diverged = true;
            eprintln!(
                "run diverged at round {r} (non-finite training loss); reporting last valid evaluation"
            );
        } else if r % cfg.eval_every == 0 || r == cfg.rounds {
            let acc = evaluate(sim.params(), &model, &test, cfg.seed)
                .map_err(|e| anyhow::anyhow!("evaluating: {e}"))?;
            evaluations.push((r, acc));
            report.test_accuracy = Some(acc);
            if progress {
                eprintln!(
                    "round {r}/{}: test_acc={acc:.4} train_loss={:.6}",
                    cfg.rounds, report.train_loss
                );
            }
        }

        if let Some(csv) = &mut csv {
            csv.write(&report)?;
        }
        rows.push(MetricsRow {
            round: report.round,
            train_loss: report.train_loss,
            test_acc: report.test_accuracy,
            uplink_bytes: report.uplink_bytes,
            downlink_bytes: report.downlink_bytes,
            max_update_norm: report.update_norms.iter().cloned().fold(0.0, f64::max),
            mean_update_norm: report.update_norms.iter().sum::<f64>()
                / report.update_norms.len().max(1) as f64,
        });
        if diverged {
            break;
        }
    }

    let summary = RunSummary {
        model: match cfg.model.kind {
            crate::config::ModelKindConfig::Snn => "snn".into(),
            crate::config::ModelKindConfig::Ann => "ann".into(),
        },
        attack: attack_name(cfg.attack.kind).into(),
        intensity: attack_intensity(cfg),
        malicious_fraction: cfg.attack.malicious_fraction as f64,
        kappa: cfg.compression.map(|c| c.kappa),
        seed: cfg.seed,
        clients: cfg.clients,
        rounds_requested: cfg.rounds,
        rounds_completed: rows.len() as u64,
        param_dim: sim.params().dim(),
        retained_per_update: retained,
        final_accuracy: final_accuracy(&evaluations),
        last_accuracy: evaluations.last().map(|&(_, a)| a).unwrap_or(0.0),
        total_uplink_bytes: total_uplink,
        total_downlink_bytes: total_downlink,
        diverged,
    };

    if let Some(dir) = out_dir {
        summary.save(&dir.join("summary.toml"))?;
        std::fs::write(dir.join("model.ckpt"), sim.params().to_bytes())?;
        if let Some(counter) = &sim.retention {
            write_heatmap(
                counter.counts(),
                counter.updates_recorded(),
                &sim.params().layout,
                &dir.join("retention.csv"),
            )?;
        }
    }

    Ok(RunOutput {
        summary,
        evaluations,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;
    use spikefed::fl::SequentialRunner;

    fn smoke_raw(model: &str) -> RawConfig {
        // Desk-scale spiking nets need the wider slope-5 surrogate to come
        // alive; the spec-table defaults stay at slope 25.
        toml::from_str(&format!(
            r#"
            seed = 5
            rounds = 12
            clients = 5
            batch_size = 8
            eval_every = 6
            [model]
            kind = "{model}"
            hidden = [16]
            timesteps = 16
            surrogate_slope = 5.0
            [optimizer]
            lr = 0.1
            momentum = 0.9
            weight_decay = 0.0
            [dataset]
            kind = "synthetic"
            classes = 2
            dim = 6
            train_per_class = 20
            test_per_class = 10
            spread = 0.05
            data_seed = 3
            "#
        ))
        .unwrap()
    }

    #[test]
    fn split_blobs_shares_centers_and_is_disjoint() {
        let (train, test) = split_blobs(3, 4, 10, 5, 0.0, 9);
        assert_eq!(train.len(), 30);
        assert_eq!(test.len(), 15);
        // With zero spread every sample equals its center: train and test
        // agree per class.
        assert_eq!(train.sample(0), test.sample(0));
        assert_eq!(train.sample(10), test.sample(5));
    }

    #[test]
    fn zero_rounds_is_initial_evaluation_only() {
        let mut raw = smoke_raw("ann");
        raw.rounds = Some(0);
        let cfg = raw.resolve().unwrap();
        let out = run_experiment(&cfg, &SequentialRunner, None, false).unwrap();
        assert_eq!(out.rows.len(), 0);
        assert_eq!(out.evaluations.len(), 1);
        assert_eq!(out.evaluations[0].0, 0);
        assert_eq!(out.summary.rounds_completed, 0);
        assert_eq!(out.summary.final_accuracy, out.evaluations[0].1);
    }

    #[test]
    fn run_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut raw = smoke_raw("ann");
        raw.compression = Some(crate::config::CompressionConfigFile { kappa: 0.5 });
        let cfg = raw.resolve().unwrap();
        let out = run_experiment(&cfg, &SequentialRunner, Some(dir.path()), false).unwrap();
        for f in ["config.toml", "metrics.csv", "summary.toml", "model.ckpt", "retention.csv"] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        let rows = crate::metrics::parse_metrics(&dir.path().join("metrics.csv")).unwrap();
        assert_eq!(rows.len(), 12);
        assert!(rows[5].test_acc.is_some(), "eval cadence row");
        assert!(rows[0].test_acc.is_none());
        let summary = RunSummary::load(&dir.path().join("summary.toml")).unwrap();
        assert_eq!(summary, out.summary);
        // Checkpoint parses back to the final parameters.
        let bytes = std::fs::read(dir.path().join("model.ckpt")).unwrap();
        let params = spikefed::nn::ParameterVector::from_bytes(&bytes).unwrap();
        assert_eq!(params.dim(), summary.param_dim);
    }

    #[test]
    fn identical_configs_produce_identical_csv_bytes() {
        let cfg = smoke_raw("snn").resolve().unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&cfg, &SequentialRunner, Some(a.path()), false).unwrap();
        run_experiment(&cfg, &RayonRunner, Some(b.path()), false).unwrap();
        let ba = std::fs::read(a.path().join("metrics.csv")).unwrap();
        let bb = std::fs::read(b.path().join("metrics.csv")).unwrap();
        assert_eq!(ba, bb, "sequential and rayon runs must match byte-for-byte");
    }

    #[test]
    fn smoke_runs_reach_high_clean_accuracy() {
        // Separable blobs, 5 clients, 200 rounds: both model kinds learn.
        // Bias-free ReLU nets on nonnegative inputs die at high rates, so
        // the dense smoke run steps gently.
        for model in ["ann", "snn"] {
            let mut raw = smoke_raw(model);
            raw.rounds = Some(200);
            raw.optimizer.lr = Some(if model == "snn" { 0.1 } else { 0.05 });
            let cfg = raw.resolve().unwrap();
            let out = run_experiment(&cfg, &RayonRunner, None, false).unwrap();
            assert!(
                out.summary.last_accuracy >= 0.95,
                "{model} reached only {}",
                out.summary.last_accuracy
            );
            assert!(!out.summary.diverged);
        }
    }
}
