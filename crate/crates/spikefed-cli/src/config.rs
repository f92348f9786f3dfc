//! Experiment configuration: TOML files with per-model defaults, overridden
//! by CLI flags (flags win).

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use spikefed::attacks::{AttackKind, AttackSpec, Perturbation, DEFAULT_TAU};
use spikefed::data::InputEncoding;
use spikefed::fl::OptimizerHyper;
use spikefed::nn::{LifParams, MlpTopology, ModelKind, ModelSpec};
use std::path::{Path, PathBuf};

/// Environment variable naming the root directory for relative IDX dataset
/// paths.
pub const DATA_ROOT_ENV: &str = "SPIKEFED_DATA_ROOT";

/// A fully resolved experiment. Serializes back to the same schema it is
/// parsed from, so the echoed `config.toml` of a run can be re-run as-is.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rounds: u64,
    pub clients: usize,
    pub batch_size: usize,
    pub eval_every: u64,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub attack: AttackConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compression: Option<CompressionConfigFile>,
    pub dataset: DatasetConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKindConfig,
    /// Hidden layer sizes; input and output come from the dataset.
    pub hidden: Vec<usize>,
    pub beta: f32,
    pub timesteps: usize,
    pub u_thr: f32,
    pub surrogate_slope: f32,
    pub encoding: EncodingConfig,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ModelKindConfig {
    Snn,
    Ann,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum EncodingConfig {
    Direct,
    Poisson,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKindConfig,
    pub malicious_fraction: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum AttackKindConfig {
    None,
    Noise,
    Alie,
    MinMax,
    Ipm,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationConfig {
    UnitNegativeMean,
    NegativeSign,
    NegativeStd,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CompressionConfigFile {
    pub kappa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetConfig {
    Synthetic {
        classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        spread: f32,
        data_seed: u64,
    },
    Idx {
        /// Directory holding the four MNIST-format files; resolved against
        /// [`DATA_ROOT_ENV`] when relative.
        dir: PathBuf,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            classes: 10,
            dim: 64,
            train_per_class: 100,
            test_per_class: 50,
            spread: 0.1,
            data_seed: 7,
        }
    }
}

// ---------------------------------------------------------------------------
// Raw (partial) file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub rounds: Option<u64>,
    pub clients: Option<usize>,
    pub batch_size: Option<usize>,
    pub eval_every: Option<u64>,
    #[serde(default)]
    pub model: RawModel,
    #[serde(default)]
    pub optimizer: RawOptimizer,
    #[serde(default)]
    pub attack: RawAttack,
    pub compression: Option<CompressionConfigFile>,
    pub dataset: Option<DatasetConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub kind: Option<ModelKindConfig>,
    pub hidden: Option<Vec<usize>>,
    pub beta: Option<f32>,
    pub timesteps: Option<usize>,
    pub u_thr: Option<f32>,
    pub surrogate_slope: Option<f32>,
    pub encoding: Option<EncodingConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOptimizer {
    pub lr: Option<f32>,
    pub momentum: Option<f32>,
    pub weight_decay: Option<f32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAttack {
    pub kind: Option<AttackKindConfig>,
    pub malicious_fraction: Option<f32>,
    pub sigma: Option<f32>,
    pub epsilon: Option<f32>,
    pub perturbation: Option<PerturbationConfig>,
    pub tau: Option<f64>,
}

/// CLI-level overrides; every set field beats the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model: Option<ModelKindConfig>,
    pub attack: Option<AttackKindConfig>,
    pub kappa: Option<f64>,
    pub malicious_fraction: Option<f32>,
    pub rounds: Option<u64>,
    pub clients: Option<usize>,
    pub sigma: Option<f32>,
    pub epsilon: Option<f32>,
}

impl RawConfig {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let raw: RawConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(raw)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = Some(v);
        }
        if let Some(v) = o.model {
            self.model.kind = Some(v);
        }
        if let Some(v) = o.attack {
            self.attack.kind = Some(v);
        }
        if let Some(v) = o.kappa {
            self.compression = Some(CompressionConfigFile { kappa: v });
        }
        if let Some(v) = o.malicious_fraction {
            self.attack.malicious_fraction = Some(v);
        }
        if let Some(v) = o.rounds {
            self.rounds = Some(v);
        }
        if let Some(v) = o.clients {
            self.clients = Some(v);
        }
        if let Some(v) = o.sigma {
            self.attack.sigma = Some(v);
        }
        if let Some(v) = o.epsilon {
            self.attack.epsilon = Some(v);
        }
    }

    /// Fill the gaps with defaults and validate. Optimizer defaults depend
    /// on the model kind: SNN uses lr 0.1 / momentum 0.95 / decay 1e-4, ANN
    /// uses lr 1e-4 / momentum 0.9 / decay 5e-4.
    pub fn resolve(self) -> anyhow::Result<ExperimentConfig> {
        let kind = self.model.kind.unwrap_or(ModelKindConfig::Snn);
        let (lr, momentum, decay) = match kind {
            ModelKindConfig::Snn => (0.1, 0.95, 1e-4),
            ModelKindConfig::Ann => (1e-4, 0.9, 5e-4),
        };
        let cfg = ExperimentConfig {
            seed: self.seed.unwrap_or(42),
            rounds: self.rounds.unwrap_or(2000),
            clients: self.clients.unwrap_or(20),
            batch_size: self.batch_size.unwrap_or(32),
            eval_every: self.eval_every.unwrap_or(50),
            model: ModelConfig {
                kind,
                hidden: self.model.hidden.unwrap_or_else(|| vec![32]),
                beta: self.model.beta.unwrap_or(0.99),
                timesteps: self.model.timesteps.unwrap_or(25),
                u_thr: self.model.u_thr.unwrap_or(1.0),
                surrogate_slope: self.model.surrogate_slope.unwrap_or(25.0),
                encoding: self.model.encoding.unwrap_or(EncodingConfig::Direct),
            },
            optimizer: OptimizerConfig {
                lr: self.optimizer.lr.unwrap_or(lr),
                momentum: self.optimizer.momentum.unwrap_or(momentum),
                weight_decay: self.optimizer.weight_decay.unwrap_or(decay),
            },
            attack: AttackConfig {
                kind: self.attack.kind.unwrap_or(AttackKindConfig::None),
                malicious_fraction: self.attack.malicious_fraction.unwrap_or(0.0),
                sigma: self.attack.sigma,
                epsilon: self.attack.epsilon,
                perturbation: self.attack.perturbation,
                tau: self.attack.tau,
            },
            compression: self.compression,
            dataset: self.dataset.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn resolved_default() -> Self {
        RawConfig::default().resolve().expect("defaults are valid")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.clients == 0 {
            bail!("clients must be positive");
        }
        if self.batch_size == 0 {
            bail!("batch_size must be positive");
        }
        if self.eval_every == 0 {
            bail!("eval_every must be positive");
        }
        self.attack_spec()?;
        self.model_spec(8, 2)?; // shape check with placeholder dims
        if let Some(c) = &self.compression {
            spikefed::compress::CompressionConfig::new(c.kappa)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        if let DatasetConfig::Synthetic {
            classes,
            dim,
            train_per_class,
            test_per_class,
            ..
        } = &self.dataset
        {
            if *classes == 0 || *dim == 0 || *train_per_class == 0 || *test_per_class == 0 {
                bail!("synthetic dataset sizes must be positive");
            }
            if classes > dim {
                bail!("synthetic dataset needs classes <= dim for separable blobs");
            }
        }
        Ok(())
    }

    /// Build the model for a dataset with `input_dim` features and
    /// `classes` classes.
    pub fn model_spec(&self, input_dim: usize, classes: usize) -> anyhow::Result<ModelSpec> {
        let mut sizes = Vec::with_capacity(self.model.hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(&self.model.hidden);
        sizes.push(classes);
        let kind = match self.model.kind {
            ModelKindConfig::Snn => ModelKind::Spiking,
            ModelKindConfig::Ann => ModelKind::Dense,
        };
        let spec = ModelSpec {
            topology: MlpTopology::new(sizes, kind).map_err(|e| anyhow::anyhow!("{e}"))?,
            lif: LifParams {
                beta: self.model.beta,
                u_thr: self.model.u_thr,
                timesteps: self.model.timesteps,
                surrogate_slope: self.model.surrogate_slope,
            },
            encoding: match self.model.encoding {
                EncodingConfig::Direct => InputEncoding::Direct,
                EncodingConfig::Poisson => InputEncoding::Poisson,
            },
        };
        spec.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(spec)
    }

    pub fn optimizer_hyper(&self) -> OptimizerHyper {
        OptimizerHyper {
            lr: self.optimizer.lr,
            momentum: self.optimizer.momentum,
            weight_decay: self.optimizer.weight_decay,
        }
    }

    pub fn attack_spec(&self) -> anyhow::Result<AttackSpec> {
        let a = &self.attack;
        let kind = match a.kind {
            AttackKindConfig::None => AttackKind::None,
            AttackKindConfig::Noise => AttackKind::Noise {
                sigma: a
                    .sigma
                    .ok_or_else(|| anyhow::anyhow!("noise attack needs attack.sigma"))?,
            },
            AttackKindConfig::Alie => AttackKind::Alie,
            AttackKindConfig::MinMax => AttackKind::MinMax {
                perturbation: match a.perturbation.unwrap_or(PerturbationConfig::UnitNegativeMean)
                {
                    PerturbationConfig::UnitNegativeMean => Perturbation::UnitNegativeMean,
                    PerturbationConfig::NegativeSign => Perturbation::NegativeSign,
                    PerturbationConfig::NegativeStd => Perturbation::NegativeStd,
                },
                tau: a.tau.unwrap_or(DEFAULT_TAU),
            },
            AttackKindConfig::Ipm => AttackKind::Ipm {
                epsilon: a
                    .epsilon
                    .ok_or_else(|| anyhow::anyhow!("ipm attack needs attack.epsilon"))?,
            },
        };
        let spec = AttackSpec {
            kind,
            malicious_fraction: a.malicious_fraction,
        };
        spec.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(spec)
    }

    pub fn compression_config(&self) -> Option<spikefed::compress::CompressionConfig> {
        self.compression
            .map(|c| spikefed::compress::CompressionConfig { kappa: c.kappa })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Human-readable attack intensity for summaries: sigma for noise, epsilon
/// for ipm, the malicious fraction otherwise.
pub fn attack_intensity(cfg: &ExperimentConfig) -> f64 {
    match cfg.attack.kind {
        AttackKindConfig::Noise => cfg.attack.sigma.unwrap_or(0.0) as f64,
        AttackKindConfig::Ipm => cfg.attack.epsilon.unwrap_or(0.0) as f64,
        AttackKindConfig::None => 0.0,
        _ => cfg.attack.malicious_fraction as f64,
    }
}

pub fn attack_name(kind: AttackKindConfig) -> &'static str {
    match kind {
        AttackKindConfig::None => "none",
        AttackKindConfig::Noise => "noise",
        AttackKindConfig::Alie => "alie",
        AttackKindConfig::MinMax => "minmax",
        AttackKindConfig::Ipm => "ipm",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_hyperparameter_table() {
        let snn = RawConfig::default().resolve().unwrap();
        assert_eq!(snn.clients, 20);
        assert_eq!(snn.rounds, 2000);
        assert_eq!(snn.batch_size, 32);
        assert_eq!(snn.model.beta, 0.99);
        assert_eq!(snn.model.timesteps, 25);
        assert_eq!(snn.optimizer.lr, 0.1);
        assert_eq!(snn.optimizer.momentum, 0.95);
        assert_eq!(snn.optimizer.weight_decay, 1e-4);

        let mut raw = RawConfig::default();
        raw.model.kind = Some(ModelKindConfig::Ann);
        let ann = raw.resolve().unwrap();
        assert_eq!(ann.optimizer.lr, 1e-4);
        assert_eq!(ann.optimizer.momentum, 0.9);
        assert_eq!(ann.optimizer.weight_decay, 5e-4);
    }

    #[test]
    fn flags_beat_the_file() {
        let mut raw: RawConfig = toml::from_str(
            r#"
            seed = 1
            rounds = 10
            [attack]
            kind = "noise"
            sigma = 0.01
            malicious_fraction = 0.25
            "#,
        )
        .unwrap();
        raw.apply(&Overrides {
            seed: Some(9),
            sigma: Some(0.05),
            kappa: Some(0.1),
            ..Default::default()
        });
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.rounds, 10);
        assert_eq!(cfg.attack.sigma, Some(0.05));
        assert_eq!(cfg.compression.unwrap().kappa, 0.1);
    }

    #[test]
    fn echo_roundtrips_through_toml() {
        let mut raw = RawConfig::default();
        raw.attack.kind = Some(AttackKindConfig::Ipm);
        raw.attack.epsilon = Some(0.5);
        raw.attack.malicious_fraction = Some(0.25);
        raw.compression = Some(CompressionConfigFile { kappa: 0.2 });
        let cfg = raw.resolve().unwrap();
        let echoed: RawConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(echoed.resolve().unwrap(), cfg);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad: anyhow::Result<ExperimentConfig> = toml::from_str::<RawConfig>(
            r#"
            [attack]
            kind = "noise"
            malicious_fraction = 0.25
            "#,
        )
        .map_err(anyhow::Error::from)
        .and_then(RawConfig::resolve);
        assert!(bad.is_err(), "noise without sigma must fail");

        let bad_frac: RawConfig = toml::from_str(
            r#"
            [attack]
            kind = "alie"
            malicious_fraction = 0.6
            "#,
        )
        .unwrap();
        assert!(bad_frac.resolve().is_err());

        assert!(toml::from_str::<RawConfig>("unknown_field = 3").is_err());
    }
}
