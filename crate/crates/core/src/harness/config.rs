use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    gen_synthetic, load_csv, load_idx, split, standardize, LabeledDataset, SplitSpec,
    Standardizer, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::model::LayerSpec;
use crate::objective::{AlphaSchedule, ObjectiveConfig, PhiMaxMode, RegKind, RiskKind};
use crate::selector::{SelectionConfig, SelectionMode};

fn default_drop_factor() -> f64 {
    10.0
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_true() -> bool {
    true
}

/// Everything that determines a training run, apart from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Seeds model init, the epoch shuffles and random selection.
    pub seed: u64,
    pub total_steps: u64,
    pub eval_every: u64,
    pub lr_base: f64,
    #[serde(default)]
    pub lr_drop_steps: Vec<u64>,
    #[serde(default = "default_drop_factor")]
    pub lr_drop_factor: f64,
    /// Heavy-ball momentum; 0 is plain SGD.
    #[serde(default)]
    pub momentum: f64,
    pub alpha: AlphaSchedule,
    /// Validation accuracy used for steps-to-target reporting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
    /// Stop at the first evaluation that reaches `target_accuracy`.
    #[serde(default)]
    pub early_stop: bool,
    pub objective: ObjectiveConfig,
    pub selection: SelectionConfig,
    /// Hidden layers; empty means a linear classifier on the raw inputs.
    #[serde(default)]
    pub hidden: Vec<LayerSpec>,
}

/// Named starting points for experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Cross-entropy, weight decay 5e-4, random selection.
    Baseline,
    /// Cross-entropy, pairwise margin regularizer with α ramped 1e-5 → 1e-3.
    Pmm,
    /// Cross-entropy, minimal-margin selection from ten times the batch.
    Mms,
}

impl TrainConfig {
    /// Preset with the step-drop regime scaled to the run: ÷10 at 50% and 75%.
    pub fn preset(preset: Preset, total_steps: u64, small_batch: usize, seed: u64) -> Self {
        let (reg, alpha, mode) = match preset {
            Preset::Baseline => (
                RegKind::WeightDecay { coef: 5e-4 },
                AlphaSchedule::Constant { value: 1.0 },
                SelectionMode::Random,
            ),
            Preset::Pmm => (
                RegKind::Pmm,
                AlphaSchedule::linear_preset(total_steps),
                SelectionMode::Random,
            ),
            Preset::Mms => (
                RegKind::None,
                AlphaSchedule::Constant { value: 0.0 },
                SelectionMode::Mms,
            ),
        };
        let mut drops = vec![total_steps / 2, total_steps * 3 / 4];
        drops.retain(|&d| d > 0);
        drops.dedup();
        TrainConfig {
            seed,
            total_steps,
            eval_every: (total_steps / 20).max(1),
            lr_base: 0.1,
            lr_drop_steps: drops,
            lr_drop_factor: 10.0,
            momentum: 0.0,
            alpha,
            target_accuracy: None,
            early_stop: false,
            objective: ObjectiveConfig {
                risk: RiskKind::CrossEntropy,
                reg,
                phi_max_mode: PhiMaxMode::StopGradient,
            },
            selection: match mode {
                SelectionMode::Random => SelectionConfig {
                    mode,
                    big_batch: small_batch,
                    small_batch,
                },
                SelectionMode::Mms => SelectionConfig::with_default_ratio(mode, small_batch),
            },
            hidden: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1".into());
        }
        if !(self.lr_base.is_finite() && self.lr_base > 0.0) {
            return bad(format!("lr_base must be positive, got {}", self.lr_base));
        }
        if !(self.lr_drop_factor.is_finite() && self.lr_drop_factor > 1.0) {
            return bad(format!("lr_drop_factor must exceed 1, got {}", self.lr_drop_factor));
        }
        if self.lr_drop_steps.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "lr_drop_steps must be strictly increasing, got {:?}",
                self.lr_drop_steps
            ));
        }
        if self.lr_drop_steps.last().is_some_and(|&s| s > self.total_steps) {
            return bad(format!(
                "lr_drop_steps {:?} run past total_steps {}",
                self.lr_drop_steps, self.total_steps
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if let Some(t) = self.target_accuracy {
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("target_accuracy must be in (0, 1], got {t}"));
            }
        } else if self.early_stop {
            return bad("early_stop needs target_accuracy".into());
        }
        if let Some(l) = self.hidden.iter().find(|l| l.width == 0) {
            return bad(format!("hidden layer width must be positive, got {l:?}"));
        }
        self.alpha.validate()?;
        self.objective.reg.validate()?;
        self.selection.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Short hex digest of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// `lr_base / factor^(number of drop steps ≤ step)`.
pub fn lr_at(cfg: &TrainConfig, step: u64) -> f64 {
    let drops = cfg.lr_drop_steps.iter().filter(|&&d| d <= step).count();
    let mut lr = cfg.lr_base;
    for _ in 0..drops {
        lr /= cfg.lr_drop_factor;
    }
    lr
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        seed: u64,
        shape: crate::data::SyntheticShape,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_header: bool,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

/// Train/validation pair ready for a run, with the input map fit on train.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub input_map: Option<Standardizer>,
}

impl DataConfig {
    /// Loads or generates the full dataset; relative paths resolve against
    /// `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<LabeledDataset> {
        match &self.source {
            DataSource::Synthetic { seed, shape } => gen_synthetic(&SyntheticSpec {
                seed: *seed,
                shape: shape.clone(),
            }),
            DataSource::Csv { path, has_header } => load_csv(base_dir.join(path), *has_header),
            DataSource::Idx { images, labels } => {
                load_idx(base_dir.join(images), base_dir.join(labels))
            }
        }
    }

    pub fn prepare(&self, base_dir: &Path) -> Result<PreparedData> {
        let full = self.load(base_dir)?;
        let (train, val) = split(
            &full,
            SplitSpec {
                train_fraction: self.train_fraction,
                seed: self.split_seed,
            },
        )?;
        if !self.standardize {
            return Ok(PreparedData {
                train,
                val,
                input_map: None,
            });
        }
        let (train, mut rest, stats) = standardize(&train, &[&val])?;
        Ok(PreparedData {
            train,
            val: rest.remove(0),
            input_map: Some(stats),
        })
    }

    /// Same source with a different split seed and, for generated data, a
    /// different generator seed.
    pub fn with_seed(&self, seed: u64) -> DataConfig {
        let mut out = self.clone();
        out.split_seed = seed;
        if let DataSource::Synthetic { seed: s, .. } = &mut out.source {
            *s = seed;
        }
        out
    }
}

/// A config file: where the data comes from and how to train on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
