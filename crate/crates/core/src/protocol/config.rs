use serde::{Deserialize, Serialize};

use super::stream::{IncrementSchedule, DEFAULT_SHUFFLE_SEED};
use crate::encoders::EncoderConfig;
use crate::error::{Error, Result};
use crate::losses::objectives::PretrainWeights;
use crate::losses::ContrastiveConfig;
use crate::prototype::SelectionPolicy;
use crate::rrm::{MaskSpec, PairPointSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainScope {
    /// Objects of the first task's classes only.
    #[default]
    FirstTask,
    /// Every training object, labels unused.
    AllUnlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay to zero over the stage's epochs.
    Cosine,
}

impl LrSchedule {
    pub fn at(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => base * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs.max(1) as f64).cos()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegScope {
    /// Every batch sample is pulled towards its class prototype.
    #[default]
    AllClasses,
    /// Only samples of the current task's classes.
    NewClasses,
}

/// When class prototypes are recomputed during a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrototypeRefresh {
    /// At the start of every epoch, so prototypes follow the adapter.
    #[default]
    EpochStart,
    /// Once at the start of the task, then held fixed for all its epochs.
    TaskStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub contrastive: ContrastiveConfig,
    pub weights: PretrainWeights,
    pub scope: PretrainScope,
    pub n_masks: usize,
    pub mask: MaskSpec,
    pub points_per_cloud: usize,
    pub point_source: PairPointSource,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            lr_schedule: LrSchedule::Constant,
            batch_size: 16,
            epochs: 50,
            contrastive: ContrastiveConfig::default(),
            weights: PretrainWeights::default(),
            scope: PretrainScope::FirstTask,
            n_masks: 20,
            mask: MaskSpec::default(),
            points_per_cloud: 1024,
            point_source: PairPointSource::MaskedResample,
        }
    }
}

impl PretrainConfig {
    /// One unmasked render per object instead of masked variants.
    pub fn without_masking(&self) -> Self {
        Self {
            n_masks: 1,
            mask: MaskSpec {
                mask_ratio: 0.0,
                ..self.mask
            },
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CilConfig {
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the prototype term; zero removes it.
    pub reg_weight: f64,
    pub reg_scope: RegScope,
    pub prototype_refresh: PrototypeRefresh,
    pub memory_budget: usize,
    pub selection: SelectionPolicy,
}

impl Default for CilConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            lr_schedule: LrSchedule::Constant,
            batch_size: 16,
            epochs: 20,
            reg_weight: 1.0,
            reg_scope: RegScope::AllClasses,
            prototype_refresh: PrototypeRefresh::EpochStart,
            memory_budget: 800,
            selection: SelectionPolicy::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub shuffle_seed: u64,
    pub schedule: IncrementSchedule,
    pub encoder: EncoderConfig,
    pub pretrain: PretrainConfig,
    pub cil: CilConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            shuffle_seed: DEFAULT_SHUFFLE_SEED,
            schedule: IncrementSchedule::Uniform(2),
            encoder: EncoderConfig::default(),
            pretrain: PretrainConfig::default(),
            cil: CilConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.pretrain;
        let c = &self.cil;
        for (name, lr) in [("pretrain.lr", p.lr), ("cil.lr", c.lr)] {
            if !(lr >= 0.0) || !lr.is_finite() {
                return Err(Error::BadConfig(format!("{name} must be a non-negative number, got {lr}")));
            }
        }
        if p.batch_size < 2 {
            return Err(Error::BadConfig("pretrain.batch_size must be at least 2".into()));
        }
        if c.batch_size < 1 {
            return Err(Error::BadConfig("cil.batch_size must be at least 1".into()));
        }
        if !(p.contrastive.tau > 0.0) {
            return Err(Error::BadConfig("temperature must be positive".into()));
        }
        if p.n_masks == 0 || p.points_per_cloud == 0 {
            return Err(Error::BadConfig("pretraining needs at least one mask and one point".into()));
        }
        if c.memory_budget == 0 {
            return Err(Error::BudgetZero);
        }
        if !(c.reg_weight >= 0.0) {
            return Err(Error::BadConfig("cil.reg_weight must be non-negative".into()));
        }
        p.mask.validate()?;
        self.encoder.pose.validate()?;
        Ok(())
    }
}
