use serde::{Deserialize, Serialize};

use super::config::{PretrainScope, TrainConfig};
use super::stream::IncrementSchedule;
use crate::error::{Error, Result};
use crate::rrm::CameraRig;
use crate::synth::BenchmarkConfig;

/// Benchmark plus training settings: everything a run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Experiment {
    pub bench: BenchmarkConfig,
    pub train: TrainConfig,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        if self.bench.families.is_empty() || self.bench.train_per_family == 0 || self.bench.test_per_family == 0 {
            return Err(Error::BadConfig("benchmark needs families and samples in both splits".into()));
        }
        self.train.validate()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self
    }

    /// Same run with pretraining on single unmasked renders.
    pub fn without_masking(mut self) -> Self {
        self.train.pretrain = self.train.pretrain.without_masking();
        self
    }

    /// Same run with the prototype term switched off.
    pub fn without_regularization(mut self) -> Self {
        self.train.cil.reg_weight = 0.0;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Reference desk-scale run: 8 families, Inc.2, 20 test clouds per class.
    Synth8,
    /// Library defaults on the 8 families (1024 points, 64 px views).
    Synth8Full,
    /// A few seconds end to end. Accuracy is meaningless.
    Smoke,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Synth8, Preset::Synth8Full, Preset::Smoke];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Synth8 => "synth-8",
            Preset::Synth8Full => "synth-8-full",
            Preset::Smoke => "smoke",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::BadConfig(format!("unknown preset {name:?}")))
    }

    pub fn experiment(self) -> Experiment {
        let mut e = Experiment::default();
        e.train.schedule = IncrementSchedule::Uniform(2);
        match self {
            Preset::Synth8 => {
                e.bench.test_per_family = 20;
                e.bench.points_per_cloud = 256;
                e.bench.rig = CameraRig::ring(10, 30.0, 32);
                let p = &mut e.train.pretrain;
                p.scope = PretrainScope::AllUnlabeled;
                p.epochs = 3;
                p.points_per_cloud = 256;
                let c = &mut e.train.cil;
                c.lr = 0.1;
                c.epochs = 50;
                c.memory_budget = 80;
            }
            Preset::Synth8Full => {
                e.train.pretrain.scope = PretrainScope::AllUnlabeled;
            }
            Preset::Smoke => {
                e.bench.train_per_family = 3;
                e.bench.test_per_family = 2;
                e.bench.points_per_cloud = 48;
                e.bench.rig = CameraRig::ring(3, 30.0, 12);
                e.train.encoder.embed_dim = 16;
                e.train.encoder.point_hidden = (8, 16);
                e.train.encoder.image_hidden = 16;
                e.train.encoder.adapter_hidden = 16;
                let p = &mut e.train.pretrain;
                p.scope = PretrainScope::AllUnlabeled;
                p.epochs = 2;
                p.n_masks = 2;
                p.points_per_cloud = 48;
                p.batch_size = 8;
                let c = &mut e.train.cil;
                c.lr = 0.1;
                c.epochs = 10;
                c.memory_budget = 16;
            }
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in Preset::ALL {
            let e = p.experiment();
            e.validate().unwrap();
            assert_eq!(Preset::from_name(p.name()).unwrap(), p);
            let text = toml::to_string(&e).unwrap();
            assert_eq!(toml::from_str::<Experiment>(&text).unwrap(), e);
        }
        assert!(Preset::from_name("synth-9").is_err());
    }

    #[test]
    fn ablation_helpers_touch_one_knob() {
        let e = Preset::Synth8.experiment();
        let a = e.clone().without_regularization();
        assert_eq!(a.train.cil.reg_weight, 0.0);
        assert_eq!(a.train.pretrain, e.train.pretrain);
        let b = e.clone().without_masking();
        assert_eq!(b.train.pretrain.n_masks, 1);
        assert_eq!(b.train.pretrain.mask.mask_ratio, 0.0);
        assert_eq!(b.train.cil, e.train.cil);
    }
}
