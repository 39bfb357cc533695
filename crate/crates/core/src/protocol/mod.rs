//! The two training stages and the incremental evaluation loop.
//!
//! Stage one pretrains both backbones contrastively on unlabeled
//! image/point pairs. Stage two freezes them and learns classes task by
//! task from images only; every evaluation runs on point clouds.

mod ablation;
mod config;
mod incremental;
mod preset;
mod pretrain;
mod stream;

pub use ablation::{ablations, tau_sweep, AblationRuns, ComparisonRow, ComparisonTable};
pub use preset::{Experiment, Preset};
pub use config::{CilConfig, LrSchedule, PretrainConfig, PretrainScope, PrototypeRefresh, RegScope, TrainConfig};
pub use incremental::{
    drive, drive_from, evaluate_step, task_data, test_set, CrossModalLearner, IncrementalLearner, TaskData, TaskLog, TrainExample,
};
pub use pretrain::{evaluate_pretrain, pretrain, EpochLoss, PretrainReport};
pub use stream::{build_stream, IncrementSchedule, TaskStream, DEFAULT_SHUFFLE_SEED};

use crate::encoders::Model;
use crate::error::Result;
use crate::metrics::{AccuracyMatrix, StepRow, Summary};
use crate::rrm::{PairOptions, PretrainPair};
use crate::synth::Benchmark;

pub fn stream_for(bench: &Benchmark, cfg: &TrainConfig) -> Result<TaskStream> {
    build_stream(bench.n_classes(), &cfg.schedule, cfg.shuffle_seed)
}

/// Dataset classes whose objects feed pretraining.
pub fn pretrain_classes(stream: &TaskStream, scope: PretrainScope) -> Vec<usize> {
    match scope {
        PretrainScope::FirstTask => stream.task_classes(0).to_vec(),
        PretrainScope::AllUnlabeled => {
            let mut all = stream.class_order.clone();
            all.sort_unstable();
            all
        }
    }
}

pub fn pretrain_pairs(bench: &Benchmark, stream: &TaskStream, cfg: &PretrainConfig) -> Result<Vec<PretrainPair>> {
    let opts = PairOptions {
        points_per_cloud: cfg.points_per_cloud,
        point_source: cfg.point_source,
    };
    bench.pretrain_pairs(&pretrain_classes(stream, cfg.scope), cfg.n_masks, &cfg.mask, &opts)
}

/// Fresh model pretrained on the configured pair set.
pub fn pretrain_model(
    bench: &Benchmark,
    stream: &TaskStream,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&Model, &EpochLoss) -> Result<()>,
) -> Result<(Model, PretrainReport)> {
    cfg.validate()?;
    let mut model = Model::new(&cfg.encoder, bench.config.rig.image_size, cfg.seed)?;
    let pairs = pretrain_pairs(bench, stream, &cfg.pretrain)?;
    let report = pretrain(&mut model, &pairs, &cfg.pretrain, cfg.seed, on_epoch)?;
    Ok((model, report))
}

#[derive(Debug, Clone)]
pub struct StreamRun {
    pub stream: TaskStream,
    pub pretrain: Option<PretrainReport>,
    pub matrix: AccuracyMatrix,
    pub summary: Summary,
    pub learner: CrossModalLearner,
}

/// Incremental stage on top of an already pretrained model.
pub fn run_stream_from(
    bench: &Benchmark,
    cfg: &TrainConfig,
    pretrained: Model,
    after_task: impl FnMut(&CrossModalLearner, &StepRow) -> Result<()>,
) -> Result<StreamRun> {
    cfg.validate()?;
    let stream = stream_for(bench, cfg)?;
    let mut learner = CrossModalLearner::new(pretrained, cfg.cil.clone(), cfg.seed)?;
    let matrix = drive(&mut learner, bench, &stream, after_task)?;
    let summary = matrix.summarize()?;
    Ok(StreamRun {
        stream,
        pretrain: None,
        matrix,
        summary,
        learner,
    })
}

/// Pretraining followed by the full incremental stream.
pub fn run_stream(bench: &Benchmark, cfg: &TrainConfig) -> Result<StreamRun> {
    let stream = stream_for(bench, cfg)?;
    let (model, report) = pretrain_model(bench, &stream, cfg, |_, _| Ok(()))?;
    let mut run = run_stream_from(bench, cfg, model, |_, _| Ok(()))?;
    run.pretrain = Some(report);
    Ok(run)
}
