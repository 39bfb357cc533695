use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::PretrainConfig;
use crate::encoders::Model;
use crate::error::{Error, Result};
use crate::losses::objectives::{pretrain_objective, BackboneGrads, PretrainItem, PretrainLoss};
use crate::nn::Parameters;
use crate::rrm::PretrainPair;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub lr: f64,
    pub batches: usize,
    /// Mean over the epoch's batches, measured before each update.
    pub loss: PretrainLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub epochs: Vec<EpochLoss>,
    pub backbone_checksum: String,
}

fn pose_seeds(base: u64, epoch: usize, index: usize) -> (u64, u64) {
    let s = seed::derive(base, &[0x905e, epoch as u64, index as u64]);
    (seed::derive(s, &[1]), seed::derive(s, &[2]))
}

fn items<'a>(pairs: &'a [PretrainPair], idx: &[usize], seeds: impl Fn(usize) -> (u64, u64)) -> Vec<PretrainItem<'a>> {
    idx.iter()
        .map(|&i| PretrainItem {
            cloud: &pairs[i].cloud,
            image: &pairs[i].image,
            pose_seeds: seeds(i),
        })
        .collect()
}

/// SGD on the pretraining objective. `on_epoch` runs after every epoch
/// (checkpointing, logging) and may abort the run by returning an error.
pub fn pretrain(
    model: &mut Model,
    pairs: &[PretrainPair],
    cfg: &PretrainConfig,
    run_seed: u64,
    mut on_epoch: impl FnMut(&Model, &EpochLoss) -> Result<()>,
) -> Result<PretrainReport> {
    if model.point.frozen || model.image.frozen {
        return Err(Error::FrozenViolation("pretraining a frozen backbone".into()));
    }
    if pairs.len() < 2 {
        return Err(Error::BadConfig(format!("pretraining needs at least 2 pairs, got {}", pairs.len())));
    }
    let mut grads = BackboneGrads::zeros(model);
    let mut report = PretrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        backbone_checksum: String::new(),
    };
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_schedule.at(cfg.lr, epoch, cfg.epochs);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(run_seed, &[0x5eed, epoch as u64])));
        let mut sum = PretrainLoss::default();
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size).filter(|c| c.len() >= 2) {
            let batch = items(pairs, chunk, |i| pose_seeds(run_seed, epoch, i));
            grads.clear();
            let loss = pretrain_objective(model, &batch, &cfg.contrastive, cfg.weights, Some(&mut grads))
                .map_err(|e| match e {
                    Error::NonFiniteLoss { detail, .. } => Error::NonFiniteLoss {
                        stage: "pretrain".into(),
                        detail: format!("epoch {epoch} batch {batches}: {detail}"),
                    },
                    other => other,
                })?;
            if !(grads.point.all_finite() && grads.image.all_finite() && grads.twin.as_ref().is_none_or(|t| t.all_finite())) {
                return Err(Error::NonFiniteLoss {
                    stage: "pretrain".into(),
                    detail: format!("non-finite gradient at epoch {epoch} batch {batches}"),
                });
            }
            if lr != 0.0 {
                model.point.axpy(-lr, &grads.point);
                model.image.axpy(-lr, &grads.image);
                if let (Some(t), Some(g)) = (&mut model.point_twin, &grads.twin) {
                    t.axpy(-lr, g);
                }
            }
            sum.total += loss.total;
            sum.imc += loss.imc;
            sum.ipc += loss.ipc;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        let row = EpochLoss {
            epoch,
            lr,
            batches,
            loss: PretrainLoss {
                total: sum.total / n,
                imc: sum.imc / n,
                ipc: sum.ipc / n,
            },
        };
        on_epoch(model, &row)?;
        report.epochs.push(row);
    }
    report.backbone_checksum = model.backbone_checksum();
    Ok(report)
}

/// Mean objective over fixed batches of `pairs`, without updates. Pose
/// draws depend only on `eval_seed` and the pair index.
pub fn evaluate_pretrain(model: &Model, pairs: &[PretrainPair], cfg: &PretrainConfig, eval_seed: u64) -> Result<PretrainLoss> {
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let mut sum = PretrainLoss::default();
    let mut n = 0usize;
    for chunk in idx.chunks(cfg.batch_size).filter(|c| c.len() >= 2) {
        let batch = items(pairs, chunk, |i| pose_seeds(eval_seed, usize::MAX, i));
        let l = pretrain_objective(model, &batch, &cfg.contrastive, cfg.weights, None)?;
        sum.total += l.total;
        sum.imc += l.imc;
        sum.ipc += l.ipc;
        n += 1;
    }
    if n == 0 {
        return Err(Error::BadConfig("evaluation needs at least 2 pairs".into()));
    }
    let n = n as f64;
    Ok(PretrainLoss {
        total: sum.total / n,
        imc: sum.imc / n,
        ipc: sum.ipc / n,
    })
}
