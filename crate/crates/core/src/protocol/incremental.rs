use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{CilConfig, PrototypeRefresh, RegScope};
use super::stream::TaskStream;
use crate::encoders::{encode_points, Model};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::losses::objectives::{cil_objective, CilItem, CilLoss};
use crate::metrics::{step_accuracy, AccuracyMatrix, StepRow};
use crate::nn::Parameters;
use crate::prototype::{
    mean_embedding, nearest_prototype, refresh_all_prototypes, ClassPrototype, Exemplar,
    ExemplarMemory, PrototypeTable,
};
use crate::rrm::MultiViewImage;
use crate::seed;
use crate::synth::Benchmark;

/// A labelled training image set. Labels are class positions (head
/// columns), not dataset class IDs.
#[derive(Debug, Clone, Copy)]
pub struct TrainExample<'a> {
    pub id: &'a str,
    pub label: usize,
    pub image: &'a MultiViewImage,
}

#[derive(Debug, Clone)]
pub struct TaskData<'a> {
    pub task: usize,
    /// Positions of the classes introduced by this task.
    pub new_classes: std::ops::Range<usize>,
    pub train: Vec<TrainExample<'a>>,
}

impl TaskData<'_> {
    pub fn classes_seen(&self) -> usize {
        self.new_classes.end
    }
}

/// Anything that learns from image tasks and predicts on point clouds.
pub trait IncrementalLearner {
    fn learn_task(&mut self, data: &TaskData<'_>) -> Result<()>;

    /// Predicted class position for each cloud.
    fn predict(&self, clouds: &[&PointCloud]) -> Result<Vec<usize>>;

    /// Optional second classifier reported alongside the main one.
    fn diagnostic(&self, _clouds: &[&PointCloud]) -> Result<Option<Vec<usize>>> {
        Ok(None)
    }
}

/// Builds the training view of task `t` from the benchmark.
pub fn task_data<'a>(bench: &'a Benchmark, stream: &TaskStream, task: usize) -> Result<TaskData<'a>> {
    let start = stream.seen_classes(task).len() - stream.task_classes(task).len();
    let classes = stream.task_classes(task);
    let train = bench
        .train_of_classes(classes)
        .into_iter()
        .map(|s| {
            let label = stream.position(s.label).ok_or(Error::LabelOutOfRange {
                label: s.label,
                n_classes: stream.n_classes(),
            })?;
            Ok(TrainExample {
                id: &s.id,
                label,
                image: &s.image,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskData {
        task,
        new_classes: start..start + classes.len(),
        train,
    })
}

/// Test clouds of tasks `0..=step` with their positions and tasks.
pub fn test_set<'a>(bench: &'a Benchmark, stream: &TaskStream, step: usize) -> Result<(Vec<&'a PointCloud>, Vec<usize>, Vec<usize>)> {
    let mut clouds = Vec::new();
    let mut labels = Vec::new();
    let mut tasks = Vec::new();
    for s in bench.test_of_classes(stream.seen_classes(step)) {
        let pos = stream.position(s.label).expect("seen class has a position");
        clouds.push(&s.cloud);
        labels.push(pos);
        tasks.push(stream.task_of_class(s.label).expect("seen class has a task"));
    }
    Ok((clouds, labels, tasks))
}

/// Evaluates `learner` on the union test set after `step`.
pub fn evaluate_step<L: IncrementalLearner + ?Sized>(learner: &L, bench: &Benchmark, stream: &TaskStream, step: usize) -> Result<StepRow> {
    let (clouds, labels, tasks) = test_set(bench, stream, step)?;
    let preds = learner.predict(&clouds)?;
    let mut row = StepRow::from_predictions(step, stream.seen_classes(step).len(), &preds, &labels, &tasks)?;
    if let Some(diag) = learner.diagnostic(&clouds)? {
        row.nearest_prototype = Some(step_accuracy(&diag, &labels)?);
    }
    Ok(row)
}

/// Feeds every task of the stream to `learner`, evaluating after each.
pub fn drive<L: IncrementalLearner + ?Sized>(
    learner: &mut L,
    bench: &Benchmark,
    stream: &TaskStream,
    after_task: impl FnMut(&L, &StepRow) -> Result<()>,
) -> Result<AccuracyMatrix> {
    drive_from(learner, bench, stream, AccuracyMatrix::default(), after_task)
}

/// Continues a stream whose first `matrix.rows.len()` tasks are done.
pub fn drive_from<L: IncrementalLearner + ?Sized>(
    learner: &mut L,
    bench: &Benchmark,
    stream: &TaskStream,
    mut matrix: AccuracyMatrix,
    mut after_task: impl FnMut(&L, &StepRow) -> Result<()>,
) -> Result<AccuracyMatrix> {
    if matrix.rows.len() > stream.n_tasks() {
        return Err(Error::Protocol(format!(
            "{} steps recorded for a stream of {} tasks",
            matrix.rows.len(),
            stream.n_tasks()
        )));
    }
    for t in matrix.rows.len()..stream.n_tasks() {
        learner.learn_task(&task_data(bench, stream, t)?)?;
        let row = evaluate_step(learner, bench, stream, t)?;
        after_task(learner, &row)?;
        matrix.push(row);
    }
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLog {
    pub task: usize,
    pub epochs: Vec<CilLoss>,
    pub head_columns: usize,
    pub memory_size: usize,
    pub seconds: f64,
}

/// Frozen backbones, one shared adapter and a growing head, trained with
/// cross-entropy plus prototype regularization and exemplar replay.
#[derive(Debug, Clone)]
pub struct CrossModalLearner {
    pub model: Model,
    pub memory: ExemplarMemory,
    pub prototypes: PrototypeTable,
    pub cfg: CilConfig,
    pub run_seed: u64,
    pub backbone_checksum: String,
    pub logs: Vec<TaskLog>,
    image_features: HashMap<String, Vec<f64>>,
}

impl CrossModalLearner {
    /// Freezes the backbones of `model` and records their checksum.
    pub fn new(mut model: Model, cfg: CilConfig, run_seed: u64) -> Result<Self> {
        model.freeze_backbones();
        let memory = ExemplarMemory::new(cfg.memory_budget, Self::memory_seed(run_seed))?;
        Ok(Self {
            backbone_checksum: model.backbone_checksum(),
            model,
            memory,
            prototypes: PrototypeTable::new(),
            cfg,
            run_seed,
            logs: Vec::new(),
            image_features: HashMap::new(),
        })
    }

    /// Rebuilds a learner after `logs.len()` completed tasks. `model` must
    /// already carry frozen backbones; prototypes are recomputed from memory.
    pub fn resume(model: Model, cfg: CilConfig, run_seed: u64, memory: ExemplarMemory, logs: Vec<TaskLog>) -> Result<Self> {
        if !model.backbones_frozen() {
            return Err(Error::Protocol("resumed model has trainable backbones".into()));
        }
        if memory.budget != cfg.memory_budget {
            return Err(Error::Protocol(format!(
                "memory budget {} differs from configured {}",
                memory.budget, cfg.memory_budget
            )));
        }
        let mut learner = Self {
            backbone_checksum: model.backbone_checksum(),
            model,
            memory,
            prototypes: PrototypeTable::new(),
            cfg,
            run_seed,
            logs,
            image_features: HashMap::new(),
        };
        if let Some(t) = learner.logs.len().checked_sub(1) {
            let table = refresh_all_prototypes(&learner.memory, &learner.cached_encoder(), t)?;
            learner.prototypes = table;
        }
        Ok(learner)
    }

    /// Seed of the exemplar selection for a run seed.
    pub fn memory_seed(run_seed: u64) -> u64 {
        seed::derive(run_seed, &[0x3e3])
    }

    pub fn completed_tasks(&self) -> usize {
        self.logs.len()
    }

    fn check_frozen(&self, when: &str) -> Result<()> {
        if !self.model.backbones_frozen() || self.model.backbone_checksum() != self.backbone_checksum {
            return Err(Error::FrozenViolation(format!("backbone changed {when}")));
        }
        Ok(())
    }

    fn image_feature(&mut self, id: &str, image: &MultiViewImage) -> Result<Vec<f64>> {
        if let Some(f) = self.image_features.get(id) {
            return Ok(f.clone());
        }
        let f = self.model.image.forward(image)?.0;
        self.image_features.insert(id.to_string(), f.clone());
        Ok(f)
    }

    fn adapted(&self, feature: &[f64]) -> Vec<f64> {
        self.model.adapter.forward(feature).0
    }

    /// Adapted embedding of a point cloud, without pose augmentation.
    pub fn point_embedding(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        Ok(self.adapted(&encode_points(cloud, &self.model.point, None)?))
    }

    fn cached_encoder(&self) -> impl Fn(&Exemplar) -> Result<Vec<f64>> + '_ {
        |ex: &Exemplar| {
            let f = match self.image_features.get(&ex.sample_id) {
                Some(f) => f.clone(),
                None => self.model.image.forward(&ex.image)?.0,
            };
            Ok(self.adapted(&f))
        }
    }

    /// Old classes from memory, new classes from all of the task's samples.
    fn epoch_prototypes(&self, task: usize, new: &[(usize, Vec<f64>)], new_classes: &std::ops::Range<usize>) -> Result<PrototypeTable> {
        let enc = self.cached_encoder();
        let mut table = refresh_all_prototypes(&self.memory, &enc, task)?;
        for c in new_classes.clone() {
            let v = mean_embedding(new.iter().filter(|(l, _)| *l == c).map(|(_, f)| Ok(self.adapted(f))))?
                .ok_or(Error::NoExemplars(c))?;
            table.insert(c, ClassPrototype {
                class_id: c,
                task_of_last_update: task,
                vector: v,
            });
        }
        Ok(table)
    }

    fn predict_logits(&self, cloud: &PointCloud) -> Result<usize> {
        let logits = crate::encoders::head_logits(&self.point_embedding(cloud)?, &self.model.head)?;
        let mut best = 0;
        for (k, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = k;
            }
        }
        Ok(best)
    }
}

impl IncrementalLearner for CrossModalLearner {
    fn learn_task(&mut self, data: &TaskData<'_>) -> Result<()> {
        let started = Instant::now();
        let t = data.task;
        self.check_frozen(&format!("before task {t}"))?;
        if data.new_classes.start != self.model.head.n_classes {
            return Err(Error::Protocol(format!(
                "task {t} starts at class {} but the head has {} columns",
                data.new_classes.start, self.model.head.n_classes
            )));
        }
        self.model.head.grow(data.new_classes.len());
        let seen = data.classes_seen();

        let mut new: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.train.len());
        let mut pool: Vec<(usize, Vec<f64>)> = Vec::new();
        for ex in &data.train {
            if !data.new_classes.contains(&ex.label) {
                return Err(Error::Protocol(format!("sample {} has label {} outside task {t}", ex.id, ex.label)));
            }
            let f = self.image_feature(ex.id, ex.image)?;
            new.push((ex.label, f.clone()));
            pool.push((ex.label, f));
        }
        let replay: Vec<(String, usize, MultiViewImage)> =
            self.memory.entries().map(|e| (e.sample_id.clone(), e.label, e.image.clone())).collect();
        for (id, label, image) in &replay {
            pool.push((*label, self.image_feature(id, image)?));
        }

        let mut log = TaskLog {
            task: t,
            epochs: Vec::with_capacity(self.cfg.epochs),
            head_columns: 0,
            memory_size: 0,
            seconds: 0.0,
        };
        let mut g_adapter = self.model.adapter.zeros_like();
        let mut g_head = self.model.head.zeros_like();
        let mut table = PrototypeTable::new();
        for epoch in 0..self.cfg.epochs {
            let lr = self.cfg.lr_schedule.at(self.cfg.lr, epoch, self.cfg.epochs);
            if epoch == 0 || self.cfg.prototype_refresh == PrototypeRefresh::EpochStart {
                table = self.epoch_prototypes(t, &new, &data.new_classes)?;
            }
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.shuffle(&mut seed::rng(seed::derive(self.run_seed, &[0xc11, t as u64, epoch as u64])));
            let mut sum = CilLoss::default();
            let mut batches = 0;
            for chunk in order.chunks(self.cfg.batch_size) {
                let items: Vec<CilItem> = chunk
                    .iter()
                    .map(|&i| {
                        let (label, f) = &pool[i];
                        debug_assert!(*label < seen);
                        let regularized = match self.cfg.reg_scope {
                            RegScope::AllClasses => true,
                            RegScope::NewClasses => data.new_classes.contains(label),
                        };
                        CilItem {
                            feature: f,
                            label: *label,
                            prototype: regularized.then(|| table.get(label).map(|p| p.vector.as_slice())).flatten(),
                        }
                    })
                    .collect();
                g_adapter.fill(0.0);
                g_head.fill(0.0);
                let loss = cil_objective(
                    &self.model.adapter,
                    &self.model.head,
                    &items,
                    self.cfg.reg_weight,
                    Some((&mut g_adapter, &mut g_head)),
                )
                .map_err(|e| match e {
                    Error::NonFiniteLoss { detail, .. } => Error::NonFiniteLoss {
                        stage: "cil".into(),
                        detail: format!("task {t} epoch {epoch}: {detail}"),
                    },
                    other => other,
                })?;
                if lr != 0.0 {
                    self.model.adapter.axpy(-lr, &g_adapter);
                    self.model.head.axpy(-lr, &g_head);
                }
                sum.total += loss.total;
                sum.reg += loss.reg;
                sum.ce += loss.ce;
                batches += 1;
            }
            let n = batches.max(1) as f64;
            log.epochs.push(CilLoss {
                total: sum.total / n,
                reg: sum.reg / n,
                ce: sum.ce / n,
            });
            self.check_frozen(&format!("during task {t} epoch {epoch}"))?;
        }

        let exemplars: Vec<Exemplar> = data
            .train
            .iter()
            .map(|ex| Exemplar {
                sample_id: ex.id.to_string(),
                label: ex.label,
                image: ex.image.clone(),
                cloud: None,
            })
            .collect();
        let mut memory = self.memory.clone();
        {
            let enc = self.cached_encoder();
            memory.update(exemplars, self.cfg.selection, Some(&enc))?;
        }
        self.memory = memory;
        let prototypes = {
            let enc = self.cached_encoder();
            refresh_all_prototypes(&self.memory, &enc, t)?
        };
        self.prototypes = prototypes;

        log.head_columns = self.model.head.n_classes;
        log.memory_size = self.memory.len();
        log.seconds = started.elapsed().as_secs_f64();
        self.logs.push(log);
        Ok(())
    }

    fn predict(&self, clouds: &[&PointCloud]) -> Result<Vec<usize>> {
        clouds.iter().map(|c| self.predict_logits(c)).collect()
    }

    fn diagnostic(&self, clouds: &[&PointCloud]) -> Result<Option<Vec<usize>>> {
        if self.prototypes.is_empty() {
            return Ok(None);
        }
        clouds
            .iter()
            .map(|c| nearest_prototype(&self.point_embedding(c)?, &self.prototypes))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}
