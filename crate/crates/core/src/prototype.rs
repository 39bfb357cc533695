//! Class prototypes and the fixed-budget exemplar memory.
//!
//! Each class keeps its exemplars in priority order. A smaller quota keeps
//! a prefix, so shrinking is deterministic and matches the selection policy
//! (a seeded shuffle for random selection, greedy order for herding).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoders::{Adapter, ImageBackbone};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::losses::cosine_sim;
use crate::nn::l2_norm;
use crate::rrm::MultiViewImage;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrototype {
    pub class_id: usize,
    pub task_of_last_update: usize,
    pub vector: Vec<f64>,
}

pub type PrototypeTable = BTreeMap<usize, ClassPrototype>;

#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub sample_id: String,
    pub label: usize,
    pub image: MultiViewImage,
    pub cloud: Option<PointCloud>,
}

/// Maps an exemplar to its adapted image embedding.
pub trait ExemplarEncoder {
    fn encode(&self, exemplar: &Exemplar) -> Result<Vec<f64>>;
}

/// Image backbone followed by the current adapter.
#[derive(Debug, Clone, Copy)]
pub struct ImageEncoder<'a> {
    pub backbone: &'a ImageBackbone,
    pub adapter: &'a Adapter,
}

impl ExemplarEncoder for ImageEncoder<'_> {
    fn encode(&self, exemplar: &Exemplar) -> Result<Vec<f64>> {
        let (e, _) = self.backbone.forward(&exemplar.image)?;
        Ok(self.adapter.forward(&e).0)
    }
}

impl<F: Fn(&Exemplar) -> Result<Vec<f64>>> ExemplarEncoder for F {
    fn encode(&self, exemplar: &Exemplar) -> Result<Vec<f64>> {
        self(exemplar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    #[default]
    Random,
    /// Greedy mean matching on the encoder's embeddings.
    Herding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarMemory {
    pub budget: usize,
    pub selection_seed: u64,
    classes: BTreeMap<usize, Vec<Exemplar>>,
}

/// One memory manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub label: usize,
    pub rank: usize,
}

impl ExemplarMemory {
    pub fn new(budget: usize, selection_seed: u64) -> Result<Self> {
        if budget == 0 {
            return Err(Error::BudgetZero);
        }
        Ok(Self {
            budget,
            selection_seed,
            classes: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seen_classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes.keys().copied()
    }

    pub fn class_entries(&self, class_id: usize) -> &[Exemplar] {
        self.classes.get(&class_id).map_or(&[], Vec::as_slice)
    }

    pub fn entries(&self) -> impl Iterator<Item = &Exemplar> {
        self.classes.values().flatten()
    }

    pub fn quota(&self, n_seen: usize) -> usize {
        self.budget / n_seen.max(1)
    }

    /// Adds the classes in `new_data`, then trims every class to
    /// `floor(budget / n_seen)` exemplars.
    pub fn update(
        &mut self,
        new_data: Vec<Exemplar>,
        policy: SelectionPolicy,
        encoder: Option<&dyn ExemplarEncoder>,
    ) -> Result<()> {
        let mut incoming: BTreeMap<usize, Vec<Exemplar>> = BTreeMap::new();
        for ex in new_data {
            incoming.entry(ex.label).or_default().push(ex);
        }
        let n_seen = self.classes.keys().chain(incoming.keys()).collect::<std::collections::BTreeSet<_>>().len();
        let quota = self.quota(n_seen);
        for list in self.classes.values_mut() {
            list.truncate(quota);
        }
        for (label, mut list) in incoming {
            list.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
            let ordered = match policy {
                SelectionPolicy::Random => {
                    let mut rng = seed::rng(seed::derive(self.selection_seed, &[label as u64]));
                    list.shuffle(&mut rng);
                    list.truncate(quota);
                    list
                }
                SelectionPolicy::Herding => {
                    let enc = encoder
                        .ok_or_else(|| Error::BadConfig("herding selection needs an encoder".into()))?;
                    herding_order(list, quota, enc)?
                }
            };
            let slot = self.classes.entry(label).or_default();
            slot.extend(ordered);
            slot.truncate(quota);
        }
        debug_assert!(self.len() <= self.budget);
        Ok(())
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.classes
            .iter()
            .flat_map(|(&label, list)| {
                list.iter().enumerate().map(move |(rank, ex)| ManifestEntry {
                    sample_id: ex.sample_id.clone(),
                    label,
                    rank,
                })
            })
            .collect()
    }

    pub fn write_manifest<W: Write>(&self, mut w: W) -> Result<()> {
        for e in self.manifest() {
            serde_json::to_writer(&mut w, &e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_manifest<R: BufRead>(r: R) -> Result<Vec<ManifestEntry>> {
        let mut out = Vec::new();
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }

    /// Rebuilds a memory from manifest lines, resolving sample IDs with
    /// `lookup`.
    pub fn from_manifest(
        budget: usize,
        selection_seed: u64,
        entries: &[ManifestEntry],
        lookup: impl Fn(&str) -> Option<Exemplar>,
    ) -> Result<Self> {
        let mut mem = Self::new(budget, selection_seed)?;
        let mut sorted = entries.to_vec();
        sorted.sort_by_key(|e| (e.label, e.rank));
        for e in sorted {
            let ex = lookup(&e.sample_id)
                .ok_or_else(|| Error::Checkpoint(format!("unknown exemplar {}", e.sample_id)))?;
            if ex.label != e.label {
                return Err(Error::Checkpoint(format!("label mismatch for {}", e.sample_id)));
            }
            mem.classes.entry(e.label).or_default().push(ex);
        }
        if mem.len() > budget {
            return Err(Error::Checkpoint(format!("manifest holds {} > {budget} exemplars", mem.len())));
        }
        Ok(mem)
    }
}

/// iCaRL-style herding: repeatedly pick the sample that brings the running
/// mean of chosen (unit) embeddings closest to the class mean.
fn herding_order(list: Vec<Exemplar>, quota: usize, enc: &dyn ExemplarEncoder) -> Result<Vec<Exemplar>> {
    let feats = list
        .iter()
        .map(|ex| {
            let v = enc.encode(ex)?;
            let n = l2_norm(&v);
            if n == 0.0 {
                return Err(Error::ZeroVector);
            }
            Ok(v.into_iter().map(|x| x / n).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let d = feats.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for f in &feats {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x / feats.len() as f64;
        }
    }
    let mut chosen = Vec::new();
    let mut sum = vec![0.0; d];
    let mut used = vec![false; list.len()];
    while chosen.len() < quota.min(list.len()) {
        let k = chosen.len() as f64 + 1.0;
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, f) in feats.iter().enumerate() {
            if used[i] {
                continue;
            }
            let dist: f64 = mean
                .iter()
                .zip(&sum)
                .zip(f)
                .map(|((m, s), x)| (m - (s + x) / k).powi(2))
                .sum();
            if dist < best.0 {
                best = (dist, i);
            }
        }
        used[best.1] = true;
        for (s, x) in sum.iter_mut().zip(&feats[best.1]) {
            *s += x;
        }
        chosen.push(best.1);
    }
    let mut slots: Vec<Option<Exemplar>> = list.into_iter().map(Some).collect();
    Ok(chosen.into_iter().filter_map(|i| slots[i].take()).collect())
}

/// Mean adapted embedding of the class's exemplars.
pub fn compute_prototype(
    class_id: usize,
    memory: &ExemplarMemory,
    encoder: &dyn ExemplarEncoder,
    task: usize,
) -> Result<ClassPrototype> {
    let list = memory.class_entries(class_id);
    let vector = mean_embedding(list.iter().map(|ex| encoder.encode(ex)))?.ok_or(Error::NoExemplars(class_id))?;
    if l2_norm(&vector) == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(ClassPrototype {
        class_id,
        task_of_last_update: task,
        vector,
    })
}

/// Mean of a sequence of embeddings, `None` if it is empty.
pub fn mean_embedding(items: impl Iterator<Item = Result<Vec<f64>>>) -> Result<Option<Vec<f64>>> {
    let mut sum: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for v in items {
        let v = v?;
        match &mut sum {
            None => sum = Some(v),
            Some(s) => {
                if s.len() != v.len() {
                    return Err(Error::ShapeMismatch {
                        expected: s.len(),
                        got: v.len(),
                    });
                }
                for (a, b) in s.iter_mut().zip(v) {
                    *a += b;
                }
            }
        }
        n += 1;
    }
    Ok(sum.map(|s| s.into_iter().map(|x| x / n as f64).collect()))
}

/// Recomputes the prototype of every class in memory.
pub fn refresh_all_prototypes(memory: &ExemplarMemory, encoder: &dyn ExemplarEncoder, task: usize) -> Result<PrototypeTable> {
    memory
        .seen_classes()
        .map(|c| Ok((c, compute_prototype(c, memory, encoder, task)?)))
        .collect()
}

/// Class whose prototype has the highest cosine with `embedding`; the
/// lowest class ID wins ties.
pub fn nearest_prototype(embedding: &[f64], table: &PrototypeTable) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (&c, p) in table {
        let s = cosine_sim(embedding, &p.vector)?;
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, c));
        }
    }
    best.map(|(_, c)| c).ok_or(Error::EmptyTable)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str, label: usize, tag: u8) -> Exemplar {
        Exemplar {
            sample_id: id.into(),
            label,
            image: MultiViewImage {
                views: vec![crate::rrm::GrayImage {
                    size: 1,
                    levels: vec![tag],
                }],
                object_id: id.into(),
                mask_id: None,
                label: Some(label),
            },
            cloud: None,
        }
    }

    /// Reads the single pixel as a 2-d embedding.
    fn pixel_encoder(e: &Exemplar) -> Result<Vec<f64>> {
        let l = e.image.views[0].levels[0] as f64;
        Ok(vec![l, 1.0])
    }

    fn task_data(classes: std::ops::Range<usize>, per: usize) -> Vec<Exemplar> {
        classes
            .flat_map(|c| (0..per).map(move |i| ex(&format!("c{c}-{i}"), c, (i % 250) as u8)))
            .collect()
    }

    #[test]
    fn prototype_examples() {
        let enc = |e: &Exemplar| -> Result<Vec<f64>> {
            Ok(if e.image.views[0].levels[0] == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
        };
        let mut mem = ExemplarMemory::new(10, 0).unwrap();
        mem.update(vec![ex("a", 0, 0), ex("b", 0, 1)], SelectionPolicy::Random, None).unwrap();
        let p = compute_prototype(0, &mem, &enc, 1).unwrap();
        assert_eq!(p.vector, vec![0.5, 0.5]);
        assert_eq!(p.task_of_last_update, 1);
        assert!(matches!(compute_prototype(3, &mem, &enc, 1), Err(Error::NoExemplars(3))));

        let mut one = ExemplarMemory::new(10, 0).unwrap();
        one.update(vec![ex("a", 2, 7)], SelectionPolicy::Random, None).unwrap();
        assert_eq!(compute_prototype(2, &one, &pixel_encoder, 0).unwrap().vector, vec![7.0, 1.0]);
        let mut same = ExemplarMemory::new(10, 0).unwrap();
        same.update((0..4).map(|i| ex(&format!("s{i}"), 1, 9)).collect(), SelectionPolicy::Random, None).unwrap();
        assert_eq!(compute_prototype(1, &same, &pixel_encoder, 0).unwrap().vector, vec![9.0, 1.0]);
    }

    #[test]
    fn quotas() {
        let mut mem = ExemplarMemory::new(800, 3).unwrap();
        mem.update(task_data(0..8, 120), SelectionPolicy::Random, None).unwrap();
        assert_eq!(mem.len(), 800);
        assert!(mem.seen_classes().all(|c| mem.class_entries(c).len() == 100));
        mem.update(task_data(8..12, 120), SelectionPolicy::Random, None).unwrap();
        assert_eq!(mem.len(), 792);
        assert!(mem.seen_classes().all(|c| mem.class_entries(c).len() == 66));
        assert!(matches!(ExemplarMemory::new(0, 0), Err(Error::BudgetZero)));
    }

    #[test]
    fn shrinking_keeps_prefix_and_is_seeded() {
        let build = |seed| {
            let mut m = ExemplarMemory::new(20, seed).unwrap();
            m.update(task_data(0..2, 15), SelectionPolicy::Random, None).unwrap();
            m
        };
        let (a, b) = (build(5), build(5));
        assert_eq!(a.manifest(), b.manifest());
        assert_ne!(a.manifest(), build(6).manifest());
        let before: Vec<String> = a.class_entries(0).iter().map(|e| e.sample_id.clone()).collect();
        let mut a2 = a.clone();
        a2.update(task_data(2..4, 15), SelectionPolicy::Random, None).unwrap();
        let after: Vec<String> = a2.class_entries(0).iter().map(|e| e.sample_id.clone()).collect();
        assert_eq!(after, before[..5]);
    }

    #[test]
    fn herding_picks_mean_matching_exemplars() {
        // Class mean of unit embeddings is closest to the middle sample.
        let list = vec![ex("a", 0, 0), ex("b", 0, 100), ex("c", 0, 200)];
        let enc = |e: &Exemplar| -> Result<Vec<f64>> {
            let t = e.image.views[0].levels[0] as f64 / 200.0 * std::f64::consts::FRAC_PI_2;
            Ok(vec![t.cos(), t.sin()])
        };
        let mut mem = ExemplarMemory::new(1, 0).unwrap();
        mem.update(list.clone(), SelectionPolicy::Herding, Some(&enc)).unwrap();
        assert_eq!(mem.class_entries(0)[0].sample_id, "b");
        let mut bad = ExemplarMemory::new(1, 0).unwrap();
        assert!(bad.update(list, SelectionPolicy::Herding, None).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let data = task_data(0..3, 6);
        let mut mem = ExemplarMemory::new(12, 9).unwrap();
        mem.update(data.clone(), SelectionPolicy::Random, None).unwrap();
        let mut buf = Vec::new();
        mem.write_manifest(&mut buf).unwrap();
        let lines = ExemplarMemory::read_manifest(buf.as_slice()).unwrap();
        let back = ExemplarMemory::from_manifest(12, 9, &lines, |id| data.iter().find(|e| e.sample_id == id).cloned()).unwrap();
        assert_eq!(back, mem);
        assert!(ExemplarMemory::from_manifest(12, 9, &lines, |_| None).is_err());
    }

    #[test]
    fn refresh_and_nearest() {
        let mut mem = ExemplarMemory::new(10, 1).unwrap();
        mem.update(task_data(0..2, 3), SelectionPolicy::Random, None).unwrap();
        let t = refresh_all_prototypes(&mem, &pixel_encoder, 4).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.values().all(|p| p.task_of_last_update == 4));

        let mut table = PrototypeTable::new();
        for (c, v) in [(0, vec![1.0, 0.0]), (1, vec![0.0, 1.0]), (2, vec![-1.0, 0.0])] {
            table.insert(c, ClassPrototype { class_id: c, task_of_last_update: 0, vector: v });
        }
        assert_eq!(nearest_prototype(&[0.0, 3.0], &table).unwrap(), 1);
        assert_eq!(nearest_prototype(&[1.0, 1.0], &table).unwrap(), 0);
        assert_eq!(nearest_prototype(&[-5.0, 0.1], &table).unwrap(), 2);
        assert!(matches!(nearest_prototype(&[1.0, 0.0], &PrototypeTable::new()), Err(Error::EmptyTable)));
    }
}
