use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{generate_with, ParamRecord, ShapeFamily};
use crate::error::{Error, Result};
use crate::geometry::io::{read_off, read_xyz, write_off, write_xyz};
use crate::geometry::{Mesh, PointCloud};
use crate::rrm::{self, make_pairs_from_mesh, render, CameraRig, MaskSpec, MultiViewImage, PairOptions, PretrainPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub families: Vec<ShapeFamily>,
    pub train_per_family: usize,
    pub test_per_family: usize,
    pub points_per_cloud: usize,
    pub rig: CameraRig,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            families: ShapeFamily::ALL.to_vec(),
            train_per_family: 30,
            test_per_family: 10,
            points_per_cloud: 1024,
            rig: CameraRig::default(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A training object: its rendered views are the labelled training input,
/// its mesh feeds pretraining pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub id: String,
    pub label: usize,
    pub mesh: Mesh,
    pub cloud: PointCloud,
    pub image: MultiViewImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSample {
    pub id: String,
    pub label: usize,
    pub cloud: PointCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub label: usize,
    pub family: String,
    pub split: Split,
    pub mesh: String,
    pub points: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub config: BenchmarkConfig,
    pub train: Vec<TrainSample>,
    pub test: Vec<TestSample>,
    pub params: Vec<ParamRecord>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleFile {
    class_names: Vec<String>,
    train_per_class: usize,
    test_per_class: usize,
    config: BenchmarkConfig,
}

impl Benchmark {
    pub fn build(config: &BenchmarkConfig) -> Result<Self> {
        config.rig.validate()?;
        if config.families.is_empty() || config.train_per_family == 0 || config.test_per_family == 0 {
            return Err(Error::BadConfig("benchmark needs families and train/test instances".into()));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut params = Vec::new();
        let n = config.train_per_family + config.test_per_family;
        for (label, &fam) in config.families.iter().enumerate() {
            let ntrain = config.train_per_family;
            let id = |i: usize| {
                let (split, k) = if i < ntrain { ("train", i) } else { ("test", i - ntrain) };
                format!("{}_{split}_{k:03}", fam.name())
            };
            for (i, inst) in generate_with(fam, n, config.seed, config.points_per_cloud, id)?.into_iter().enumerate() {
                let mut cloud = inst.cloud;
                cloud.label = Some(label);
                params.push(inst.params);
                if i < ntrain {
                    let mut image = render(&inst.mesh, &config.rig)?;
                    image.object_id = cloud.object_id.clone();
                    image.label = Some(label);
                    train.push(TrainSample {
                        id: cloud.object_id.clone(),
                        label,
                        mesh: inst.mesh,
                        cloud,
                        image,
                    });
                } else {
                    test.push(TestSample {
                        id: cloud.object_id.clone(),
                        label,
                        cloud,
                    });
                }
            }
        }
        Ok(Self {
            config: config.clone(),
            train,
            test,
            params,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.config.families.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.config.families.iter().map(|f| f.name().to_string()).collect()
    }

    pub fn train_of_classes(&self, classes: &[usize]) -> Vec<&TrainSample> {
        self.train.iter().filter(|s| classes.contains(&s.label)).collect()
    }

    pub fn test_of_classes(&self, classes: &[usize]) -> Vec<&TestSample> {
        self.test.iter().filter(|s| classes.contains(&s.label)).collect()
    }

    pub fn pair_count(&self, classes: &[usize], n_masks: usize) -> usize {
        self.train_of_classes(classes).len() * n_masks
    }

    /// Masked image/point pairs for the training objects of `classes`.
    /// Pairs carry no labels.
    pub fn pretrain_pairs(
        &self,
        classes: &[usize],
        n_masks: usize,
        mask: &MaskSpec,
        opts: &PairOptions,
    ) -> Result<Vec<PretrainPair>> {
        let mut out = Vec::with_capacity(self.pair_count(classes, n_masks));
        for s in self.train_of_classes(classes) {
            let mut unlabeled = s.cloud.clone();
            unlabeled.label = None;
            out.extend(make_pairs_from_mesh(&s.mesh, &unlabeled, n_masks, &self.config.rig, mask, opts)?);
        }
        Ok(out)
    }

    pub fn manifest(&self) -> Vec<ManifestRow> {
        let names = self.class_names();
        let row = |id: &str, label: usize, split, n_views: usize| ManifestRow {
            id: id.to_string(),
            label,
            family: names[label].clone(),
            split,
            mesh: format!("meshes/{id}.off"),
            points: format!("points/{id}.xyz"),
            images: (0..n_views).map(|v| format!("images/{id}_v{v:02}.pgm")).collect(),
        };
        let n_views = self.config.rig.n_views;
        self.train
            .iter()
            .map(|s| row(&s.id, s.label, Split::Train, n_views))
            .chain(self.test.iter().map(|s| row(&s.id, s.label, Split::Test, 0)))
            .collect()
    }

    /// Writes `meshes/`, `points/`, `images/`, `manifest.jsonl`,
    /// `params.jsonl` and `schedule.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for sub in ["meshes", "points", "images"] {
            fs::create_dir_all(dir.join(sub))?;
        }
        let test_meshes = self.regenerate_test_meshes()?;
        for s in &self.train {
            write_off(&dir.join(format!("meshes/{}.off", s.id)), &s.mesh)?;
            write_xyz(&dir.join(format!("points/{}.xyz", s.id)), &s.cloud)?;
            for (v, img) in s.image.views.iter().enumerate() {
                rrm::pgm::write(&dir.join(format!("images/{}_v{v:02}.pgm", s.id)), img)?;
            }
        }
        for (s, mesh) in self.test.iter().zip(&test_meshes) {
            write_off(&dir.join(format!("meshes/{}.off", s.id)), mesh)?;
            write_xyz(&dir.join(format!("points/{}.xyz", s.id)), &s.cloud)?;
        }
        let mut w = fs::File::create(dir.join("manifest.jsonl"))?;
        for row in self.manifest() {
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
        let mut w = fs::File::create(dir.join("params.jsonl"))?;
        for p in &self.params {
            serde_json::to_writer(&mut w, p)?;
            w.write_all(b"\n")?;
        }
        let schedule = ScheduleFile {
            class_names: self.class_names(),
            train_per_class: self.config.train_per_family,
            test_per_class: self.config.test_per_family,
            config: self.config.clone(),
        };
        fs::write(dir.join("schedule.json"), serde_json::to_string_pretty(&schedule)? + "\n")?;
        Ok(())
    }

    fn regenerate_test_meshes(&self) -> Result<Vec<Mesh>> {
        let cfg = &self.config;
        let n = cfg.train_per_family + cfg.test_per_family;
        let mut out = Vec::with_capacity(self.test.len());
        for &fam in &cfg.families {
            let all = generate_with(fam, n, cfg.seed, cfg.points_per_cloud, |i| i.to_string())?;
            out.extend(all.into_iter().skip(cfg.train_per_family).map(|i| i.mesh));
        }
        Ok(out)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let schedule: ScheduleFile = {
            let path = dir.join("schedule.json");
            serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| Error::parse(&path, e.to_string()))?
        };
        let mut train = Vec::new();
        let mut test = Vec::new();
        let manifest_path = dir.join("manifest.jsonl");
        for line in BufReader::new(fs::File::open(&manifest_path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: ManifestRow =
                serde_json::from_str(&line).map_err(|e| Error::parse(&manifest_path, e.to_string()))?;
            let mut cloud = read_xyz(&dir.join(&row.points), Some(row.label))?;
            cloud.object_id = row.id.clone();
            match row.split {
                Split::Train => {
                    let views = row
                        .images
                        .iter()
                        .map(|p| rrm::pgm::read(&dir.join(p)))
                        .collect::<Result<Vec<_>>>()?;
                    train.push(TrainSample {
                        id: row.id.clone(),
                        label: row.label,
                        mesh: read_off(&dir.join(&row.mesh))?,
                        cloud,
                        image: MultiViewImage {
                            views,
                            object_id: row.id,
                            mask_id: None,
                            label: Some(row.label),
                        },
                    });
                }
                Split::Test => test.push(TestSample {
                    id: row.id,
                    label: row.label,
                    cloud,
                }),
            }
        }
        let params_path = dir.join("params.jsonl");
        let params = match fs::File::open(&params_path) {
            Ok(f) => BufReader::new(f)
                .lines()
                .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
                .map(|l| {
                    serde_json::from_str(&l?).map_err(|e| Error::parse(&params_path, e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?,
            Err(_) => Vec::new(),
        };
        Ok(Self {
            config: schedule.config,
            train,
            test,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn small() -> BenchmarkConfig {
        BenchmarkConfig {
            families: vec![ShapeFamily::Box, ShapeFamily::Torus, ShapeFamily::Cone],
            train_per_family: 3,
            test_per_family: 2,
            points_per_cloud: 64,
            rig: CameraRig::ring(3, 30.0, 16),
            seed: 4,
        }
    }

    #[test]
    fn counts_and_disjoint_splits() {
        let b = Benchmark::build(&small()).unwrap();
        assert_eq!(b.train.len(), 9);
        assert_eq!(b.test.len(), 6);
        let train: HashSet<_> = b.train.iter().map(|s| &s.id).collect();
        assert!(b.test.iter().all(|s| !train.contains(&s.id)));
        assert!(b.train.iter().all(|s| s.image.views.len() == 3));
        assert_eq!(b.pair_count(&[0, 2], 20), 120);
    }

    #[test]
    fn default_manifest_counts() {
        let cfg = BenchmarkConfig::default();
        let rows = cfg.families.len() * (cfg.train_per_family + cfg.test_per_family);
        assert_eq!(cfg.families.len() * cfg.train_per_family, 240);
        assert_eq!(cfg.families.len() * cfg.test_per_family, 80);
        assert_eq!(rows, 320);
    }

    #[test]
    fn disk_round_trip() {
        let b = Benchmark::build(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        let mut back = Benchmark::load(dir.path()).unwrap();
        for s in &mut back.train {
            assert_eq!(s.mesh.meta.method, "off-file");
            s.mesh.meta = Default::default();
        }
        assert_eq!(back.config, b.config);
        assert_eq!(back.train, b.train);
        assert_eq!(back.test, b.test);
        assert_eq!(back.params, b.params);
        for row in b.manifest() {
            assert!(dir.path().join(&row.mesh).exists());
            assert!(row.images.iter().all(|p| dir.path().join(p).exists()));
        }
        let first = fs::read(dir.path().join("manifest.jsonl")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        Benchmark::build(&small()).unwrap().write(dir2.path()).unwrap();
        assert_eq!(first, fs::read(dir2.path().join("manifest.jsonl")).unwrap());
    }

    #[test]
    fn pairs_are_unlabeled_and_counted() {
        let b = Benchmark::build(&small()).unwrap();
        let opts = PairOptions {
            points_per_cloud: 32,
            ..Default::default()
        };
        let pairs = b.pretrain_pairs(&[1], 4, &MaskSpec::default(), &opts).unwrap();
        assert_eq!(pairs.len(), 12);
        assert!(pairs.iter().all(|p| p.cloud.label.is_none() && p.image.label.is_none()));
    }
}
