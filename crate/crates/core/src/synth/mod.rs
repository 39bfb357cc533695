//! Procedural benchmark: parametric shape families with per-instance
//! variation, rendered views for training and point clouds for testing.

mod benchmark;
mod families;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{sample_surface, Mesh, PointCloud};
use crate::seed;
pub use benchmark::{Benchmark, BenchmarkConfig, ManifestRow, Split, TestSample, TrainSample};
pub use families::{ParamLog, ShapeFamily};

pub const DEFAULT_POINTS: usize = 1024;

/// A generated object. The mesh lives in the cloud's normalized frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub mesh: Mesh,
    pub cloud: PointCloud,
    pub params: ParamRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub object_id: String,
    pub family: String,
    pub seed: u64,
    pub params: ParamLog,
}

pub fn instance_seed(family: ShapeFamily, base_seed: u64, index: usize) -> u64 {
    seed::derive(base_seed, &[seed::hash_str(family.name()), index as u64])
}

/// `n` seed-determined instances of `family`, with [`DEFAULT_POINTS`] points.
pub fn generate(family: ShapeFamily, n: usize, rng_seed: u64) -> Result<Vec<Instance>> {
    generate_with(family, n, rng_seed, DEFAULT_POINTS, |i| format!("{}_{i:04}", family.name()))
}

pub fn generate_with(
    family: ShapeFamily,
    n: usize,
    rng_seed: u64,
    n_points: usize,
    id: impl Fn(usize) -> String,
) -> Result<Vec<Instance>> {
    if n == 0 {
        return Err(crate::Error::BadFamilyParams("instance count must be at least 1".into()));
    }
    (0..n)
        .map(|i| {
            let s = instance_seed(family, rng_seed, i);
            let (raw, params) = family.build(&mut seed::rng(s))?;
            let sampled = sample_surface(&raw, n_points, seed::derive(s, &[1]))?;
            let norm = sampled.normalization()?;
            let object_id = id(i);
            let cloud = PointCloud {
                points: sampled.points.iter().map(|&p| norm.apply(p)).collect(),
                object_id: object_id.clone(),
                label: None,
            };
            Ok(Instance {
                mesh: raw.transformed(&norm),
                cloud,
                params: ParamRecord {
                    object_id,
                    family: family.name().into(),
                    seed: s,
                    params,
                },
            })
        })
        .collect()
}

/// Scale- and rotation-about-z-tolerant summary of a cloud: sorted
/// per-axis spreads, vertical extent, and radial moments.
pub fn point_statistics(cloud: &PointCloud) -> Vec<f64> {
    let n = cloud.points.len().max(1) as f64;
    let c = cloud.centroid();
    let mut var = [0.0; 3];
    let (mut r1, mut r2) = (0.0, 0.0);
    for p in &cloud.points {
        let d = crate::geometry::vec3::sub(*p, c);
        for k in 0..3 {
            var[k] += d[k] * d[k] / n;
        }
        let r = crate::geometry::vec3::norm(d);
        r1 += r / n;
        r2 += r * r / n;
    }
    let mut horiz = [var[0].sqrt(), var[1].sqrt()];
    horiz.sort_by(f64::total_cmp);
    vec![horiz[0], horiz[1], var[2].sqrt(), r1, (r2 - r1 * r1).max(0.0).sqrt()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;

    #[test]
    fn boxes_vary_and_keep_topology() {
        let boxes = generate(ShapeFamily::Box, 2, 11).unwrap();
        assert_eq!(boxes.len(), 2);
        assert!(boxes.iter().all(|b| b.mesh.faces.len() == 12));
        assert_ne!(boxes[0].params.params["size_x"], boxes[1].params.params["size_x"]);
        let again = generate(ShapeFamily::Box, 2, 11).unwrap();
        assert_eq!(
            boxes.iter().map(|b| &b.params).collect::<Vec<_>>(),
            again.iter().map(|b| &b.params).collect::<Vec<_>>()
        );
        assert!(generate(ShapeFamily::Box, 0, 1).is_err());
    }

    #[test]
    fn clouds_normalized_and_on_mesh() {
        for fam in ShapeFamily::ALL {
            let inst = &generate_with(fam, 1, 5, 200, |i| format!("x{i}")).unwrap()[0];
            let c = inst.cloud.centroid();
            assert!(vec3::norm(c) < 1e-9);
            let rmax = inst.cloud.points.iter().map(|&p| vec3::norm(p)).fold(0.0, f64::max);
            assert!((rmax - 1.0).abs() < 1e-9);
            assert!(inst.cloud.points.iter().all(|&p| inst.mesh.distance_to(p) < 1e-9));
        }
    }

    #[test]
    fn families_separable_by_nearest_centroid() {
        let train: Vec<Vec<Vec<f64>>> = ShapeFamily::ALL
            .iter()
            .map(|&f| generate_with(f, 30, 1, 256, |i| i.to_string()).unwrap().iter().map(|x| point_statistics(&x.cloud)).collect())
            .collect();
        let centroids: Vec<Vec<f64>> = train
            .iter()
            .map(|rows| (0..rows[0].len()).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64).collect())
            .collect();
        let mut correct = 0;
        let mut total = 0;
        for (label, &fam) in ShapeFamily::ALL.iter().enumerate() {
            for x in generate_with(fam, 10, 2, 256, |i| i.to_string()).unwrap() {
                let s = point_statistics(&x.cloud);
                let pred = (0..8)
                    .min_by(|&a, &b| {
                        let da: f64 = s.iter().zip(&centroids[a]).map(|(u, v)| (u - v).powi(2)).sum();
                        let db: f64 = s.iter().zip(&centroids[b]).map(|(u, v)| (u - v).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                correct += (pred == label) as usize;
                total += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc > 2.0 / 8.0, "nearest-centroid accuracy {acc}");
    }
}
