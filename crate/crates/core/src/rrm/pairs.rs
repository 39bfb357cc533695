use serde::{Deserialize, Serialize};

use super::{mask_faces, render, CameraRig, MaskSpec, MultiViewImage};
use crate::error::Result;
use crate::geometry::{cloud_to_mesh, sample_surface, HullParams, Mesh, PointCloud};
use crate::seed;

/// Which cloud sits on the point side of a pre-training pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairPointSource {
    /// Points resampled from the masked surface.
    #[default]
    MaskedResample,
    /// The original, unmasked cloud.
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOptions {
    pub points_per_cloud: usize,
    pub point_source: PairPointSource,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self {
            points_per_cloud: 1024,
            point_source: PairPointSource::MaskedResample,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainPair {
    pub image: MultiViewImage,
    pub cloud: PointCloud,
}

impl PretrainPair {
    pub fn object_id(&self) -> &str {
        &self.image.object_id
    }
}

fn mask_seed(template: &MaskSpec, object_id: &str, mask_index: usize) -> u64 {
    seed::derive(template.rng_seed, &[seed::hash_str(object_id), mask_index as u64])
}

/// Builds `n_masks` image/point pairs from an object's mesh.
///
/// Mask `j` uses a seed derived from the template seed, the object id and `j`;
/// the point side is resampled from the same masked surface unless
/// `opts.point_source` says otherwise.
pub fn make_pairs_from_mesh(
    mesh: &Mesh,
    original: &PointCloud,
    n_masks: usize,
    rig: &CameraRig,
    template: &MaskSpec,
    opts: &PairOptions,
) -> Result<Vec<PretrainPair>> {
    rig.validate()?;
    template.validate()?;
    let id = &original.object_id;
    (0..n_masks)
        .map(|j| {
            let spec = MaskSpec {
                rng_seed: mask_seed(template, id, j),
                ..*template
            };
            let masked = mask_faces(mesh, &spec)?;
            let mut image = render(&masked, rig)?;
            image.object_id = id.clone();
            image.mask_id = Some(j);
            image.label = original.label;
            let cloud = match opts.point_source {
                PairPointSource::MaskedResample => {
                    let sample_seed = seed::derive(spec.rng_seed, &[1]);
                    let mut c = sample_surface(&masked, opts.points_per_cloud, sample_seed)?;
                    c.object_id = id.clone();
                    c.label = original.label;
                    c
                }
                PairPointSource::Original => original.clone(),
            };
            Ok(PretrainPair { image, cloud })
        })
        .collect()
}

/// Same as [`make_pairs_from_mesh`], with the surface reconstructed from the
/// cloud itself.
pub fn make_pairs(
    cloud: &PointCloud,
    n_masks: usize,
    rig: &CameraRig,
    template: &MaskSpec,
    opts: &PairOptions,
) -> Result<Vec<PretrainPair>> {
    let mesh = cloud_to_mesh(cloud, HullParams::default())?;
    make_pairs_from_mesh(&mesh, cloud, n_masks, rig, template, opts)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::geometry::normalize;

    fn ball_cloud() -> PointCloud {
        // Points on a coarse sphere give a hull with dozens of faces.
        let mut pts = Vec::new();
        for i in 0..8 {
            for j in 1..8 {
                let (t, p) = (i as f64 * 0.785, j as f64 * 0.392);
                pts.push([p.sin() * t.cos(), p.sin() * t.sin(), p.cos()]);
            }
        }
        pts.push([0.0, 0.0, 1.0]);
        pts.push([0.0, 0.0, -1.0]);
        normalize(&PointCloud::new(pts, "ball-0", Some(3)).unwrap()).unwrap()
    }

    fn small_rig() -> CameraRig {
        CameraRig::ring(10, 30.0, 16)
    }

    #[test]
    fn twenty_masks_ten_views() {
        let opts = PairOptions {
            points_per_cloud: 64,
            ..PairOptions::default()
        };
        let pairs = make_pairs(&ball_cloud(), 20, &small_rig(), &MaskSpec::default(), &opts).unwrap();
        assert_eq!(pairs.len(), 20);
        for (j, p) in pairs.iter().enumerate() {
            assert_eq!(p.image.n_views(), 10);
            assert_eq!(p.image.mask_id, Some(j));
            assert_eq!(p.image.label, Some(3));
            assert_eq!(p.cloud.len(), 64);
        }
    }

    #[test]
    fn unmasked_single_pair_matches_direct_render() {
        let cloud = ball_cloud();
        let rig = small_rig();
        let spec = MaskSpec {
            mask_ratio: 0.0,
            ..MaskSpec::default()
        };
        let opts = PairOptions {
            points_per_cloud: 32,
            ..PairOptions::default()
        };
        let pairs = make_pairs(&cloud, 1, &rig, &spec, &opts).unwrap();
        let mesh = cloud_to_mesh(&cloud, HullParams::default()).unwrap();
        assert_eq!(pairs[0].image.views, render(&mesh, &rig).unwrap().views);
        let s = seed::derive(mask_seed(&spec, "ball-0", 0), &[1]);
        assert_eq!(pairs[0].cloud.points, sample_surface(&mesh, 32, s).unwrap().points);
    }

    #[test]
    fn masks_differ_across_indices() {
        let cloud = ball_cloud();
        let mesh = cloud_to_mesh(&cloud, HullParams::default()).unwrap();
        assert!(mesh.faces.len() >= 12);
        let template = MaskSpec::default();
        let sets: HashSet<Vec<usize>> = (0..20)
            .map(|j| {
                let spec = MaskSpec {
                    rng_seed: mask_seed(&template, "ball-0", j),
                    ..template
                };
                super::super::masked_face_indices(&mesh, &spec).unwrap()
            })
            .collect();
        assert_eq!(sets.len(), 20);
    }

    #[test]
    fn original_point_source() {
        let cloud = ball_cloud();
        let opts = PairOptions {
            points_per_cloud: 16,
            point_source: PairPointSource::Original,
        };
        let pairs = make_pairs(&cloud, 2, &small_rig(), &MaskSpec::default(), &opts).unwrap();
        assert!(pairs.iter().all(|p| p.cloud == cloud));
        let masked = make_pairs(&cloud, 1, &small_rig(), &MaskSpec::default(), &PairOptions::default()).unwrap();
        let mesh = cloud_to_mesh(&cloud, HullParams::default()).unwrap();
        assert!(masked[0].cloud.points.iter().all(|&p| mesh.distance_to(p) < 1e-6));
    }
}
