//! Rendering with random masking: drop contiguous face patches from a mesh,
//! render what is left from several viewpoints, and pair each rendering with
//! points resampled from the same masked surface.

mod pairs;
pub mod pgm;
mod render;

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::seed;
pub use pairs::{make_pairs, make_pairs_from_mesh, PairOptions, PairPointSource, PretrainPair};
pub use render::{render, render_view, CameraRig, GrayImage, MultiViewImage, Projection, ViewCamera};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    /// Fraction of faces removed, in `[0, 1)`.
    pub mask_ratio: f64,
    pub n_patches: usize,
    pub rng_seed: u64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            mask_ratio: 0.3,
            n_patches: 2,
            rng_seed: 0,
        }
    }
}

impl MaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return Err(Error::BadConfig(format!(
                "mask_ratio {} outside [0, 1)",
                self.mask_ratio
            )));
        }
        if self.n_patches == 0 {
            return Err(Error::BadConfig("n_patches must be at least 1".into()));
        }
        Ok(())
    }

    pub fn faces_removed(&self, n_faces: usize) -> usize {
        (self.mask_ratio * n_faces as f64).floor() as usize
    }
}

/// Indices (ascending) of the faces `mask_faces` removes.
///
/// Patches grow breadth-first over `face_adjacency` from distinct seeded start
/// faces, one face per patch per round. A patch whose component is used up
/// is replaced by a fresh seed, which can only happen on meshes with several
/// connected components.
pub fn masked_face_indices(mesh: &Mesh, spec: &MaskSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let total = mesh.faces.len();
    if total == 0 {
        return Err(Error::EmptyMesh);
    }
    let target = spec.faces_removed(total);
    if target >= total {
        return Err(Error::MaskTooLarge {
            removed: target,
            total,
        });
    }
    if target == 0 {
        return Ok(Vec::new());
    }

    let mut rng = seed::rng(spec.rng_seed);
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let mut next_seed = order.into_iter();

    let mut removed = vec![false; total];
    let mut count = 0;
    let mut queues: Vec<VecDeque<usize>> = Vec::new();
    let take = |f: usize, removed: &mut Vec<bool>, q: &mut VecDeque<usize>| {
        removed[f] = true;
        q.extend(mesh.face_adjacency[f].iter().copied());
    };

    for _ in 0..spec.n_patches.min(target) {
        let f = next_seed.next().expect("target < total");
        let mut q = VecDeque::new();
        take(f, &mut removed, &mut q);
        count += 1;
        queues.push(q);
    }
    while count < target {
        let mut grew = false;
        for q in queues.iter_mut() {
            if count == target {
                break;
            }
            while let Some(f) = q.pop_front() {
                if !removed[f] {
                    take(f, &mut removed, q);
                    count += 1;
                    grew = true;
                    break;
                }
            }
        }
        if !grew {
            let f = next_seed
                .by_ref()
                .find(|&f| !removed[f])
                .expect("target < total leaves a free face");
            let mut q = VecDeque::new();
            take(f, &mut removed, &mut q);
            count += 1;
            queues.push(q);
        }
    }
    Ok((0..total).filter(|&f| removed[f]).collect())
}

/// Removes `floor(mask_ratio * |faces|)` faces as contiguous patches.
pub fn mask_faces(mesh: &Mesh, spec: &MaskSpec) -> Result<Mesh> {
    let removed = masked_face_indices(mesh, spec)?;
    if removed.is_empty() {
        return Ok(mesh.clone());
    }
    let mut gone = vec![false; mesh.faces.len()];
    for &f in &removed {
        gone[f] = true;
    }
    let keep: Vec<usize> = (0..mesh.faces.len()).filter(|&f| !gone[f]).collect();
    Ok(mesh.retain_faces(&keep))
}
