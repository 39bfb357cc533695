//! Point and image encoders, the shared adapter and the classification head.
//!
//! The two backbones map their modality to the same embedding dimension so
//! that their outputs can be contrasted. During incremental learning both
//! backbones are frozen and a single [`Adapter`] plus [`Head`] sit on top of
//! either one.

mod adapter;
mod head;
mod image;
mod point;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_pose, sample_pose, PointCloud, PoseConfig};
use crate::nn::Parameters;
use crate::rrm::MultiViewImage;
use crate::seed;
pub use adapter::{Adapter, AdapterCache};
pub use head::Head;
pub use image::{ImageBackbone, ImageCache};
pub use point::{PointBackbone, PointCache};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub point_hidden: (usize, usize),
    pub image_hidden: usize,
    /// Average-pooling factor applied to each view before flattening.
    pub image_pool: usize,
    pub adapter_hidden: usize,
    /// Use a second point network for the second pose view instead of
    /// sharing weights between the two views.
    pub twin_point_encoders: bool,
    pub pose: PoseConfig,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            point_hidden: (32, 64),
            image_hidden: 64,
            image_pool: 2,
            adapter_hidden: 64,
            twin_point_encoders: false,
            pose: PoseConfig::default(),
        }
    }
}

/// Every trainable tensor of the method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub point: PointBackbone,
    pub point_twin: Option<PointBackbone>,
    pub image: ImageBackbone,
    pub adapter: Adapter,
    pub head: Head,
}

impl Model {
    pub fn new(cfg: &EncoderConfig, image_size: usize, init_seed: u64) -> Result<Self> {
        cfg.pose.validate()?;
        let mut rng = seed::rng(seed::derive(init_seed, &[0x1417]));
        let point = PointBackbone::new(cfg.point_hidden, cfg.embed_dim, cfg.pose, &mut rng);
        let point_twin = cfg
            .twin_point_encoders
            .then(|| PointBackbone::new(cfg.point_hidden, cfg.embed_dim, cfg.pose, &mut rng));
        let image = ImageBackbone::new(image_size, cfg.image_pool, cfg.image_hidden, cfg.embed_dim, &mut rng)?;
        let adapter = Adapter::identity(cfg.embed_dim, cfg.adapter_hidden, "adapter-0", &mut rng);
        Ok(Self {
            point,
            point_twin,
            image,
            adapter,
            head: Head::new(cfg.embed_dim),
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.head.dim
    }

    /// Network used for the second pose view.
    pub fn second_view(&self) -> &PointBackbone {
        self.point_twin.as_ref().unwrap_or(&self.point)
    }

    pub fn backbones_frozen(&self) -> bool {
        self.point.frozen && self.image.frozen && self.point_twin.as_ref().is_none_or(|t| t.frozen)
    }

    pub fn freeze_backbones(&mut self) {
        self.point.frozen = true;
        self.image.frozen = true;
        if let Some(t) = &mut self.point_twin {
            t.frozen = true;
        }
    }

    /// Checksums of both backbones (and the twin, if any), joined.
    pub fn backbone_checksum(&self) -> String {
        let mut parts = vec![self.point.checksum(), self.image.checksum()];
        if let Some(t) = &self.point_twin {
            parts.push(t.checksum());
        }
        parts.join(":")
    }

    /// Logits for a point cloud through the adapted point path (no pose
    /// augmentation).
    pub fn point_logits(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        let e = encode_points(cloud, &self.point, None)?;
        head_logits(&adapt(&e, &self.adapter)?, &self.head)
    }
}

/// Encodes a cloud. With `Some(seed)` a pose is drawn from the backbone's
/// pose config and applied first; two different seeds give the two
/// augmentation views used by the intra-modal loss.
pub fn encode_points(cloud: &PointCloud, params: &PointBackbone, pose_seed: Option<u64>) -> Result<Vec<f64>> {
    Ok(encode_points_cached(cloud, params, pose_seed)?.0)
}

pub(crate) fn posed_points(cloud: &PointCloud, params: &PointBackbone, pose_seed: Option<u64>) -> Result<PointCloud> {
    if cloud.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    match pose_seed {
        None => Ok(cloud.clone()),
        Some(s) => {
            let t = sample_pose(seed::derive(s, &[0]), &params.pose)?;
            Ok(apply_pose(cloud, &t, seed::derive(s, &[1])))
        }
    }
}

pub(crate) fn encode_points_cached(
    cloud: &PointCloud,
    params: &PointBackbone,
    pose_seed: Option<u64>,
) -> Result<(Vec<f64>, PointCache, PointCloud)> {
    let posed = posed_points(cloud, params, pose_seed)?;
    let (e, cache) = params.forward(&posed.points);
    Ok((e, cache, posed))
}

/// Per-view backbone outputs averaged over the views.
pub fn encode_images(views: &MultiViewImage, params: &ImageBackbone) -> Result<Vec<f64>> {
    Ok(params.forward(views)?.0)
}

pub fn adapt(embedding: &[f64], adapter: &Adapter) -> Result<Vec<f64>> {
    if embedding.len() != adapter.dim() {
        return Err(Error::ShapeMismatch {
            expected: adapter.dim(),
            got: embedding.len(),
        });
    }
    Ok(adapter.forward(embedding).0)
}

pub fn head_logits(embedding: &[f64], head: &Head) -> Result<Vec<f64>> {
    if embedding.len() != head.dim {
        return Err(Error::ShapeMismatch {
            expected: head.dim,
            got: embedding.len(),
        });
    }
    if head.n_classes == 0 {
        return Err(Error::ShapeMismatch { expected: 1, got: 0 });
    }
    Ok(head.logits(embedding))
}

pub fn freeze_backbone<B: Freezable>(mut params: B) -> B {
    params.set_frozen();
    params
}

pub trait Freezable {
    fn set_frozen(&mut self);
}

impl Freezable for PointBackbone {
    fn set_frozen(&mut self) {
        self.frozen = true;
    }
}

impl Freezable for ImageBackbone {
    fn set_frozen(&mut self) {
        self.frozen = true;
    }
}
