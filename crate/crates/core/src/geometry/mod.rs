//! Point clouds, triangle meshes, surface sampling and pose augmentation.
//!
//! Coordinates are unitless model space, right-handed, with +z as the up axis.
//! Normalized objects are centered at their point centroid and fit the unit
//! sphere.

mod hull;
pub mod io;
mod pose;
pub mod vec3;

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
pub use hull::{cloud_to_mesh, convex_hull, HullParams};
pub use pose::{apply_pose, sample_pose, PoseConfig, PoseTransform, RotationPolicy};
pub use vec3::Vec3;

/// Radius below which a cloud is treated as a single location.
const DEGENERATE_RADIUS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub object_id: String,
    pub label: Option<usize>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, object_id: impl Into<String>, label: Option<usize>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::DegenerateGeometry("non-finite coordinate".into()));
        }
        Ok(Self {
            points,
            object_id: object_id.into(),
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self
            .points
            .iter()
            .fold([0.0; 3], |acc, &p| vec3::add(acc, p));
        vec3::scale(sum, 1.0 / self.points.len() as f64)
    }

    /// The centering/scaling that `normalize` would apply.
    pub fn normalization(&self) -> Result<Normalization> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let center = self.centroid();
        let radius = self
            .points
            .iter()
            .map(|&p| vec3::norm(vec3::sub(p, center)))
            .fold(0.0, f64::max);
        let scale = if radius > DEGENERATE_RADIUS { 1.0 / radius } else { 1.0 };
        Ok(Normalization { center, scale })
    }
}

/// Affine map `p -> (p - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub center: Vec3,
    pub scale: f64,
}

impl Normalization {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        vec3::scale(vec3::sub(p, self.center), self.scale)
    }
}

/// Centers a cloud on its centroid and scales it into the unit sphere.
pub fn normalize(cloud: &PointCloud) -> Result<PointCloud> {
    let n = cloud.normalization()?;
    Ok(PointCloud {
        points: cloud.points.iter().map(|&p| n.apply(p)).collect(),
        object_id: cloud.object_id.clone(),
        label: cloud.label,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshMeta {
    /// How the surface was obtained ("convex-hull", "parametric:<family>", "off-file", ...).
    pub method: String,
    /// Largest distance from a source point to the surface, when built from a cloud.
    pub hausdorff_eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Faces sharing an edge with each face, sorted ascending.
    pub face_adjacency: Vec<Vec<usize>>,
    pub meta: MeshMeta,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        Self::with_meta(vertices, faces, MeshMeta::default())
    }

    pub fn with_meta(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>, meta: MeshMeta) -> Result<Self> {
        let nv = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("face {fi} references a missing vertex")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} repeats a vertex")));
            }
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex".into()));
        }
        let face_adjacency = build_adjacency(&faces);
        Ok(Self {
            vertices,
            faces,
            face_adjacency,
            meta,
        })
    }

    pub fn face_corners(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_corners(f);
        0.5 * vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Keeps only the faces whose index is in `keep` (ascending), preserving
    /// the vertex array.
    pub fn retain_faces(&self, keep: &[usize]) -> Mesh {
        let faces = keep.iter().map(|&f| self.faces[f]).collect::<Vec<_>>();
        Mesh {
            vertices: self.vertices.clone(),
            face_adjacency: build_adjacency(&faces),
            faces,
            meta: self.meta.clone(),
        }
    }

    /// Applies `p -> (p - center) * scale` to every vertex.
    pub fn transformed(&self, n: &Normalization) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|&p| n.apply(p)).collect(),
            faces: self.faces.clone(),
            face_adjacency: self.face_adjacency.clone(),
            meta: self.meta.clone(),
        }
    }

    /// Smallest distance from `p` to any face.
    pub fn distance_to(&self, p: Vec3) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.face_corners(f);
                vec3::point_triangle_distance(p, a, b, c)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn build_adjacency(faces: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(fi);
        }
    }
    let mut adj = vec![Vec::new(); faces.len()];
    for shared in by_edge.values() {
        for &f in shared {
            for &g in shared {
                if f != g {
                    adj[f].push(g);
                }
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Draws `n` points uniformly by area from the mesh surface.
pub fn sample_surface(mesh: &Mesh, n: usize, rng_seed: u64) -> Result<PointCloud> {
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.face_area(f);
        cumulative.push(acc);
    }
    if acc <= 0.0 {
        return Err(Error::DegenerateGeometry("mesh has zero surface area".into()));
    }
    let mut rng = seed::rng(rng_seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * acc;
        let f = cumulative
            .partition_point(|&c| c <= target)
            .min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.face_corners(f);
        let r1 = rng.random::<f64>().sqrt();
        let r2 = rng.random::<f64>();
        let p = vec3::add(
            vec3::add(vec3::scale(a, 1.0 - r1), vec3::scale(b, r1 * (1.0 - r2))),
            vec3::scale(c, r1 * r2),
        );
        points.push(p);
    }
    Ok(PointCloud {
        points,
        object_id: String::new(),
        label: None,
    })
}
