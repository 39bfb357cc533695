use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};
use crate::geometry::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Projection {
    Orthographic,
    Perspective { fov_deg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub n_views: usize,
    pub elevation_deg: f64,
    pub azimuths_deg: Vec<f64>,
    /// Square image side in pixels.
    pub image_size: usize,
    pub projection: Projection,
    /// Half-width of the orthographic window in model units.
    pub half_extent: f64,
    /// Camera distance from the origin.
    pub distance: f64,
    /// Depth range, measured from the camera along the view axis.
    pub near: f64,
    pub far: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self::ring(10, 30.0, 64)
    }
}

impl CameraRig {
    /// `n_views` azimuths evenly spaced over a full turn.
    pub fn ring(n_views: usize, elevation_deg: f64, image_size: usize) -> Self {
        Self {
            n_views,
            elevation_deg,
            azimuths_deg: (0..n_views).map(|i| 360.0 * i as f64 / n_views as f64).collect(),
            image_size,
            projection: Projection::Orthographic,
            half_extent: 1.0,
            distance: 3.0,
            near: 1.5,
            far: 4.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_views == 0 || self.n_views != self.azimuths_deg.len() {
            return Err(Error::BadConfig(format!(
                "n_views {} does not match {} azimuths",
                self.n_views,
                self.azimuths_deg.len()
            )));
        }
        if self.image_size < 8 {
            return Err(Error::BadConfig("image_size must be at least 8".into()));
        }
        if !(self.far > self.near && self.near >= 0.0 && self.half_extent > 0.0) {
            return Err(Error::BadConfig("invalid depth range or extent".into()));
        }
        Ok(())
    }

    pub fn camera(&self, view: usize) -> ViewCamera {
        ViewCamera::new(self, view)
    }
}

/// One view of a rig: maps model points to `(column, row, depth)`.
#[derive(Debug, Clone, Copy)]
pub struct ViewCamera {
    position: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    projection: Projection,
    half_extent: f64,
    size: f64,
}

impl ViewCamera {
    fn new(rig: &CameraRig, view: usize) -> Self {
        let az = rig.azimuths_deg[view].to_radians();
        let el = rig.elevation_deg.to_radians();
        let toward_camera = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
        let forward = vec3::scale(toward_camera, -1.0);
        let right = vec3::normalized(vec3::cross(forward, [0.0, 0.0, 1.0]))
            .or_else(|| vec3::normalized(vec3::cross(forward, [0.0, 1.0, 0.0])))
            .expect("forward is a unit vector");
        let up = vec3::cross(right, forward);
        Self {
            position: vec3::scale(toward_camera, rig.distance),
            forward,
            right,
            up,
            projection: rig.projection,
            half_extent: rig.half_extent,
            size: rig.image_size as f64,
        }
    }

    /// Continuous pixel coordinates (pixel `(c, r)` spans `[c, c+1) x [r, r+1)`)
    /// and depth. `None` for points at or behind the camera under perspective.
    pub fn project(&self, p: Vec3) -> Option<Vec3> {
        let rel = vec3::sub(p, self.position);
        let depth = vec3::dot(rel, self.forward);
        let (x, y) = (vec3::dot(rel, self.right), vec3::dot(rel, self.up));
        let (sx, sy) = match self.projection {
            Projection::Orthographic => (x / self.half_extent, y / self.half_extent),
            Projection::Perspective { fov_deg } => {
                if depth <= 1e-9 {
                    return None;
                }
                let f = (fov_deg.to_radians() / 2.0).tan();
                (x / (depth * f), y / (depth * f))
            }
        };
        Some([(sx + 1.0) * 0.5 * self.size, (1.0 - sy) * 0.5 * self.size, depth])
    }
}

/// Grayscale image stored as 8-bit levels; intensity = level / 255.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GrayImage {
    pub size: usize,
    pub levels: Vec<u8>,
}

impl GrayImage {
    pub fn blank(size: usize) -> Self {
        Self {
            size,
            levels: vec![0; size * size],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.levels[row * self.size + col] as f64 / 255.0
    }

    pub fn intensities(&self) -> impl Iterator<Item = f64> + '_ {
        self.levels.iter().map(|&l| l as f64 / 255.0)
    }

    pub fn foreground_count(&self) -> usize {
        self.levels.iter().filter(|&&l| l > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewImage {
    pub views: Vec<GrayImage>,
    pub object_id: String,
    pub mask_id: Option<usize>,
    pub label: Option<usize>,
}

impl MultiViewImage {
    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn image_size(&self) -> usize {
        self.views.first().map_or(0, |v| v.size)
    }
}

/// Rasterizes one view with a depth buffer. Foreground intensity falls
/// linearly from 1 at the near plane to 0.25 at the far plane; background
/// and anything outside `[near, far)` stays 0.
pub fn render_view(mesh: &Mesh, rig: &CameraRig, view: usize) -> GrayImage {
    let cam = rig.camera(view);
    let n = rig.image_size;
    let mut depth = vec![f64::INFINITY; n * n];
    let projected: Vec<Option<Vec3>> = mesh.vertices.iter().map(|&v| cam.project(v)).collect();

    for f in &mesh.faces {
        let (Some(a), Some(b), Some(c)) = (projected[f[0]], projected[f[1]], projected[f[2]]) else {
            continue;
        };
        let area = edge(a, b, c);
        if area.abs() < 1e-12 {
            continue;
        }
        let min_c = a[0].min(b[0]).min(c[0]).floor().max(0.0) as usize;
        let max_c = (a[0].max(b[0]).max(c[0]).ceil().max(0.0) as usize).min(n);
        let min_r = a[1].min(b[1]).min(c[1]).floor().max(0.0) as usize;
        let max_r = (a[1].max(b[1]).max(c[1]).ceil().max(0.0) as usize).min(n);
        for row in min_r..max_r {
            for col in min_c..max_c {
                let p = [col as f64 + 0.5, row as f64 + 0.5, 0.0];
                let w0 = edge(b, c, p) / area;
                let w1 = edge(c, a, p) / area;
                let w2 = edge(a, b, p) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = w0 * a[2] + w1 * b[2] + w2 * c[2];
                if z < rig.near || z >= rig.far {
                    continue;
                }
                let slot = &mut depth[row * n + col];
                if z < *slot {
                    *slot = z;
                }
            }
        }
    }

    let span = rig.far - rig.near;
    let levels = depth
        .into_iter()
        .map(|z| {
            if z.is_finite() {
                let shade = 0.25 + 0.75 * (rig.far - z) / span;
                (shade.clamp(0.0, 1.0) * 255.0).round().max(1.0) as u8
            } else {
                0
            }
        })
        .collect();
    GrayImage { size: n, levels }
}

fn edge(a: Vec3, b: Vec3, p: Vec3) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Renders every view of the rig.
pub fn render(mesh: &Mesh, rig: &CameraRig) -> Result<MultiViewImage> {
    rig.validate()?;
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    Ok(MultiViewImage {
        views: (0..rig.n_views).map(|v| render_view(mesh, rig, v)).collect(),
        object_id: String::new(),
        mask_id: None,
        label: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Square of side `s` in the plane x = 0, facing the azimuth-0 camera.
    fn facing_square(s: f64, x: f64) -> Mesh {
        let h = s / 2.0;
        Mesh::new(
            vec![[x, -h, -h], [x, h, -h], [x, h, h], [x, -h, h]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    fn front_rig(size: usize) -> CameraRig {
        CameraRig {
            elevation_deg: 0.0,
            ..CameraRig::ring(1, 0.0, size)
        }
    }

    #[test]
    fn orthographic_square_extent() {
        // Side 1 over a window of half-width 1 on 64 px: pixel edges at
        // (x + 1) / 2 * 64, i.e. columns and rows 16..48.
        let img = render_view(&facing_square(1.0, 0.0), &front_rig(64), 0);
        for row in 0..64 {
            for col in 0..64 {
                let inside = (16..48).contains(&row) && (16..48).contains(&col);
                assert_eq!(img.get(col, row) > 0.0, inside, "pixel ({col}, {row})");
            }
        }
        // Depth 3 in [1.5, 4.5): shade 0.25 + 0.75 * 0.5.
        assert_eq!(img.levels[32 * 64 + 32], (0.625f64 * 255.0).round() as u8);
    }

    #[test]
    fn nearer_is_brighter() {
        let rig = front_rig(32);
        let near = render_view(&facing_square(1.0, 0.5), &rig, 0);
        let far = render_view(&facing_square(1.0, -0.5), &rig, 0);
        assert!(near.get(16, 16) > far.get(16, 16));
    }

    #[test]
    fn beyond_far_plane_is_blank() {
        let img = render(&facing_square(1.0, -10.0), &front_rig(32)).unwrap();
        assert_eq!(img.views[0].foreground_count(), 0);
    }

    #[test]
    fn rig_validation() {
        let mut rig = CameraRig::default();
        assert_eq!(rig.n_views, 10);
        rig.validate().unwrap();
        rig.n_views = 3;
        assert!(rig.validate().is_err());
        let rig = CameraRig::ring(2, 30.0, 4);
        assert!(rig.validate().is_err());
        assert!(matches!(
            render(&Mesh::new(vec![], vec![]).unwrap(), &CameraRig::default()),
            Err(Error::EmptyMesh)
        ));
    }

    #[test]
    fn perspective_square_is_centered() {
        let rig = CameraRig {
            projection: Projection::Perspective { fov_deg: 40.0 },
            ..front_rig(32)
        };
        let img = render_view(&facing_square(1.0, 0.0), &rig, 0);
        assert!(img.get(16, 16) > 0.0 && img.get(0, 0) == 0.0);
        let lit: Vec<usize> = (0..32).filter(|&c| img.get(c, 16) > 0.0).collect();
        assert_eq!(lit.first().unwrap() + lit.last().unwrap(), 31);
    }
}
