use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vec3::Vec3;
use super::PointCloud;
use crate::error::{Error, Result};
use crate::seed;

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationPolicy {
    None,
    /// Uniform angle about +z.
    UpAxis,
    /// Uniform over SO(3).
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseConfig {
    pub rotation: RotationPolicy,
    pub scale_range: (f64, f64),
    pub jitter_sigma: f64,
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self {
            rotation: RotationPolicy::UpAxis,
            scale_range: (0.8, 1.2),
            jitter_sigma: 0.01,
        }
    }
}

impl PoseConfig {
    pub fn identity() -> Self {
        Self {
            rotation: RotationPolicy::None,
            scale_range: (1.0, 1.0),
            jitter_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::BadConfig(format!("scale range ({lo}, {hi}) must be positive and ordered")));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::BadConfig("jitter sigma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseTransform {
    pub rotation: Mat3,
    pub scale: f64,
    pub jitter_sigma: f64,
}

impl PoseTransform {
    pub fn identity() -> Self {
        Self {
            rotation: IDENTITY,
            scale: 1.0,
            jitter_sigma: 0.0,
        }
    }

    pub fn about_up_axis(angle: f64) -> Self {
        Self {
            rotation: rot_z(angle),
            ..Self::identity()
        }
    }

    pub fn rotate(&self, p: Vec3) -> Vec3 {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
        ]
    }
}

pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn quat_to_mat(w: f64, x: f64, y: f64, z: f64) -> Mat3 {
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn sample_pose(rng_seed: u64, config: &PoseConfig) -> Result<PoseTransform> {
    config.validate()?;
    let mut rng = seed::rng(rng_seed);
    let rotation = match config.rotation {
        RotationPolicy::None => IDENTITY,
        RotationPolicy::UpAxis => rot_z(rng.random::<f64>() * std::f64::consts::TAU),
        RotationPolicy::Full => {
            // Shoemake's uniform unit quaternion.
            let (u1, u2, u3) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
            let tau = std::f64::consts::TAU;
            quat_to_mat(
                b * (tau * u3).cos(),
                a * (tau * u2).sin(),
                a * (tau * u2).cos(),
                b * (tau * u3).sin(),
            )
        }
    };
    let (lo, hi) = config.scale_range;
    let scale = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    Ok(PoseTransform {
        rotation,
        scale,
        jitter_sigma: config.jitter_sigma,
    })
}

/// `p' = scale * R * p + N(0, sigma^2)` per coordinate.
pub fn apply_pose(cloud: &PointCloud, t: &PoseTransform, rng_seed: u64) -> PointCloud {
    let mut points: Vec<Vec3> = cloud
        .points
        .iter()
        .map(|&p| {
            let r = t.rotate(p);
            [r[0] * t.scale, r[1] * t.scale, r[2] * t.scale]
        })
        .collect();
    if t.jitter_sigma > 0.0 {
        let normal = Normal::new(0.0, t.jitter_sigma).expect("sigma validated");
        let mut rng = seed::rng(rng_seed);
        for p in &mut points {
            for c in p.iter_mut() {
                *c += normal.sample(&mut rng);
            }
        }
    }
    PointCloud {
        points,
        object_id: cloud.object_id.clone(),
        label: cloud.label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;

    fn mat_mul_t(r: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            }
        }
        out
    }

    fn det(r: &Mat3) -> f64 {
        vec3::dot(r[0], vec3::cross(r[1], r[2]))
    }

    #[test]
    fn identity_config_gives_identity() {
        let t = sample_pose(9, &PoseConfig::identity()).unwrap();
        assert_eq!(t, PoseTransform::identity());
        let c = PointCloud::new(vec![[0.1, 0.2, 0.3], [-0.5, 0.0, 0.4]], "a", None).unwrap();
        assert_eq!(apply_pose(&c, &t, 1).points, c.points);
    }

    #[test]
    fn half_turn_about_z() {
        let c = PointCloud::new(vec![[1.0, 0.0, 0.0]], "a", None).unwrap();
        let out = apply_pose(&c, &PoseTransform::about_up_axis(std::f64::consts::PI), 0);
        let p = out.points[0];
        assert!((p[0] + 1.0).abs() < 1e-6 && p[1].abs() < 1e-6 && p[2].abs() < 1e-6);
    }

    #[test]
    fn seeded_and_valid() {
        for policy in [RotationPolicy::UpAxis, RotationPolicy::Full] {
            let cfg = PoseConfig {
                rotation: policy,
                ..PoseConfig::default()
            };
            assert_eq!(sample_pose(4, &cfg).unwrap(), sample_pose(4, &cfg).unwrap());
            for s in 0..200 {
                let t = sample_pose(s, &cfg).unwrap();
                let rtr = mat_mul_t(&t.rotation);
                for i in 0..3 {
                    for j in 0..3 {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((rtr[i][j] - want).abs() < 1e-6);
                    }
                }
                assert!((det(&t.rotation) - 1.0).abs() < 1e-6);
                assert!((0.8..=1.2).contains(&t.scale));
            }
        }
    }

    #[test]
    fn up_axis_rotations_fix_z() {
        let cfg = PoseConfig::default();
        for s in 0..1000 {
            let t = sample_pose(s, &cfg).unwrap();
            let z = t.rotate([0.0, 0.0, 1.0]);
            assert!(z[0].abs() < 1e-6 && z[1].abs() < 1e-6 && (z[2] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn bad_scale_range() {
        let cfg = PoseConfig {
            scale_range: (0.0, 1.0),
            ..PoseConfig::default()
        };
        assert!(matches!(sample_pose(0, &cfg), Err(Error::BadConfig(_))));
        let cfg = PoseConfig {
            scale_range: (1.2, 0.9),
            ..PoseConfig::default()
        };
        assert!(sample_pose(0, &cfg).is_err());
    }

    #[test]
    fn jitter_seeded() {
        let c = PointCloud::new(vec![[0.1, 0.2, 0.3]; 10], "a", None).unwrap();
        let t = sample_pose(3, &PoseConfig::default()).unwrap();
        assert_eq!(apply_pose(&c, &t, 8).points, apply_pose(&c, &t, 8).points);
        assert_ne!(apply_pose(&c, &t, 8).points, apply_pose(&c, &t, 9).points);
    }
}
