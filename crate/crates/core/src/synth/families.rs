use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, Vec3};

/// Procedural shape classes. All meshes are closed, z-up, and roughly
/// centred on the origin before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Box,
    Cylinder,
    Cone,
    Torus,
    LBracket,
    Pyramid,
    Capsule,
    StackedBox,
}

pub type ParamLog = BTreeMap<String, f64>;

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 8] = [
        ShapeFamily::Box,
        ShapeFamily::Cylinder,
        ShapeFamily::Cone,
        ShapeFamily::Torus,
        ShapeFamily::LBracket,
        ShapeFamily::Pyramid,
        ShapeFamily::Capsule,
        ShapeFamily::StackedBox,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Box => "box",
            ShapeFamily::Cylinder => "cylinder",
            ShapeFamily::Cone => "cone",
            ShapeFamily::Torus => "torus",
            ShapeFamily::LBracket => "l_bracket",
            ShapeFamily::Pyramid => "pyramid",
            ShapeFamily::Capsule => "capsule",
            ShapeFamily::StackedBox => "stacked_box",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::BadFamilyParams(format!("unknown shape family {name:?}")))
    }

    /// Draws parameters and builds one mesh.
    pub fn build(self, rng: &mut ChaCha8Rng) -> Result<(Mesh, ParamLog)> {
        let mut log = ParamLog::new();
        let mut draw = |name: &str, lo: f64, hi: f64| {
            let v = rng.random_range(lo..hi);
            log.insert(name.to_string(), v);
            v
        };
        let (vertices, faces) = match self {
            ShapeFamily::Box => {
                let (x, y, z) = (draw("size_x", 0.8, 1.6), draw("size_y", 0.5, 1.0), draw("size_z", 0.3, 0.8));
                cuboid([0.0; 3], [x / 2.0, y / 2.0, z / 2.0])
            }
            ShapeFamily::Cylinder => {
                let (r, h) = (draw("radius", 0.3, 0.5), draw("height", 1.2, 2.0));
                revolve(&[(0.0, -h / 2.0), (r, -h / 2.0), (r, h / 2.0), (0.0, h / 2.0)], 16, 0.0)
            }
            ShapeFamily::Cone => {
                let (r, h) = (draw("radius", 0.5, 0.8), draw("height", 0.8, 1.5));
                revolve(&[(0.0, -h / 2.0), (r, -h / 2.0), (0.0, h / 2.0)], 16, 0.0)
            }
            ShapeFamily::Torus => {
                let (big, small) = (draw("major_radius", 0.7, 1.0), draw("minor_radius", 0.15, 0.3));
                torus(big, small, 16, 8)
            }
            ShapeFamily::LBracket => {
                let (a, b) = (draw("arm_x", 1.0, 1.5), draw("arm_z", 0.8, 1.2));
                let (t, w) = (draw("thickness", 0.2, 0.35), draw("depth", 0.4, 0.8));
                // Reflex corner first: the polygon is star-shaped around it.
                let outline = [(t, t), (a, t), (a, 0.0), (0.0, 0.0), (0.0, b), (t, b)];
                let outline: Vec<(f64, f64)> = outline.iter().map(|&(x, z)| (x - a / 2.0, z - b / 2.0)).collect();
                extrude_star(&outline, w)
            }
            ShapeFamily::Pyramid => {
                let (s, h) = (draw("base_half", 0.6, 0.9), draw("height", 0.5, 1.0));
                let aspect = draw("base_aspect", 0.8, 1.25);
                let r = s * std::f64::consts::SQRT_2;
                let (mut v, f) = revolve(&[(0.0, -h / 2.0), (r, -h / 2.0), (0.0, h / 2.0)], 4, FRAC_PI_4);
                for p in &mut v {
                    p[1] *= aspect;
                }
                (v, f)
            }
            ShapeFamily::Capsule => {
                let (r, len) = (draw("radius", 0.25, 0.4), draw("length", 0.8, 1.4));
                let mut profile = Vec::new();
                for k in 0..=4 {
                    let phi = -FRAC_PI_2 + FRAC_PI_2 * k as f64 / 4.0;
                    profile.push((r * phi.cos(), -len / 2.0 + r * phi.sin()));
                }
                for k in 0..=4 {
                    let phi = FRAC_PI_2 * k as f64 / 4.0;
                    profile.push((r * phi.cos(), len / 2.0 + r * phi.sin()));
                }
                let (mut v, f) = revolve(&profile, 12, 0.0);
                // Lay the axis along x.
                for p in &mut v {
                    *p = [p[2], p[1], -p[0]];
                }
                (v, f)
            }
            ShapeFamily::StackedBox => {
                let (bx, by, bz) = (draw("base_x", 1.2, 1.6), draw("base_y", 1.0, 1.4), draw("base_z", 0.3, 0.5));
                let (tx, tz) = (draw("top_xy", 0.4, 0.8), draw("top_z", 0.4, 0.8));
                let (ox, oy) = (draw("offset_x", -0.3, 0.3), draw("offset_y", -0.3, 0.3));
                let (mut v, mut f) = cuboid([0.0, 0.0, -tz / 2.0], [bx / 2.0, by / 2.0, bz / 2.0]);
                let (v2, f2) = cuboid([ox, oy, (bz - tz) / 2.0 + tz / 2.0], [tx / 2.0, tx / 2.0, tz / 2.0]);
                let base = v.len();
                v.extend(v2);
                f.extend(f2.into_iter().map(|t| t.map(|i| i + base)));
                (v, f)
            }
        };
        let mesh = Mesh::new(vertices, faces)?;
        if !(mesh.total_area() > 1e-9) {
            return Err(Error::BadFamilyParams(format!("{} drew a degenerate mesh", self.name())));
        }
        Ok((mesh, log))
    }
}

type Tris = (Vec<Vec3>, Vec<[usize; 3]>);

fn cuboid(center: Vec3, half: Vec3) -> Tris {
    let mut v = Vec::with_capacity(8);
    for i in 0..8 {
        let s = |bit: usize| if i & bit == 0 { -1.0 } else { 1.0 };
        v.push([center[0] + s(1) * half[0], center[1] + s(2) * half[1], center[2] + s(4) * half[2]]);
    }
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let f = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    (v, f)
}

/// Surface of revolution about z. Profile points with zero radius become
/// single pole vertices.
fn revolve(profile: &[(f64, f64)], segments: usize, phase: f64) -> Tris {
    let mut v = Vec::new();
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for &(r, z) in profile {
        if r.abs() < 1e-12 {
            v.push([0.0, 0.0, z]);
            rings.push(vec![v.len() - 1]);
        } else {
            let ring = (0..segments)
                .map(|s| {
                    let a = phase + TAU * s as f64 / segments as f64;
                    v.push([r * a.cos(), r * a.sin(), z]);
                    v.len() - 1
                })
                .collect();
            rings.push(ring);
        }
    }
    let mut f = Vec::new();
    for pair in rings.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        for s in 0..segments {
            let n = (s + 1) % segments;
            match (lo.len(), hi.len()) {
                (1, 1) => {}
                (1, _) => f.push([lo[0], hi[n], hi[s]]),
                (_, 1) => f.push([lo[s], lo[n], hi[0]]),
                _ => {
                    f.push([lo[s], lo[n], hi[n]]);
                    f.push([lo[s], hi[n], hi[s]]);
                }
            }
        }
    }
    (v, f)
}

fn torus(big: f64, small: f64, major: usize, minor: usize) -> Tris {
    let mut v = Vec::with_capacity(major * minor);
    for i in 0..major {
        let u = TAU * i as f64 / major as f64;
        for j in 0..minor {
            let w = TAU * j as f64 / minor as f64 + PI / minor as f64;
            let r = big + small * w.cos();
            v.push([r * u.cos(), r * u.sin(), small * w.sin()]);
        }
    }
    let id = |i: usize, j: usize| (i % major) * minor + j % minor;
    let mut f = Vec::with_capacity(2 * major * minor);
    for i in 0..major {
        for j in 0..minor {
            f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    (v, f)
}

/// Extrudes an (x, z) outline along y by `depth`. Caps are fans from the
/// first outline vertex, which must see the whole polygon.
fn extrude_star(outline: &[(f64, f64)], depth: f64) -> Tris {
    let n = outline.len();
    let mut v = Vec::with_capacity(2 * n);
    for &y in &[-depth / 2.0, depth / 2.0] {
        v.extend(outline.iter().map(|&(x, z)| [x, y, z]));
    }
    let mut f = Vec::new();
    for k in 1..n - 1 {
        f.push([0, k + 1, k]);
        f.push([n, n + k, n + k + 1]);
    }
    for k in 0..n {
        let m = (k + 1) % n;
        f.push([k, m, n + m]);
        f.push([k, n + m, n + k]);
    }
    (v, f)
}
