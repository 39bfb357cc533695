use std::collections::HashMap;

use super::vec3::{self, Vec3};
use super::{Mesh, MeshMeta, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct HullParams {
    /// Visibility tolerance relative to the bounding-box diagonal.
    pub rel_eps: f64,
}

impl Default for HullParams {
    fn default() -> Self {
        Self { rel_eps: 1e-9 }
    }
}

struct Face {
    v: [usize; 3],
    normal: Vec3,
    offset: f64,
    alive: bool,
}

impl Face {
    fn new(points: &[Vec3], v: [usize; 3], interior: Vec3) -> Face {
        let [a, b, c] = [points[v[0]], points[v[1]], points[v[2]]];
        let mut v = v;
        let mut n = vec3::cross(vec3::sub(b, a), vec3::sub(c, a));
        if vec3::dot(n, vec3::sub(interior, a)) > 0.0 {
            v.swap(1, 2);
            n = vec3::scale(n, -1.0);
        }
        let normal = vec3::normalized(n).unwrap_or([0.0, 0.0, 0.0]);
        Face {
            v,
            normal,
            offset: vec3::dot(normal, a),
            alive: true,
        }
    }

    fn distance(&self, p: Vec3) -> f64 {
        vec3::dot(self.normal, p) - self.offset
    }
}

/// Incremental 3D convex hull. Returns outward-wound triangles indexing into
/// `points`.
pub fn convex_hull(points: &[Vec3], params: HullParams) -> Result<Vec<[usize; 3]>> {
    if points.len() < 4 {
        return Err(Error::DegenerateGeometry(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    let (lo, hi) = points.iter().fold(
        ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]),
        |(lo, hi), p| {
            (
                [lo[0].min(p[0]), lo[1].min(p[1]), lo[2].min(p[2])],
                [hi[0].max(p[0]), hi[1].max(p[1]), hi[2].max(p[2])],
            )
        },
    );
    let diag = vec3::norm(vec3::sub(hi, lo));
    let eps = params.rel_eps * diag.max(f64::MIN_POSITIVE);
    if diag == 0.0 {
        return Err(Error::DegenerateGeometry("all points coincide".into()));
    }

    let i0 = 0;
    let i1 = argmax(points, |p| vec3::norm(vec3::sub(p, points[i0])));
    let dir = vec3::sub(points[i1], points[i0]);
    let i2 = argmax(points, |p| {
        vec3::norm(vec3::cross(dir, vec3::sub(p, points[i0]))) / vec3::norm(dir)
    });
    let line_dist = vec3::norm(vec3::cross(dir, vec3::sub(points[i2], points[i0]))) / vec3::norm(dir);
    if line_dist <= eps {
        return Err(Error::DegenerateGeometry("points are collinear".into()));
    }
    let plane_n = vec3::normalized(vec3::cross(dir, vec3::sub(points[i2], points[i0]))).unwrap();
    let i3 = argmax(points, |p| vec3::dot(plane_n, vec3::sub(p, points[i0])).abs());
    if vec3::dot(plane_n, vec3::sub(points[i3], points[i0])).abs() <= eps {
        return Err(Error::DegenerateGeometry("points are coplanar".into()));
    }

    let interior = vec3::scale(
        vec3::add(
            vec3::add(points[i0], points[i1]),
            vec3::add(points[i2], points[i3]),
        ),
        0.25,
    );
    let mut faces: Vec<Face> = [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]]
        .into_iter()
        .map(|v| Face::new(points, v, interior))
        .collect();
    let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        register(&mut edge_owner, f, fi);
    }

    for (pi, &p) in points.iter().enumerate() {
        if [i0, i1, i2, i3].contains(&pi) {
            continue;
        }
        let visible: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.alive && f.distance(p) > eps)
            .map(|(i, _)| i)
            .collect();
        if visible.is_empty() {
            continue;
        }
        let mut horizon = Vec::new();
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                let (a, b) = (v[k], v[(k + 1) % 3]);
                let across = edge_owner.get(&(b, a)).copied();
                match across {
                    Some(g) if visible.contains(&g) => {}
                    _ => horizon.push((a, b)),
                }
            }
        }
        for &fi in &visible {
            faces[fi].alive = false;
            let v = faces[fi].v;
            for k in 0..3 {
                edge_owner.remove(&(v[k], v[(k + 1) % 3]));
            }
        }
        for (a, b) in horizon {
            let f = Face::new(points, [a, b, pi], interior);
            let fi = faces.len();
            register(&mut edge_owner, &f, fi);
            faces.push(f);
        }
    }
    Ok(faces.into_iter().filter(|f| f.alive).map(|f| f.v).collect())
}

fn register(owner: &mut HashMap<(usize, usize), usize>, f: &Face, fi: usize) {
    for k in 0..3 {
        owner.insert((f.v[k], f.v[(k + 1) % 3]), fi);
    }
}

fn argmax(points: &[Vec3], key: impl Fn(Vec3) -> f64) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &p) in points.iter().enumerate() {
        let v = key(p);
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Builds a closed surface over the cloud via its convex hull.
///
/// The returned mesh only keeps hull vertices; `meta.hausdorff_eps` records the
/// largest distance from any input point to the surface.
pub fn cloud_to_mesh(cloud: &PointCloud, params: HullParams) -> Result<Mesh> {
    let tris = convex_hull(&cloud.points, params)?;
    let mut remap = HashMap::new();
    let mut vertices = Vec::new();
    let faces = tris
        .iter()
        .map(|t| {
            t.map(|v| {
                *remap.entry(v).or_insert_with(|| {
                    vertices.push(cloud.points[v]);
                    vertices.len() - 1
                })
            })
        })
        .collect();
    let mut mesh = Mesh::new(vertices, faces)?;
    let eps = cloud
        .points
        .iter()
        .map(|&p| mesh.distance_to(p))
        .fold(0.0, f64::max);
    mesh.meta = MeshMeta {
        method: "convex-hull".into(),
        hausdorff_eps: Some(eps),
    };
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_corners() -> Vec<Vec3> {
        let mut v = Vec::new();
        for x in [-1.0, 1.0] {
            for y in [-1.0, 1.0] {
                for z in [-1.0, 1.0] {
                    v.push([x, y, z]);
                }
            }
        }
        v
    }

    /// Oracle: a triangle set is the hull surface of `pts` iff every triangle
    /// is non-degenerate, has all points on its inner side, and every edge is
    /// shared by exactly two triangles with opposite winding.
    fn check_hull(pts: &[Vec3], tris: &[[usize; 3]]) {
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for t in tris {
            let [a, b, c] = [pts[t[0]], pts[t[1]], pts[t[2]]];
            let n = vec3::cross(vec3::sub(b, a), vec3::sub(c, a));
            assert!(vec3::norm(n) > 1e-12);
            for &p in pts {
                assert!(vec3::dot(n, vec3::sub(p, a)) <= 1e-9);
            }
            for k in 0..3 {
                *edges.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &edges {
            assert_eq!(count, 1);
            assert_eq!(edges.get(&(b, a)), Some(&1), "edge {a}-{b} unmatched");
        }
    }

    #[test]
    fn cube_has_twelve_faces() {
        let pts = cube_corners();
        let cloud = PointCloud::new(pts.clone(), "cube", None).unwrap();
        let mesh = cloud_to_mesh(&cloud, HullParams::default()).unwrap();
        assert_eq!(mesh.faces.len(), 12);
        assert_eq!(mesh.vertices.len(), 8);
        check_hull(&mesh.vertices, &mesh.faces);
        assert!((mesh.total_area() - 24.0).abs() < 1e-9);
        assert_eq!(mesh.meta.hausdorff_eps, Some(0.0));
    }

    #[test]
    fn tetrahedron_faces_all_adjacent() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let cloud = PointCloud::new(pts, "tet", None).unwrap();
        let mesh = cloud_to_mesh(&cloud, HullParams::default()).unwrap();
        assert_eq!(mesh.faces.len(), 4);
        for (f, adj) in mesh.face_adjacency.iter().enumerate() {
            let others: Vec<usize> = (0..4).filter(|&g| g != f).collect();
            assert_eq!(adj, &others);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let line = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        assert!(matches!(
            convex_hull(&line, HullParams::default()),
            Err(Error::DegenerateGeometry(_))
        ));
        let line4 = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
        assert!(matches!(
            convex_hull(&line4, HullParams::default()),
            Err(Error::DegenerateGeometry(_))
        ));
        let plane = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        assert!(matches!(
            convex_hull(&plane, HullParams::default()),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn interior_points_dropped_and_eps_recorded() {
        let mut pts = cube_corners();
        pts.push([0.0, 0.0, 0.0]);
        pts.push([0.5, 0.0, 0.0]);
        let cloud = PointCloud::new(pts, "c", None).unwrap();
        let mesh = cloud_to_mesh(&cloud, HullParams::default()).unwrap();
        assert_eq!(mesh.faces.len(), 12);
        assert!((mesh.meta.hausdorff_eps.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_sphere_points_form_valid_hull() {
        use rand::Rng;
        let mut rng = crate::seed::rng(5);
        let pts: Vec<Vec3> = (0..200)
            .map(|_| {
                let v = [
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                ];
                v
            })
            .collect();
        let tris = convex_hull(&pts, HullParams::default()).unwrap();
        check_hull(&pts, &tris);
    }
}
