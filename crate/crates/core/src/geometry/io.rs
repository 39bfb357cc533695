//! ASCII OFF meshes and XYZ point files.
//!
//! Writers emit shortest round-trip float formatting, so `read(write(x)) == x`
//! bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::vec3::Vec3;
use super::{Mesh, MeshMeta, PointCloud};
use crate::error::{Error, Result};

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
}

fn parse_f64s(line: &str, path: &Path) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::parse(path, format!("`{t}`: {e}"))))
        .collect()
}

pub fn parse_off(text: &str, path: &Path) -> Result<Mesh> {
    let mut lines = data_lines(text);
    let header = lines.next().ok_or_else(|| Error::parse(path, "missing OFF header"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(path, "file does not start with OFF"))?
        .trim();
    // Some exporters glue the counts onto the header line.
    let counts_line = if rest.is_empty() {
        lines.next().ok_or_else(|| Error::parse(path, "missing counts"))?
    } else {
        rest
    };
    let counts: Vec<usize> = counts_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::parse(path, format!("bad count `{t}`"))))
        .collect::<Result<_>>()?;
    if counts.len() < 2 {
        return Err(Error::parse(path, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| Error::parse(path, "truncated vertex list"))?;
        let v = parse_f64s(line, path)?;
        if v.len() < 3 {
            return Err(Error::parse(path, "vertex needs three coordinates"));
        }
        vertices.push([v[0], v[1], v[2]]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let line = lines.next().ok_or_else(|| Error::parse(path, "truncated face list"))?;
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::parse(path, format!("bad index `{t}`"))))
            .collect::<Result<_>>()?;
        let (&k, poly) = idx.split_first().ok_or_else(|| Error::parse(path, "empty face"))?;
        if k < 3 || poly.len() < k {
            return Err(Error::parse(path, "face has fewer than 3 vertices"));
        }
        for j in 1..k - 1 {
            faces.push([poly[0], poly[j], poly[j + 1]]);
        }
    }
    Mesh::with_meta(
        vertices,
        faces,
        MeshMeta {
            method: "off-file".into(),
            hausdorff_eps: None,
        },
    )
    .map_err(|e| Error::parse(path, e.to_string()))
}

pub fn format_off(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", mesh.vertices.len(), mesh.faces.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn read_off(path: &Path) -> Result<Mesh> {
    parse_off(&fs::read_to_string(path)?, path)
}

pub fn write_off(path: &Path, mesh: &Mesh) -> Result<()> {
    fs::write(path, format_off(mesh))?;
    Ok(())
}

pub fn parse_xyz(text: &str, path: &Path) -> Result<Vec<Vec3>> {
    data_lines(text)
        .map(|line| {
            let v = parse_f64s(line, path)?;
            if v.len() != 3 {
                return Err(Error::parse(path, format!("expected `x y z`, got `{line}`")));
            }
            Ok([v[0], v[1], v[2]])
        })
        .collect()
}

pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(cloud.points.len() * 32);
    for p in &cloud.points {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    s
}

/// Reads a point file; the object id is the file stem.
pub fn read_xyz(path: &Path, label: Option<usize>) -> Result<PointCloud> {
    let points = parse_xyz(&fs::read_to_string(path)?, path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    PointCloud::new(points, id, label).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, format_xyz(cloud))?;
    Ok(())
}
