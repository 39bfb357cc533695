// Masks contiguous faces of a mesh, renders the survivors from a camera
// ring and pairs the views with points resampled from the same surface.

use std::path::PathBuf;

use crossmodal_cil::rrm::{self, make_pairs_from_mesh, mask_faces, masked_face_indices, render, CameraRig, MaskSpec, PairOptions};
use crossmodal_cil::synth::{generate, ShapeFamily};

fn ascii(img: &rrm::GrayImage) -> String {
    let size = img.size;
    let mut out = String::new();
    for row in (0..size).step_by(2) {
        for col in 0..size {
            out.push(match img.get(col, row) {
                v if v <= 0.0 => ' ',
                v if v < 0.4 => '.',
                v if v < 0.7 => '+',
                _ => '#',
            });
        }
        out.push('\n');
    }
    out
}

pub fn run_example() -> crossmodal_cil::Result<()> {
    let inst = generate(ShapeFamily::Torus, 1, 3)?.remove(0);
    let rig = CameraRig::ring(4, 30.0, 32);
    let spec = MaskSpec {
        mask_ratio: 0.3,
        n_patches: 2,
        rng_seed: 11,
    };
    let removed = masked_face_indices(&inst.mesh, &spec)?;
    let masked = mask_faces(&inst.mesh, &spec)?;
    println!(
        "torus: {} faces, mask removes {} ({} expected), {} remain",
        inst.mesh.faces.len(),
        removed.len(),
        spec.faces_removed(inst.mesh.faces.len()),
        masked.faces.len()
    );

    let full = render(&inst.mesh, &rig)?;
    let cut = render(&masked, &rig)?;
    for v in 0..rig.n_views {
        println!(
            "view {v}: {} foreground pixels intact, {} masked",
            full.views[v].foreground_count(),
            cut.views[v].foreground_count()
        );
    }
    println!("masked view 0:\n{}", ascii(&cut.views[0]));

    let opts = PairOptions {
        points_per_cloud: 256,
        ..Default::default()
    };
    let pairs = make_pairs_from_mesh(&inst.mesh, &inst.cloud, 3, &rig, &spec, &opts)?;
    for p in &pairs {
        println!("pair {:?}: {} views, {} points", p.image.mask_id, p.image.n_views(), p.cloud.len());
    }

    let root = std::env::var_os("XMCIL_OUT").map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let dir = root.join("examples").join("masked-torus");
    std::fs::create_dir_all(&dir)?;
    for (v, img) in cut.views.iter().enumerate() {
        rrm::pgm::write(&dir.join(format!("view_{v:02}.pgm")), img)?;
    }
    println!("views written to {}", dir.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> crossmodal_cil::Result<()> {
    run_example()
}
