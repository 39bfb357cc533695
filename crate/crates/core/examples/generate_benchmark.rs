// Builds the synthetic shape benchmark and writes it to disk.
//
// `XMCIL_PRESET` picks the preset (default `smoke`), `XMCIL_OUT` the
// output root (default: the system temp dir).

use std::path::PathBuf;

use crossmodal_cil::protocol::Preset;
use crossmodal_cil::synth::Benchmark;

pub fn run_example() -> crossmodal_cil::Result<()> {
    let preset = Preset::from_name(&std::env::var("XMCIL_PRESET").unwrap_or_else(|_| "smoke".into()))?;
    let exp = preset.experiment();
    let bench = Benchmark::build(&exp.bench)?;
    println!(
        "{}: {} classes, {} train image sets ({} views of {}px), {} test clouds of {} points",
        preset.name(),
        bench.n_classes(),
        bench.train.len(),
        exp.bench.rig.n_views,
        exp.bench.rig.image_size,
        bench.test.len(),
        exp.bench.points_per_cloud,
    );
    for (c, name) in bench.class_names().iter().enumerate() {
        let faces = bench.train_of_classes(&[c])[0].mesh.faces.len();
        println!("  class {c} {name:<12} first mesh has {faces} faces");
    }

    let root = std::env::var_os("XMCIL_OUT").map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let dir = root.join("examples").join(format!("bench-{}", preset.name()));
    bench.write(&dir)?;
    let reloaded = Benchmark::load(&dir)?;
    assert_eq!(reloaded.train.len(), bench.train.len());
    assert_eq!(reloaded.test[0].cloud.points, bench.test[0].cloud.points);
    println!("wrote and reloaded {}", dir.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> crossmodal_cil::Result<()> {
    run_example()
}
