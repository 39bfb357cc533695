// The whole pipeline: pretraining, then classes arriving two at a time,
// learned from images and evaluated on point clouds after every task.
//
// `XMCIL_PRESET=synth-8` reproduces the reference run (about half a
// minute in release mode); the default `smoke` preset only exercises
// the plumbing.

use crossmodal_cil::protocol::{run_stream, Preset};
use crossmodal_cil::synth::Benchmark;

pub fn run_example() -> crossmodal_cil::Result<()> {
    let preset = Preset::from_name(&std::env::var("XMCIL_PRESET").unwrap_or_else(|_| "smoke".into()))?;
    let exp = preset.experiment();
    let bench = Benchmark::build(&exp.bench)?;
    let run = run_stream(&bench, &exp.train)?;

    let names = bench.class_names();
    for t in 0..run.stream.n_tasks() {
        let classes: Vec<&str> = run.stream.task_classes(t).iter().map(|&c| names[c].as_str()).collect();
        println!("task {t}: {}", classes.join(", "));
    }
    println!();
    print!("{}", run.matrix.to_csv());
    println!();
    for log in &run.learner.logs {
        let last = log.epochs.last().copied().unwrap_or_default();
        println!(
            "task {}: {} head columns, {} exemplars, final epoch ce {:.4} reg {:.4}",
            log.task, log.head_columns, log.memory_size, last.ce, last.reg
        );
    }
    println!(
        "A_B {:.3}  mean {:.3}  (chance at the end: {:.3})",
        run.summary.final_accuracy,
        run.summary.mean_accuracy,
        1.0 / bench.n_classes() as f64
    );
    assert_eq!(run.learner.model.backbone_checksum(), run.learner.backbone_checksum);
    Ok(())
}

#[allow(dead_code)]
fn main() -> crossmodal_cil::Result<()> {
    run_example()
}
