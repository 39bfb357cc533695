//! Runs every example's `run_example` on the smoke preset.

mod ablations {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/ablations.rs"));
}

#[test]
fn ablations_runs() {
    ablations::run_example().expect("ablations example should run");
}

mod checkpoint_resume {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/checkpoint_resume.rs"));
}

#[test]
fn checkpoint_resume_runs() {
    checkpoint_resume::run_example().expect("checkpoint_resume example should run");
}

mod contrastive_loss {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/contrastive_loss.rs"));
}

#[test]
fn contrastive_loss_runs() {
    contrastive_loss::run_example().expect("contrastive_loss example should run");
}

mod custom_learner {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/custom_learner.rs"));
}

#[test]
fn custom_learner_runs() {
    custom_learner::run_example().expect("custom_learner example should run");
}

mod generate_benchmark {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/generate_benchmark.rs"));
}

#[test]
fn generate_benchmark_runs() {
    generate_benchmark::run_example().expect("generate_benchmark example should run");
}

mod incremental_run {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/incremental_run.rs"));
}

#[test]
fn incremental_run_runs() {
    incremental_run::run_example().expect("incremental_run example should run");
}

mod masked_rendering {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/masked_rendering.rs"));
}

#[test]
fn masked_rendering_runs() {
    masked_rendering::run_example().expect("masked_rendering example should run");
}

mod metrics_report {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/metrics_report.rs"));
}

#[test]
fn metrics_report_runs() {
    metrics_report::run_example().expect("metrics_report example should run");
}

mod pretrain_backbones {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/pretrain_backbones.rs"));
}

#[test]
fn pretrain_backbones_runs() {
    pretrain_backbones::run_example().expect("pretrain_backbones example should run");
}

mod prototype_memory {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/prototype_memory.rs"));
}

#[test]
fn prototype_memory_runs() {
    prototype_memory::run_example().expect("prototype_memory example should run");
}

mod temperature_sweep {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/temperature_sweep.rs"));
}

#[test]
fn temperature_sweep_runs() {
    temperature_sweep::run_example().expect("temperature_sweep example should run");
}
