// Interrupts an incremental run after two tasks, saves its state, reloads
// it and finishes; the accuracy matrix matches an uninterrupted run bit
// for bit.

use std::path::PathBuf;

use crossmodal_cil::checkpoint::{load_run_state, save_run_state};
use crossmodal_cil::metrics::AccuracyMatrix;
use crossmodal_cil::protocol::{drive_from, evaluate_step, pretrain_model, run_stream_from, stream_for, task_data, CrossModalLearner, IncrementalLearner, Preset};
use crossmodal_cil::synth::Benchmark;

pub fn run_example() -> crossmodal_cil::Result<()> {
    let exp = Preset::Smoke.experiment();
    let bench = Benchmark::build(&exp.bench)?;
    let stream = stream_for(&bench, &exp.train)?;
    let (model, _) = pretrain_model(&bench, &stream, &exp.train, |_, _| Ok(()))?;

    let reference = run_stream_from(&bench, &exp.train, model.clone(), |_, _| Ok(()))?;

    let mut learner = CrossModalLearner::new(model, exp.train.cil.clone(), exp.train.seed)?;
    let mut matrix = AccuracyMatrix::default();
    for t in 0..2 {
        learner.learn_task(&task_data(&bench, &stream, t)?)?;
        matrix.push(evaluate_step(&learner, &bench, &stream, t)?);
    }
    let root = std::env::var_os("XMCIL_OUT").map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let dir = root.join("examples").join("resume-state");
    save_run_state(&dir, &learner, &exp.train.encoder, &stream, &matrix)?;
    drop(learner);

    let (mut resumed, state, _) = load_run_state(&dir, &bench)?;
    println!("resuming {} after {} tasks", dir.display(), state.completed_tasks());
    let finished = drive_from(&mut resumed, &bench, &state.stream, state.matrix, |_, row| {
        println!("task {} accuracy {:.4}", row.step, row.accuracy);
        Ok(())
    })?;
    assert_eq!(finished, reference.matrix);
    println!("resumed run matches the uninterrupted one");
    Ok(())
}

#[allow(dead_code)]
fn main() -> crossmodal_cil::Result<()> {
    run_example()
}
