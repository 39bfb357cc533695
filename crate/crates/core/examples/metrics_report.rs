// Accuracy matrix bookkeeping: per-step rows from predictions, the
// summary numbers, a confusion matrix, and CSV / gnuplot output.

use crossmodal_cil::metrics::{confusion, AccuracyMatrix, StepRow};

pub fn run_example() -> crossmodal_cil::Result<()> {
    // Two tasks of two classes; predictions made after each task.
    let labels_1 = [0, 0, 1, 1];
    let preds_1 = [0, 0, 1, 0];
    let labels_2 = [0, 0, 1, 1, 2, 2, 3, 3];
    let preds_2 = [2, 0, 1, 3, 2, 2, 3, 2];
    let tasks_2 = [0, 0, 0, 0, 1, 1, 1, 1];

    let mut m = AccuracyMatrix::default();
    m.push(StepRow::from_predictions(0, 2, &preds_1, &labels_1, &[0; 4])?);
    m.push(StepRow::from_predictions(1, 4, &preds_2, &labels_2, &tasks_2)?);
    let s = m.summarize()?;
    println!("A_1 {:.3}  A_B {:.3}  mean {:.3}", m.rows[0].accuracy, s.final_accuracy, s.mean_accuracy);
    print!("{}", m.to_csv());

    let c = confusion(&preds_2, &labels_2, 4)?;
    println!("confusion after task 2 (rows = true class):");
    for row in &c.counts {
        println!("  {row:?}");
    }
    println!("trace {} of {}", c.trace(), c.total());
    println!("\n{}", m.to_gnuplot());
    Ok(())
}

#[allow(dead_code)]
fn main() -> crossmodal_cil::Result<()> {
    run_example()
}
