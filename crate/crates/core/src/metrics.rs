//! Incremental accuracy metrics and their serializations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of `predictions` equal to `labels`.
pub fn step_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty);
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// `(A_B, mean)`: the last entry and the arithmetic mean.
pub fn summarize(entries: &[f64]) -> Result<(f64, f64)> {
    let last = *entries.last().ok_or(Error::Empty)?;
    Ok((last, entries.iter().sum::<f64>() / entries.len() as f64))
}

/// Count matrix, `m[label][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub n_classes: usize,
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n_classes).map(|k| self.counts[k][k]).sum()
    }

    /// Rows divided by their sums; empty rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: usize = row.iter().sum();
                row.iter().map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 }).collect()
            })
            .collect()
    }
}

pub fn confusion(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<Confusion> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    let mut counts = vec![vec![0; n_classes]; n_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        for v in [p, l] {
            if v >= n_classes {
                return Err(Error::LabelOutOfRange { label: v, n_classes });
            }
        }
        counts[l][p] += 1;
    }
    Ok(Confusion { n_classes, counts })
}

/// Evaluation after one incremental step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub classes_seen: usize,
    pub n_samples: usize,
    /// Accuracy over the union of the test sets of tasks `0..=step`.
    pub accuracy: f64,
    /// Accuracy on each seen task's test set separately.
    pub per_task: Vec<f64>,
    pub per_class: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nearest_prototype: Option<f64>,
}

impl StepRow {
    /// Builds a row from predictions and labels, both in class positions,
    /// given the task of every sample.
    pub fn from_predictions(
        step: usize,
        classes_seen: usize,
        predictions: &[usize],
        labels: &[usize],
        tasks: &[usize],
    ) -> Result<Self> {
        let accuracy = step_accuracy(predictions, labels)?;
        if tasks.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: tasks.len(),
                right: labels.len(),
            });
        }
        let per_task = (0..=step)
            .map(|t| {
                let (p, l): (Vec<usize>, Vec<usize>) = (0..labels.len())
                    .filter(|&i| tasks[i] == t)
                    .map(|i| (predictions[i], labels[i]))
                    .unzip();
                step_accuracy(&p, &l).unwrap_or(0.0)
            })
            .collect();
        let conf = confusion(predictions, labels, classes_seen)?;
        let per_class = conf
            .counts
            .iter()
            .take(classes_seen)
            .enumerate()
            .map(|(k, row)| {
                let s: usize = row.iter().sum();
                if s == 0 { 0.0 } else { row[k] as f64 / s as f64 }
            })
            .collect();
        Ok(Self {
            step,
            classes_seen,
            n_samples: labels.len(),
            accuracy,
            per_task,
            per_class,
            nearest_prototype: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub rows: Vec<StepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_accuracy: f64,
    pub mean_accuracy: f64,
    /// Same pair computed from the mean of per-task accuracies.
    pub final_task_mean: f64,
    pub mean_task_mean: f64,
}

impl AccuracyMatrix {
    pub fn push(&mut self, row: StepRow) {
        self.rows.push(row);
    }

    pub fn union_entries(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.accuracy).collect()
    }

    pub fn task_mean_entries(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.per_task.iter().sum::<f64>() / r.per_task.len().max(1) as f64)
            .collect()
    }

    pub fn summarize(&self) -> Result<Summary> {
        let (final_accuracy, mean_accuracy) = summarize(&self.union_entries())?;
        let (final_task_mean, mean_task_mean) = summarize(&self.task_mean_entries())?;
        Ok(Summary {
            final_accuracy,
            mean_accuracy,
            final_task_mean,
            mean_task_mean,
        })
    }

    /// `step,classes_seen,n_samples,accuracy,task_0,...` with empty cells
    /// for tasks not yet seen.
    pub fn to_csv(&self) -> String {
        let n_tasks = self.rows.iter().map(|r| r.per_task.len()).max().unwrap_or(0);
        let mut s = String::from("step,classes_seen,n_samples,accuracy");
        for t in 0..n_tasks {
            let _ = write!(s, ",task_{t}");
        }
        let with_np = self.rows.iter().any(|r| r.nearest_prototype.is_some());
        if with_np {
            s.push_str(",nearest_prototype");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{}", r.step, r.classes_seen, r.n_samples, r.accuracy);
            for t in 0..n_tasks {
                match r.per_task.get(t) {
                    Some(a) => {
                        let _ = write!(s, ",{a}");
                    }
                    None => s.push(','),
                }
            }
            if with_np {
                match r.nearest_prototype {
                    Some(a) => {
                        let _ = write!(s, ",{a}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Whitespace-separated `classes_seen accuracy` lines for plotting.
    pub fn to_gnuplot(&self) -> String {
        let mut s = String::from("# classes_seen accuracy\n");
        for r in &self.rows {
            let _ = writeln!(s, "{} {}", r.classes_seen, r.accuracy);
        }
        s
    }
}
