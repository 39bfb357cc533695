use serde::{Deserialize, Serialize};

use super::preset::Experiment;
use super::{pretrain_model, run_stream_from, stream_for, StreamRun};
use crate::encoders::Model;
use crate::error::Result;
use crate::metrics::AccuracyMatrix;
use crate::synth::Benchmark;

/// One line of a comparison table: the settings that distinguish the run,
/// then its accuracy at steps 1 and 2, at the last step, and averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub settings: Vec<String>,
    pub a1: f64,
    pub a2: Option<f64>,
    pub final_accuracy: f64,
    pub mean_accuracy: f64,
}

impl ComparisonRow {
    pub fn from_matrix(settings: Vec<String>, m: &AccuracyMatrix) -> Result<Self> {
        let s = m.summarize()?;
        Ok(Self {
            settings,
            a1: m.rows[0].accuracy,
            a2: m.rows.get(1).map(|r| r.accuracy),
            final_accuracy: s.final_accuracy,
            mean_accuracy: s.mean_accuracy,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub setting_names: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn new(setting_names: &[&str]) -> Self {
        Self {
            setting_names: setting_names.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Markdown table, accuracies in percent with one decimal.
    pub fn to_markdown(&self) -> String {
        let mut head: Vec<String> = self.setting_names.clone();
        head.extend(["A_1", "A_2", "A_B", "A_mean"].map(String::from));
        let mut out = format!("| {} |\n|{}\n", head.join(" | "), "---|".repeat(head.len()));
        for r in &self.rows {
            let mut cells = r.settings.clone();
            cells.push(format!("{:.1}", 100.0 * r.a1));
            cells.push(r.a2.map_or("-".into(), |a| format!("{:.1}", 100.0 * a)));
            cells.push(format!("{:.1}", 100.0 * r.final_accuracy));
            cells.push(format!("{:.1}", 100.0 * r.mean_accuracy));
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},a1,a2,a_final,a_mean\n", self.setting_names.join(","));
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.settings.join(","),
                r.a1,
                r.a2.map_or(String::new(), |a| a.to_string()),
                r.final_accuracy,
                r.mean_accuracy
            ));
        }
        out
    }
}

fn on_off(b: bool) -> String {
    if b { "w/" } else { "w/o" }.to_string()
}

/// Runs of one seed for the masking and regularization ablations. The two
/// runs with masking share one pretrained model.
#[derive(Debug, Clone)]
pub struct AblationRuns {
    pub full: StreamRun,
    pub without_masking: Option<StreamRun>,
    pub without_regularization: StreamRun,
}

impl AblationRuns {
    pub fn table(&self) -> Result<ComparisonTable> {
        let mut t = ComparisonTable::new(&["RRM", "L1"]);
        if let Some(r) = &self.without_masking {
            t.rows.push(ComparisonRow::from_matrix(vec![on_off(false), on_off(true)], &r.matrix)?);
        }
        t.rows.push(ComparisonRow::from_matrix(
            vec![on_off(true), on_off(false)],
            &self.without_regularization.matrix,
        )?);
        t.rows.push(ComparisonRow::from_matrix(vec![on_off(true), on_off(true)], &self.full.matrix)?);
        Ok(t)
    }
}

fn run_pretrained(bench: &Benchmark, exp: &Experiment) -> Result<(Model, StreamRun)> {
    let stream = stream_for(bench, &exp.train)?;
    let (model, report) = pretrain_model(bench, &stream, &exp.train, |_, _| Ok(()))?;
    let mut run = run_stream_from(bench, &exp.train, model.clone(), |_, _| Ok(()))?;
    run.pretrain = Some(report);
    Ok((model, run))
}

/// Full method, the same pretrained model without the prototype term, and
/// optionally a model pretrained without masking.
pub fn ablations(bench: &Benchmark, exp: &Experiment, with_masking_arm: bool) -> Result<AblationRuns> {
    let (model, full) = run_pretrained(bench, exp)?;
    let no_reg = exp.clone().without_regularization();
    let mut without_regularization = run_stream_from(bench, &no_reg.train, model, |_, _| Ok(()))?;
    without_regularization.pretrain = full.pretrain.clone();
    let without_masking = if with_masking_arm {
        Some(run_pretrained(bench, &exp.clone().without_masking())?.1)
    } else {
        None
    };
    Ok(AblationRuns {
        full,
        without_masking,
        without_regularization,
    })
}

/// Pretrain and run the stream once per temperature.
pub fn tau_sweep(bench: &Benchmark, exp: &Experiment, taus: &[f64]) -> Result<(ComparisonTable, Vec<StreamRun>)> {
    let mut table = ComparisonTable::new(&["tau"]);
    let mut runs = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut e = exp.clone();
        e.train.pretrain.contrastive.tau = tau;
        let (_, run) = run_pretrained(bench, &e)?;
        table.rows.push(ComparisonRow::from_matrix(vec![tau.to_string()], &run.matrix)?);
        runs.push(run);
    }
    Ok((table, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::StepRow;

    fn row(step: usize, acc: f64) -> StepRow {
        StepRow {
            step,
            classes_seen: 2 * (step + 1),
            n_samples: 10,
            accuracy: acc,
            per_task: vec![acc; step + 1],
            per_class: vec![acc; 2 * (step + 1)],
            nearest_prototype: None,
        }
    }

    #[test]
    fn table_layout() {
        let mut m = AccuracyMatrix::default();
        m.push(row(0, 0.9));
        m.push(row(1, 0.5));
        m.push(row(2, 0.4));
        let mut t = ComparisonTable::new(&["RRM", "L1"]);
        t.rows.push(ComparisonRow::from_matrix(vec!["w/".into(), "w/o".into()], &m).unwrap());
        let md = t.to_markdown();
        assert_eq!(md.lines().next().unwrap(), "| RRM | L1 | A_1 | A_2 | A_B | A_mean |");
        assert_eq!(md.lines().nth(2).unwrap(), "| w/ | w/o | 90.0 | 50.0 | 40.0 | 60.0 |");
        assert_eq!(t.to_csv().lines().nth(1).unwrap(), "w/,w/o,0.9,0.5,0.4,0.6");
    }
}
