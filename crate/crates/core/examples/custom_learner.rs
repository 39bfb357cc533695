// Plugging another method into the evaluation harness. This baseline
// never looks at images: it memorizes the mean point cloud statistics of
// each class from the training meshes' clouds and predicts the nearest
// mean, so it is an upper reference that cheats the cross-modal setting.

use crossmodal_cil::geometry::PointCloud;
use crossmodal_cil::protocol::{drive, stream_for, IncrementalLearner, Preset, TaskData};
use crossmodal_cil::synth::{point_statistics, Benchmark};
use crossmodal_cil::Result;

struct PointMeans<'a> {
    bench: &'a Benchmark,
    class_order: Vec<usize>,
    means: Vec<Vec<f64>>,
}

impl IncrementalLearner for PointMeans<'_> {
    fn learn_task(&mut self, data: &TaskData<'_>) -> Result<()> {
        for pos in data.new_classes.clone() {
            let class = self.class_order[pos];
            let stats: Vec<Vec<f64>> = self.bench.train_of_classes(&[class]).iter().map(|s| point_statistics(&s.cloud)).collect();
            let mut mean = vec![0.0; stats[0].len()];
            for s in &stats {
                for (m, v) in mean.iter_mut().zip(s) {
                    *m += v / stats.len() as f64;
                }
            }
            self.means.push(mean);
        }
        Ok(())
    }

    fn predict(&self, clouds: &[&PointCloud]) -> Result<Vec<usize>> {
        Ok(clouds
            .iter()
            .map(|c| {
                let s = point_statistics(c);
                let dist = |m: &Vec<f64>| m.iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                (0..self.means.len())
                    .min_by(|&a, &b| dist(&self.means[a]).total_cmp(&dist(&self.means[b])))
                    .unwrap_or(0)
            })
            .collect())
    }
}

pub fn run_example() -> Result<()> {
    let exp = Preset::Synth8.experiment();
    let bench = Benchmark::build(&exp.bench)?;
    let stream = stream_for(&bench, &exp.train)?;
    let mut learner = PointMeans {
        bench: &bench,
        class_order: stream.class_order.clone(),
        means: Vec::new(),
    };
    let matrix = drive(&mut learner, &bench, &stream, |_, row| {
        println!("after task {}: accuracy {:.3} per task {:?}", row.step, row.accuracy, row.per_task);
        Ok(())
    })?;
    let s = matrix.summarize()?;
    println!("A_B {:.3}, mean {:.3}", s.final_accuracy, s.mean_accuracy);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
