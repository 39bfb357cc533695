// Fixed-budget exemplar memory across tasks, class prototypes computed
// from it, and nearest-prototype classification.

use crossmodal_cil::encoders::Model;
use crossmodal_cil::prototype::{nearest_prototype, refresh_all_prototypes, Exemplar, ExemplarMemory, ImageEncoder, SelectionPolicy};
use crossmodal_cil::protocol::Preset;
use crossmodal_cil::synth::Benchmark;

pub fn run_example() -> crossmodal_cil::Result<()> {
    let exp = Preset::Smoke.experiment();
    let bench = Benchmark::build(&exp.bench)?;
    let model = Model::new(&exp.train.encoder, exp.bench.rig.image_size, 0)?;
    let encoder = ImageEncoder {
        backbone: &model.image,
        adapter: &model.adapter,
    };

    for policy in [SelectionPolicy::Random, SelectionPolicy::Herding] {
        let mut memory = ExemplarMemory::new(10, 42)?;
        for task in 0..4 {
            let classes = [2 * task, 2 * task + 1];
            let data: Vec<Exemplar> = bench
                .train_of_classes(&classes)
                .into_iter()
                .map(|s| Exemplar {
                    sample_id: s.id.clone(),
                    label: s.label,
                    image: s.image.clone(),
                    cloud: None,
                })
                .collect();
            memory.update(data, policy, Some(&encoder))?;
            let per_class: Vec<usize> = memory.seen_classes().map(|c| memory.class_entries(c).len()).collect();
            println!("{policy:?} after task {task}: {} stored, per class {per_class:?}", memory.len());
        }

        let table = refresh_all_prototypes(&memory, &encoder, 3)?;
        let mut hits = 0;
        for s in &bench.train {
            let e = model.adapter.forward(&model.image.forward(&s.image)?.0).0;
            hits += usize::from(nearest_prototype(&e, &table)? == s.label);
        }
        println!(
            "{policy:?}: nearest prototype labels {hits}/{} training image sets (untrained encoder)\n",
            bench.train.len()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> crossmodal_cil::Result<()> {
    run_example()
}
