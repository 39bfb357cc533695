// Full method against the same run without the prototype term and against
// a model pretrained on unmasked renders, for a few seeds.
//
// `XMCIL_PRESET=synth-8` gives the reference comparison (a few minutes in
// release mode); the default `smoke` preset is for plumbing only.

use crossmodal_cil::protocol::{ablations, Preset};
use crossmodal_cil::synth::Benchmark;

pub fn run_example() -> crossmodal_cil::Result<()> {
    let preset = Preset::from_name(&std::env::var("XMCIL_PRESET").unwrap_or_else(|_| "smoke".into()))?;
    let seeds: Vec<u64> = if preset == Preset::Smoke { vec![0] } else { vec![0, 1, 2] };
    let exp = preset.experiment();
    let bench = Benchmark::build(&exp.bench)?;
    for seed in seeds {
        let runs = ablations(&bench, &exp.clone().with_seed(seed), true)?;
        println!("seed {seed}");
        print!("{}", runs.table()?.to_markdown());
        println!();
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> crossmodal_cil::Result<()> {
    run_example()
}
