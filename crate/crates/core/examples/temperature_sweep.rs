// Pretraining temperature sweep; each temperature gets its own pretrained
// model and incremental run.

use crossmodal_cil::protocol::{tau_sweep, Preset};
use crossmodal_cil::synth::Benchmark;

pub fn run_example() -> crossmodal_cil::Result<()> {
    let preset = Preset::from_name(&std::env::var("XMCIL_PRESET").unwrap_or_else(|_| "smoke".into()))?;
    let exp = preset.experiment();
    let bench = Benchmark::build(&exp.bench)?;
    let (table, runs) = tau_sweep(&bench, &exp, &[0.01, 0.02, 0.04])?;
    print!("{}", table.to_markdown());
    for (tau, run) in [0.01, 0.02, 0.04].iter().zip(&runs) {
        let first = run.pretrain.as_ref().and_then(|p| p.epochs.first()).map(|e| e.loss.total);
        let last = run.pretrain.as_ref().and_then(|p| p.epochs.last()).map(|e| e.loss.total);
        println!("tau {tau}: pretraining loss {first:?} -> {last:?}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> crossmodal_cil::Result<()> {
    run_example()
}
