// Contrastive pretraining of the point and image backbones on masked
// image/point pairs, then a checkpoint round trip.
//
// `XMCIL_PRESET` picks the preset (default `smoke`).

use std::path::PathBuf;

use crossmodal_cil::checkpoint::{load_model, save_model};
use crossmodal_cil::encoders::Model;
use crossmodal_cil::protocol::{evaluate_pretrain, pretrain, pretrain_pairs, stream_for, Preset};
use crossmodal_cil::synth::Benchmark;

pub fn run_example() -> crossmodal_cil::Result<()> {
    let preset = Preset::from_name(&std::env::var("XMCIL_PRESET").unwrap_or_else(|_| "smoke".into()))?;
    let mut exp = preset.experiment();
    if preset == Preset::Smoke {
        exp.train.pretrain.epochs = 3;
    }
    let bench = Benchmark::build(&exp.bench)?;
    let stream = stream_for(&bench, &exp.train)?;
    let pairs = pretrain_pairs(&bench, &stream, &exp.train.pretrain)?;
    let held: Vec<_> = pairs.iter().step_by(3).cloned().collect();

    let mut model = Model::new(&exp.train.encoder, exp.bench.rig.image_size, exp.train.seed)?;
    let before = evaluate_pretrain(&model, &held, &exp.train.pretrain, 99)?;
    println!("{} pairs; held-out loss before training {:.4}", pairs.len(), before.total);
    let report = pretrain(&mut model, &pairs, &exp.train.pretrain, exp.train.seed, |_, e| {
        println!("epoch {:>2}  loss {:.4}  imc {:.4}  ipc {:.4}", e.epoch, e.loss.total, e.loss.imc, e.loss.ipc);
        Ok(())
    })?;
    let after = evaluate_pretrain(&model, &held, &exp.train.pretrain, 99)?;
    println!("held-out loss after training {:.4}", after.total);

    let root = std::env::var_os("XMCIL_OUT").map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let path = root.join("examples").join(format!("pretrain-{}.ckpt", preset.name()));
    save_model(&path, &model, &exp.train.encoder, serde_json::json!({ "stage": "pretrain" }))?;
    let (back, header) = load_model(&path)?;
    assert_eq!(back, model);
    assert_eq!(back.backbone_checksum(), report.backbone_checksum);
    println!("checkpoint {} holds {} tensors", path.display(), header.tensors.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> crossmodal_cil::Result<()> {
    run_example()
}
