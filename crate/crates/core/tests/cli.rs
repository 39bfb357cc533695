//! End-to-end checks of the `xmcil` binary on the smoke preset.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crossmodal_cil::checkpoint::load_model;
use crossmodal_cil::encoders::Model;
use crossmodal_cil::nn::Parameters;

fn xmcil(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmcil"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn xmcil")
}

fn ok(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "exit {:?}\nstderr:\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout.clone()).unwrap();
    assert_eq!(stdout.lines().count(), 1, "stdout should be one JSON line:\n{stdout}");
    serde_json::from_str(&stdout).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_is_byte_identical_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let s = ok(&xmcil(tmp.path(), &["gen", "--preset", "smoke", "--dir", d.to_str().unwrap()]));
        assert_eq!(s["classes"], 8);
    }
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa, fb);
    assert!(fa.iter().any(|p| p.ends_with("manifest.jsonl")));
    for f in &fa {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{} differs", f.display());
    }
}

#[test]
fn config_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["gen", "--preset", "synth-9"],
        &["gen", "--preset", "smoke", "--increment", "0"],
        &["cil", "--preset", "smoke", "--no-such-flag"],
        &["eval", "--checkpoint", "/nonexistent/model.ckpt"],
        &["cil", "--resume", "/nonexistent/run"],
    ];
    for args in cases {
        let o = xmcil(tmp.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[train.cil]\nlr = -1.0\n").unwrap();
    let o = xmcil(tmp.path(), &["cil", "--preset", "smoke", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_lr_pretraining_warns_and_keeps_the_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let o = xmcil(tmp.path(), &["pretrain", "--preset", "smoke", "--epochs", "1", "--lr", "0", "--run", "p"]);
    let s = ok(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: pretraining lr is 0"));
    let (model, header) = load_model(Path::new(s["checkpoint"].as_str().unwrap())).unwrap();
    let exp = crossmodal_cil::protocol::Preset::Smoke.experiment();
    let init = Model::new(&header.encoder, header.image_size, exp.train.seed).unwrap();
    assert_eq!(model.point.flatten(), init.point.flatten());
    assert_eq!(model.image.flatten(), init.image.flatten());
    let run = tmp.path().join("runs/p");
    for f in ["run_manifest.json", "experiment.toml", "pretrain_loss.csv", "checkpoints/latest.ckpt"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn resumed_run_matches_and_eval_reproduces_it() {
    let tmp = tempfile::tempdir().unwrap();
    let full = ok(&xmcil(tmp.path(), &["cil", "--preset", "smoke", "--run", "full"]));
    assert_eq!(full["completed_tasks"], 4);

    let part = ok(&xmcil(tmp.path(), &["cil", "--preset", "smoke", "--run", "part", "--stop-after", "2"]));
    assert_eq!(part["completed_tasks"], 2);
    let part_dir = tmp.path().join("runs/part");
    let resumed = ok(&xmcil(tmp.path(), &["cil", "--resume", part_dir.to_str().unwrap()]));
    assert_eq!(resumed["completed_tasks"], 4);

    let full_dir = tmp.path().join("runs/full");
    assert_eq!(
        fs::read(full_dir.join("accuracy.csv")).unwrap(),
        fs::read(part_dir.join("accuracy.csv")).unwrap()
    );

    let e = ok(&xmcil(tmp.path(), &["eval", "--checkpoint", full_dir.to_str().unwrap()]));
    let trained = full["summary"]["final_accuracy"].as_f64().unwrap();
    assert!((e["accuracy"].as_f64().unwrap() - trained).abs() < 1e-12);
    assert!(full_dir.join("eval.json").is_file());

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(full_dir.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "cil");
    assert_eq!(manifest["preset"], "smoke");
}

#[test]
fn render_writes_mesh_and_views() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("r");
    ok(&xmcil(
        tmp.path(),
        &["render", "--family", "cone", "--views", "4", "--image-size", "16", "--mask-ratio", "0.3", "--dir", dir.to_str().unwrap()],
    ));
    assert!(dir.join("mesh.off").is_file());
    let views = files(&dir).into_iter().filter(|p| p.extension().is_some_and(|e| e == "pgm")).count();
    assert_eq!(views, 4);
    let o = xmcil(tmp.path(), &["render", "--family", "dodecahedron"]);
    assert_eq!(o.status.code(), Some(2));
}
