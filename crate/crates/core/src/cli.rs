//! The `xmcil` command line: dataset generation, pretraining, incremental
//! training, evaluation and debug rendering.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error or
//! missing checkpoint, 3 dataset generation failure, 4 non-finite loss.
//! Diagnostics go to stderr; stdout carries one JSON summary per command.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_model, load_run_state, save_model, save_run_state};
use crate::encoders::Model;
use crate::error::Error;
use crate::metrics::{AccuracyMatrix, StepRow};
use crate::protocol::{
    ablations, evaluate_step, pretrain, pretrain_pairs, stream_for, tau_sweep, task_data, CrossModalLearner, EpochLoss,
    Experiment, IncrementSchedule, IncrementalLearner, Preset, TaskStream,
};
use crate::rrm::{self, mask_faces, render, CameraRig, MaskSpec};
use crate::synth::{generate, Benchmark, ShapeFamily};

pub const OUT_ENV: &str = "XMCIL_OUT";

pub mod exit {
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const GENERATION: u8 = 3;
    pub const NON_FINITE: u8 = 4;
}

#[derive(Debug, Parser)]
#[command(name = "xmcil", version, about = "Image-to-point-cloud class-incremental learning")]
pub struct Cli {
    /// Root directory for datasets and runs.
    #[arg(long, env = OUT_ENV, default_value = "xmcil-out", global = true)]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic benchmark and write it to disk.
    Gen(GenArgs),
    /// Contrastive pretraining of both backbones.
    Pretrain(PretrainArgs),
    /// Incremental training on images, evaluated on point clouds.
    Cil(CilArgs),
    /// Evaluate a saved incremental run.
    Eval(EvalArgs),
    /// Render one generated mesh, optionally masked, to PGM views.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// TOML file with `[bench]` and `[train]` tables, layered over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// synth-8, synth-8-full or smoke.
    #[arg(long)]
    pub preset: Option<String>,
    /// Training seed (initialization, batching, exemplar selection).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Benchmark generation seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Class-order shuffle seed.
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    /// Classes per task.
    #[arg(long)]
    pub increment: Option<usize>,
    /// Load the dataset written by `gen` instead of regenerating it.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory name under the output root.
    #[arg(long)]
    pub run: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Output directory; defaults to `<out>/data/<preset>-<data seed>`.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Pretrain on single unmasked renders.
    #[arg(long)]
    pub no_masking: bool,
    /// Keep one checkpoint per epoch instead of only the latest.
    #[arg(long)]
    pub keep_epochs: bool,
}

#[derive(Debug, Args)]
pub struct CilArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Pretrained checkpoint; without it, pretraining runs first.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub reg_weight: Option<f64>,
    #[arg(long)]
    pub memory: Option<usize>,
    /// Also run without the prototype term and write a comparison table.
    #[arg(long)]
    pub ablate_regularization: bool,
    /// Add a row pretrained without masking to the comparison table.
    #[arg(long)]
    pub ablate_masking: bool,
    /// Pretraining temperature; several values run a sweep.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub tau: Vec<f64>,
    /// Continue the run saved in this run directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many completed tasks (the state stays resumable).
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory from `cil`, its `state` directory, or a model checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Extra classifier column; only `nearest-prototype` exists.
    #[arg(long)]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long, default_value = "box")]
    pub family: String,
    /// Instance seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub image_size: usize,
    #[arg(long, default_value_t = 10)]
    pub views: usize,
    #[arg(long, default_value_t = 30.0)]
    pub elevation: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mask_ratio: f64,
    #[arg(long, default_value_t = 2)]
    pub mask_patches: usize,
    #[arg(long, default_value_t = 0)]
    pub mask_seed: u64,
    /// Output directory; defaults to `<out>/render/<family>-<seed>`.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        Self {
            code: exit::CONFIG,
            message: msg.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::BadConfig(_) | Error::BadSchedule(_) | Error::BudgetZero | Error::Parse { .. } => exit::CONFIG,
            Error::NonFiniteLoss { .. } => exit::NON_FINITE,
            _ => exit::FAILURE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
}

/// What was run, with which resolved settings, and what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub preset: Option<String>,
    pub experiment: Experiment,
    pub train_seed: u64,
    pub shuffle_seed: u64,
    pub data_seed: u64,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<PathBuf>,
    pub version: String,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

struct RunDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    fn create(dir: PathBuf, command: &str, args: &[String], preset: Option<String>, exp: &Experiment) -> CliResult<Self> {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("experiment.toml"), toml::to_string(exp).map_err(|e| CliError::config(e.to_string()))?)?;
        let manifest = RunManifest {
            command: command.into(),
            args: args.to_vec(),
            preset,
            experiment: exp.clone(),
            train_seed: exp.train.seed,
            shuffle_seed: exp.train.shuffle_seed,
            data_seed: exp.bench.seed,
            stages: Vec::new(),
            artifacts: vec!["experiment.toml".into()],
            version: env!("CARGO_PKG_VERSION").into(),
        };
        let run = Self { dir, manifest };
        run.save()?;
        Ok(run)
    }

    fn save(&self) -> CliResult<()> {
        fs::write(self.dir.join("run_manifest.json"), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        Ok(())
    }

    fn begin(&mut self, stage: &str) -> CliResult<()> {
        self.manifest.stages.push(StageRecord {
            name: stage.into(),
            started_unix: now(),
            finished_unix: None,
        });
        self.save()
    }

    fn end(&mut self) -> CliResult<()> {
        if let Some(s) = self.manifest.stages.last_mut() {
            s.finished_unix = Some(now());
        }
        self.save()
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.artifact(name)?;
        Ok(path)
    }

    fn artifact(&mut self, name: &str) -> CliResult<()> {
        let p = PathBuf::from(name);
        if !self.manifest.artifacts.contains(&p) {
            self.manifest.artifacts.push(p);
        }
        self.save()
    }
}

/// Recursively overlays `top` onto `base`.
fn merge_toml(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge_toml(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Preset, then config file, then flags.
pub fn resolve_experiment(args: &ExperimentArgs) -> Result<(Experiment, Option<String>), Error> {
    let preset_name = args.preset.clone().unwrap_or_else(|| Preset::Synth8.name().to_string());
    let mut exp = Preset::from_name(&preset_name)?.experiment();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| Error::BadConfig(format!("{}: {e}", path.display())))?;
        let file: toml::Value = toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        let mut base = toml::Value::try_from(&exp).map_err(|e| Error::BadConfig(e.to_string()))?;
        merge_toml(&mut base, file);
        exp = base.try_into().map_err(|e: toml::de::Error| Error::parse(path, e.to_string()))?;
    }
    if let Some(s) = args.seed {
        exp.train.seed = s;
    }
    if let Some(s) = args.data_seed {
        exp.bench.seed = s;
    }
    if let Some(s) = args.shuffle_seed {
        exp.train.shuffle_seed = s;
    }
    if let Some(k) = args.increment {
        exp.train.schedule = IncrementSchedule::Uniform(k);
    }
    exp.validate()?;
    Ok((exp, Some(preset_name)))
}

fn load_bench(args: &ExperimentArgs, exp: &mut Experiment) -> CliResult<Benchmark> {
    match &args.data {
        Some(dir) => {
            if !dir.join("manifest.jsonl").is_file() {
                return Err(CliError::config(format!("{} has no manifest.jsonl", dir.display())));
            }
            let bench = Benchmark::load(dir)?;
            exp.bench = bench.config.clone();
            Ok(bench)
        }
        None => Ok(Benchmark::build(&exp.bench)?),
    }
}

fn run_dir(out: &Path, args: &ExperimentArgs, default: String) -> PathBuf {
    out.join("runs").join(args.run.clone().unwrap_or(default))
}

fn emit(summary: serde_json::Value) {
    println!("{summary}");
}

pub fn run_cli(cli: Cli, argv: &[String]) -> CliResult<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&cli.out, a),
        Command::Pretrain(a) => cmd_pretrain(&cli.out, a, argv),
        Command::Cil(a) => cmd_cil(&cli.out, a, argv),
        Command::Eval(a) => cmd_eval(&cli.out, a),
        Command::Render(a) => cmd_render(&cli.out, a),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run_cli(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn cmd_gen(out: &Path, a: GenArgs) -> CliResult<()> {
    let (exp, preset) = resolve_experiment(&a.exp)?;
    let dir = a.dir.unwrap_or_else(|| {
        out.join("data")
            .join(format!("{}-{}", preset.as_deref().unwrap_or("custom"), exp.bench.seed))
    });
    let generation = |e: Error| CliError {
        code: exit::GENERATION,
        message: format!("generation failed: {e}"),
    };
    let bench = Benchmark::build(&exp.bench).map_err(generation)?;
    bench.write(&dir).map_err(generation)?;
    let stream = stream_for(&bench, &exp.train)?;
    let pairs = bench.pair_count(&crate::protocol::pretrain_classes(&stream, exp.train.pretrain.scope), exp.train.pretrain.n_masks);
    eprintln!(
        "wrote {} train image sets and {} test clouds to {}",
        bench.train.len(),
        bench.test.len(),
        dir.display()
    );
    emit(serde_json::json!({
        "command": "gen",
        "dir": dir,
        "classes": bench.n_classes(),
        "train": bench.train.len(),
        "test": bench.test.len(),
        "pretrain_pairs": pairs,
    }));
    Ok(())
}

fn epoch_csv_row(e: &EpochLoss) -> String {
    format!("{},{},{},{},{},{}\n", e.epoch, e.lr, e.batches, e.loss.total, e.loss.imc, e.loss.ipc)
}

fn cmd_pretrain(out: &Path, a: PretrainArgs, argv: &[String]) -> CliResult<()> {
    let (mut exp, preset) = resolve_experiment(&a.exp)?;
    let p = &mut exp.train.pretrain;
    if let Some(e) = a.epochs {
        p.epochs = e;
    }
    if let Some(lr) = a.lr {
        p.lr = lr;
    }
    if let Some(t) = a.tau {
        p.contrastive.tau = t;
    }
    if a.no_masking {
        *p = p.without_masking();
    }
    exp.validate()?;
    if exp.train.pretrain.lr == 0.0 {
        eprintln!("warning: pretraining lr is 0; the checkpoint will equal the initialization");
    }
    let bench = load_bench(&a.exp, &mut exp)?;
    let mut run = RunDir::create(
        run_dir(out, &a.exp, format!("pretrain-{}", exp.train.seed)),
        "pretrain",
        argv,
        preset,
        &exp,
    )?;
    let stream = stream_for(&bench, &exp.train)?;
    let pairs = pretrain_pairs(&bench, &stream, &exp.train.pretrain)?;
    eprintln!("pretraining on {} pairs for {} epochs", pairs.len(), exp.train.pretrain.epochs);
    let mut model = Model::new(&exp.train.encoder, bench.config.rig.image_size, exp.train.seed)?;
    run.begin("pretrain")?;
    let mut csv = String::from("epoch,lr,batches,total,imc,ipc\n");
    let ckpt_dir = run.dir.join("checkpoints");
    let encoder = exp.train.encoder.clone();
    let keep = a.keep_epochs;
    let report = pretrain(&mut model, &pairs, &exp.train.pretrain, exp.train.seed, |m, e| {
        eprintln!("epoch {} loss {:.5} (imc {:.5}, ipc {:.5})", e.epoch, e.loss.total, e.loss.imc, e.loss.ipc);
        csv.push_str(&epoch_csv_row(e));
        fs::write(ckpt_dir.with_file_name("pretrain_loss.csv"), &csv)?;
        let name = if keep { format!("epoch_{:03}.ckpt", e.epoch) } else { "latest.ckpt".into() };
        let meta = serde_json::json!({ "stage": "pretrain", "epoch": e.epoch });
        save_model(&ckpt_dir.join(name), m, &encoder, meta)
    })?;
    run.end()?;
    run.artifact("pretrain_loss.csv")?;
    if exp.train.pretrain.epochs > 0 {
        run.artifact("checkpoints")?;
    }
    let meta = serde_json::json!({ "stage": "pretrain", "epochs": exp.train.pretrain.epochs, "seed": exp.train.seed });
    save_model(&run.dir.join("pretrain.ckpt"), &model, &exp.train.encoder, meta)?;
    run.artifact("pretrain.ckpt")?;
    emit(serde_json::json!({
        "command": "pretrain",
        "run": run.dir,
        "checkpoint": run.dir.join("pretrain.ckpt"),
        "pairs": pairs.len(),
        "final_loss": report.epochs.last().map(|e| e.loss.total),
        "backbone_checksum": report.backbone_checksum,
    }));
    Ok(())
}

fn load_checkpoint(path: &Path) -> CliResult<Model> {
    if !path.is_file() {
        return Err(CliError::config(format!("checkpoint {} not found", path.display())));
    }
    load_model(path).map(|(m, _)| m).map_err(|e| CliError::config(e.to_string()))
}

fn cil_csv(learner: &CrossModalLearner) -> String {
    let mut s = String::from("task,epoch,total,reg,ce\n");
    for log in &learner.logs {
        for (e, l) in log.epochs.iter().enumerate() {
            s.push_str(&format!("{},{},{},{},{}\n", log.task, e, l.total, l.reg, l.ce));
        }
    }
    s
}

fn summary_json(matrix: &AccuracyMatrix, learner: &CrossModalLearner) -> CliResult<serde_json::Value> {
    let s = matrix.summarize()?;
    Ok(serde_json::json!({
        "final_accuracy": s.final_accuracy,
        "mean_accuracy": s.mean_accuracy,
        "final_task_mean": s.final_task_mean,
        "mean_task_mean": s.mean_task_mean,
        "steps": matrix.union_entries(),
        "task_seconds": learner.logs.iter().map(|l| l.seconds).collect::<Vec<_>>(),
    }))
}

fn cmd_cil(out: &Path, a: CilArgs, argv: &[String]) -> CliResult<()> {
    if let Some(dir) = &a.resume {
        return resume_cil(dir, &a);
    }
    let (mut exp, preset) = resolve_experiment(&a.exp)?;
    let c = &mut exp.train.cil;
    if let Some(e) = a.epochs {
        c.epochs = e;
    }
    if let Some(lr) = a.lr {
        c.lr = lr;
    }
    if let Some(w) = a.reg_weight {
        c.reg_weight = w;
    }
    if let Some(m) = a.memory {
        c.memory_budget = m;
    }
    exp.validate()?;
    if exp.train.cil.lr == 0.0 {
        eprintln!("warning: incremental lr is 0; the adapter and head stay at their initialization");
    }
    let bench = load_bench(&a.exp, &mut exp)?;
    let mut run = RunDir::create(run_dir(out, &a.exp, format!("cil-{}", exp.train.seed)), "cil", argv, preset, &exp)?;

    if a.tau.len() > 1 {
        if a.checkpoint.is_some() {
            return Err(CliError::config("a temperature sweep pretrains each arm; drop --checkpoint"));
        }
        run.begin("tau-sweep")?;
        let (table, _) = tau_sweep(&bench, &exp, &a.tau)?;
        run.end()?;
        run.write("tau_sweep.md", table.to_markdown())?;
        run.write("tau_sweep.csv", table.to_csv())?;
        eprint!("{}", table.to_markdown());
        emit(serde_json::json!({ "command": "cil", "run": run.dir, "tau_sweep": table.rows }));
        return Ok(());
    }
    if let Some(&t) = a.tau.first() {
        exp.train.pretrain.contrastive.tau = t;
        exp.validate()?;
    }
    if a.ablate_regularization || a.ablate_masking {
        if a.checkpoint.is_some() {
            return Err(CliError::config("ablations pretrain their own models; drop --checkpoint"));
        }
        run.begin("ablation")?;
        let runs = ablations(&bench, &exp, a.ablate_masking)?;
        run.end()?;
        let table = runs.table()?;
        run.write("ablation.md", table.to_markdown())?;
        run.write("ablation.csv", table.to_csv())?;
        run.write("accuracy.csv", runs.full.matrix.to_csv())?;
        eprint!("{}", table.to_markdown());
        emit(serde_json::json!({ "command": "cil", "run": run.dir, "ablation": table.rows }));
        return Ok(());
    }

    let stream = stream_for(&bench, &exp.train)?;
    let model = match &a.checkpoint {
        Some(path) => load_checkpoint(path)?,
        None => {
            run.begin("pretrain")?;
            let pairs = pretrain_pairs(&bench, &stream, &exp.train.pretrain)?;
            let mut model = Model::new(&exp.train.encoder, bench.config.rig.image_size, exp.train.seed)?;
            let mut csv = String::from("epoch,lr,batches,total,imc,ipc\n");
            pretrain(&mut model, &pairs, &exp.train.pretrain, exp.train.seed, |_, e| {
                eprintln!("pretrain epoch {} loss {:.5}", e.epoch, e.loss.total);
                csv.push_str(&epoch_csv_row(e));
                Ok(())
            })?;
            run.end()?;
            run.write("pretrain_loss.csv", csv)?;
            let meta = serde_json::json!({ "stage": "pretrain", "seed": exp.train.seed });
            save_model(&run.dir.join("pretrain.ckpt"), &model, &exp.train.encoder, meta)?;
            run.artifact("pretrain.ckpt")?;
            model
        }
    };
    if model.embed_dim() != exp.train.encoder.embed_dim || model.image.image_size != bench.config.rig.image_size {
        return Err(CliError::config("checkpoint does not match the configured encoder or image size"));
    }
    let learner = CrossModalLearner::new(model, exp.train.cil.clone(), exp.train.seed)?;
    continue_cil(&mut run, learner, &bench, &stream, &exp, AccuracyMatrix::default(), a.stop_after)
}

fn continue_cil(
    run: &mut RunDir,
    mut learner: CrossModalLearner,
    bench: &Benchmark,
    stream: &TaskStream,
    exp: &Experiment,
    mut matrix: AccuracyMatrix,
    stop_after: Option<usize>,
) -> CliResult<()> {
    run.begin("cil")?;
    let end = stop_after.map_or(stream.n_tasks(), |k| k.min(stream.n_tasks()));
    for t in matrix.rows.len()..end {
        learner.learn_task(&task_data(bench, stream, t)?)?;
        let row = evaluate_step(&learner, bench, stream, t)?;
        eprintln!("task {t}: accuracy {:.4} over {} classes", row.accuracy, row.classes_seen);
        matrix.push(row);
        save_run_state(&run.dir.join("state"), &learner, &exp.train.encoder, stream, &matrix)?;
    }
    run.end()?;
    run.artifact("state")?;
    run.write("accuracy.csv", matrix.to_csv())?;
    run.write("cil_loss.csv", cil_csv(&learner))?;
    let summary = summary_json(&matrix, &learner)?;
    run.write("summary.json", serde_json::to_string_pretty(&summary)? + "\n")?;
    emit(serde_json::json!({
        "command": "cil",
        "run": run.dir,
        "completed_tasks": matrix.rows.len(),
        "tasks": stream.n_tasks(),
        "summary": summary,
    }));
    Ok(())
}

fn read_run_experiment(dir: &Path) -> CliResult<Experiment> {
    let path = dir.join("experiment.toml");
    let text = fs::read_to_string(&path).map_err(|_| CliError::config(format!("{} not found", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn resume_cil(dir: &Path, a: &CilArgs) -> CliResult<()> {
    if !dir.join("state").join("state.json").is_file() {
        return Err(CliError::config(format!("{} holds no resumable state", dir.display())));
    }
    let exp = read_run_experiment(dir)?;
    let bench = Benchmark::build(&exp.bench)?;
    let (learner, state, _) = load_run_state(&dir.join("state"), &bench)?;
    let manifest: RunManifest = serde_json::from_slice(&fs::read(dir.join("run_manifest.json"))?)?;
    let mut run = RunDir {
        dir: dir.to_path_buf(),
        manifest,
    };
    eprintln!("resuming after {} of {} tasks", state.completed_tasks(), state.stream.n_tasks());
    continue_cil(&mut run, learner, &bench, &state.stream, &exp, state.matrix, a.stop_after)
}

fn cmd_eval(out: &Path, a: EvalArgs) -> CliResult<()> {
    let nearest = match a.diagnostic.as_deref() {
        None => false,
        Some("nearest-prototype") => true,
        Some(other) => return Err(CliError::config(format!("unknown diagnostic {other:?}"))),
    };
    let path = &a.checkpoint;
    if !path.exists() {
        return Err(CliError::config(format!("checkpoint {} not found", path.display())));
    }
    let state_dir = if path.join("state").join("state.json").is_file() {
        Some(path.join("state"))
    } else if path.join("state.json").is_file() {
        Some(path.clone())
    } else {
        None
    };
    let (row, dest) = match state_dir {
        Some(sd) => {
            let run_root = sd.parent().map(Path::to_path_buf).unwrap_or_default();
            let exp = match read_run_experiment(&run_root) {
                Ok(e) => e,
                Err(_) => resolve_experiment(&a.exp)?.0,
            };
            let bench = Benchmark::build(&exp.bench)?;
            let (learner, state, _) = load_run_state(&sd, &bench).map_err(|e| CliError::config(e.to_string()))?;
            let step = state
                .completed_tasks()
                .checked_sub(1)
                .ok_or_else(|| CliError::config("run has no completed task"))?;
            let mut row = evaluate_step(&learner, &bench, &state.stream, step)?;
            if !nearest {
                row.nearest_prototype = None;
            }
            (row, run_root)
        }
        None => {
            let model = load_checkpoint(path)?;
            let (mut exp, _) = resolve_experiment(&a.exp)?;
            let bench = load_bench(&a.exp, &mut exp)?;
            let stream = stream_for(&bench, &exp.train)?;
            let n = model.head.n_classes;
            let step = (0..stream.n_tasks())
                .find(|&t| stream.seen_classes(t).len() == n)
                .ok_or_else(|| CliError::config(format!("head has {n} classes, which ends no task of the stream")))?;
            if nearest {
                eprintln!("warning: a bare model checkpoint has no exemplar memory; skipping the prototype column");
            }
            let learner = CrossModalLearner::new(model, exp.train.cil.clone(), exp.train.seed)?;
            let row = evaluate_step(&learner, &bench, &stream, step)?;
            (row, out.join("eval"))
        }
    };
    fs::create_dir_all(&dest)?;
    fs::write(dest.join("eval.json"), serde_json::to_string_pretty(&row)? + "\n")?;
    emit(eval_summary(&row, &dest));
    Ok(())
}

fn eval_summary(row: &StepRow, dest: &Path) -> serde_json::Value {
    serde_json::json!({
        "command": "eval",
        "output": dest.join("eval.json"),
        "step": row.step,
        "classes_seen": row.classes_seen,
        "accuracy": row.accuracy,
        "per_task": row.per_task,
        "nearest_prototype": row.nearest_prototype,
    })
}

fn cmd_render(out: &Path, a: RenderArgs) -> CliResult<()> {
    let family = ShapeFamily::from_name(&a.family).map_err(|e| CliError::config(e.to_string()))?;
    let rig = CameraRig::ring(a.views, a.elevation, a.image_size);
    rig.validate()?;
    let spec = MaskSpec {
        mask_ratio: a.mask_ratio,
        n_patches: a.mask_patches,
        rng_seed: a.mask_seed,
    };
    spec.validate()?;
    let inst = generate(family, 1, a.seed)?.remove(0);
    let mesh = mask_faces(&inst.mesh, &spec)?;
    let image = render(&mesh, &rig)?;
    let dir = a
        .dir
        .unwrap_or_else(|| out.join("render").join(format!("{}-{}", family.name(), a.seed)));
    fs::create_dir_all(&dir)?;
    crate::geometry::io::write_off(&dir.join("mesh.off"), &mesh)?;
    let mut files = Vec::new();
    for (v, img) in image.views.iter().enumerate() {
        let p = dir.join(format!("view_{v:02}.pgm"));
        rrm::pgm::write(&p, img)?;
        files.push(p);
    }
    emit(serde_json::json!({
        "command": "render",
        "family": family.name(),
        "faces": mesh.faces.len(),
        "faces_removed": inst.mesh.faces.len() - mesh.faces.len(),
        "views": files,
        "foreground_pixels": image.views.iter().map(|v| v.foreground_count()).collect::<Vec<_>>(),
    }));
    Ok(())
}
