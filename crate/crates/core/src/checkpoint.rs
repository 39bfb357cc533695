//! Model checkpoints and resumable incremental-run state.
//!
//! A model checkpoint is one file:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `XMCILCKP` |
//! | 4 | format version, u32 little-endian (currently 1) |
//! | 8 | header length `h` in bytes, u64 little-endian |
//! | h | UTF-8 JSON [`CheckpointHeader`] |
//! | rest | tensor payload, f64 little-endian, tensors back to back |
//!
//! Each [`TensorEntry`] gives a tensor's name, shape and byte offset into
//! the payload. Names are `<section>/<layer>.<weight|bias>` with sections
//! `point`, `point_twin`, `image`, `adapter` and `head`. The header also
//! stores the SHA-256 of the payload, checked on load.
//!
//! A run-state directory holds `model.ckpt`, `memory.jsonl` (exemplar
//! manifest: sample IDs, labels, ranks) and `state.json` ([`RunState`]).

use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoders::{EncoderConfig, Model};
use crate::error::{Error, Result};
use crate::metrics::AccuracyMatrix;
use crate::nn::Parameters;
use crate::protocol::{CilConfig, CrossModalLearner, TaskLog, TaskStream};
use crate::prototype::{Exemplar, ExemplarMemory};
use crate::synth::Benchmark;

pub const MAGIC: &[u8; 8] = b"XMCILCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the payload.
    pub offset: u64,
}

impl TensorEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenFlags {
    pub point: bool,
    pub image: bool,
    pub point_twin: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub encoder: EncoderConfig,
    pub embed_dim: usize,
    pub image_size: usize,
    pub n_classes: usize,
    pub frozen: FrozenFlags,
    pub adapter_shared_id: String,
    pub tensors: Vec<TensorEntry>,
    pub payload_sha256: String,
    /// Free-form provenance (stage, epoch, seeds).
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn sections(model: &Model) -> Vec<(&'static str, &dyn Parameters)> {
    let mut out: Vec<(&'static str, &dyn Parameters)> = vec![("point", &model.point)];
    if let Some(t) = &model.point_twin {
        out.push(("point_twin", t));
    }
    out.push(("image", &model.image));
    out.push(("adapter", &model.adapter));
    out.push(("head", &model.head));
    out
}

fn tensor_name(section: &str, inner: &str) -> String {
    // Layer names carry their own module prefix (`point.l1.weight`); keep only the layer part.
    let layer = inner.split_once('.').map_or(inner, |(_, rest)| rest);
    format!("{section}/{layer}")
}

/// Serializes `model` into the checkpoint container.
pub fn write_model<W: Write>(mut w: W, model: &Model, encoder: &EncoderConfig, meta: serde_json::Value) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload: Vec<u8> = Vec::with_capacity(8 * 4096);
    for (section, params) in sections(model) {
        params.visit(&mut |name, shape, data| {
            tensors.push(TensorEntry {
                name: tensor_name(section, name),
                shape: shape.to_vec(),
                offset: payload.len() as u64,
            });
            for v in data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        });
    }
    let header = CheckpointHeader {
        encoder: encoder.clone(),
        embed_dim: model.embed_dim(),
        image_size: model.image.image_size,
        n_classes: model.head.n_classes,
        frozen: FrozenFlags {
            point: model.point.frozen,
            image: model.image.frozen,
            point_twin: model.point_twin.as_ref().map(|t| t.frozen),
        },
        adapter_shared_id: model.adapter.shared_id.clone(),
        tensors,
        payload_sha256: hex(&Sha256::digest(&payload)),
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&payload)?;
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Reads only the header of a checkpoint.
pub fn read_header<R: Read>(r: &mut R) -> Result<CheckpointHeader> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("file too short for a checkpoint"))?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let mut n = [0u8; 8];
    r.read_exact(&mut n)?;
    let len = u64::from_le_bytes(n);
    if len > 64 << 20 {
        return Err(bad(format!("header of {len} bytes is implausibly large")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    Ok(serde_json::from_slice(&json)?)
}

/// Deserializes a model written by [`write_model`].
pub fn read_model<R: Read>(mut r: R) -> Result<(Model, CheckpointHeader)> {
    let header = read_header(&mut r)?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if hex(&Sha256::digest(&payload)) != header.payload_sha256 {
        return Err(bad("payload checksum mismatch"));
    }
    let mut model = Model::new(&header.encoder, header.image_size, 0)?;
    if model.point_twin.is_some() != header.frozen.point_twin.is_some() {
        return Err(bad("twin encoder flag disagrees with the encoder config"));
    }
    model.head.grow(header.n_classes);
    model.adapter.shared_id = header.adapter_shared_id.clone();

    let lookup: std::collections::HashMap<&str, &TensorEntry> = header.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    let mut used = 0usize;
    let mut failure: Option<Error> = None;
    let mut fill = |section: &str, params: &mut dyn Parameters| {
        params.visit_mut(&mut |name, data| {
            if failure.is_some() {
                return;
            }
            let key = tensor_name(section, name);
            let Some(entry) = lookup.get(key.as_str()) else {
                failure = Some(bad(format!("missing tensor {key}")));
                return;
            };
            if entry.len() != data.len() {
                failure = Some(bad(format!("tensor {key} has {} values, model expects {}", entry.len(), data.len())));
                return;
            }
            let start = entry.offset as usize;
            let Some(bytes) = payload.get(start..start + 8 * data.len()) else {
                failure = Some(bad(format!("tensor {key} runs past the payload")));
                return;
            };
            for (x, b) in data.iter_mut().zip(bytes.chunks_exact(8)) {
                *x = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
            }
            used += 1;
        });
    };
    fill("point", &mut model.point);
    if let Some(t) = &mut model.point_twin {
        fill("point_twin", t);
    }
    fill("image", &mut model.image);
    fill("adapter", &mut model.adapter);
    fill("head", &mut model.head);
    if let Some(e) = failure {
        return Err(e);
    }
    if used != header.tensors.len() {
        return Err(bad(format!("{} tensors in file, {used} used by the model", header.tensors.len())));
    }
    model.point.frozen = header.frozen.point;
    model.image.frozen = header.frozen.image;
    if let (Some(t), Some(f)) = (&mut model.point_twin, header.frozen.point_twin) {
        t.frozen = f;
    }
    Ok((model, header))
}

pub fn save_model(path: &Path, model: &Model, encoder: &EncoderConfig, meta: serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    write_model(&mut buf, model, encoder, meta)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(Model, CheckpointHeader)> {
    read_model(BufReader::new(fs::File::open(path)?))
}

/// Everything besides the model needed to continue an incremental run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_seed: u64,
    pub cil: CilConfig,
    pub stream: TaskStream,
    pub memory_budget: usize,
    pub selection_seed: u64,
    pub matrix: AccuracyMatrix,
    pub logs: Vec<TaskLog>,
}

impl RunState {
    pub fn completed_tasks(&self) -> usize {
        self.matrix.rows.len()
    }
}

/// Writes `model.ckpt`, `memory.jsonl` and `state.json` into `dir`.
pub fn save_run_state(
    dir: &Path,
    learner: &CrossModalLearner,
    encoder: &EncoderConfig,
    stream: &TaskStream,
    matrix: &AccuracyMatrix,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let state = RunState {
        run_seed: learner.run_seed,
        cil: learner.cfg.clone(),
        stream: stream.clone(),
        memory_budget: learner.memory.budget,
        selection_seed: learner.memory.selection_seed,
        matrix: matrix.clone(),
        logs: learner.logs.clone(),
    };
    let meta = serde_json::json!({ "stage": "cil", "completed_tasks": state.completed_tasks() });
    save_model(&dir.join("model.ckpt"), &learner.model, encoder, meta)?;
    let mut mem = Vec::new();
    learner.memory.write_manifest(&mut mem)?;
    fs::write(dir.join("memory.jsonl"), mem)?;
    fs::write(dir.join("state.json"), serde_json::to_vec_pretty(&state)?)?;
    Ok(())
}

/// Rebuilds the learner saved by [`save_run_state`]. Exemplar images are
/// looked up in `bench` by sample ID.
pub fn load_run_state(dir: &Path, bench: &Benchmark) -> Result<(CrossModalLearner, RunState, EncoderConfig)> {
    let state: RunState = serde_json::from_slice(&fs::read(dir.join("state.json"))?)?;
    let (model, header) = load_model(&dir.join("model.ckpt"))?;
    let entries = ExemplarMemory::read_manifest(BufReader::new(fs::File::open(dir.join("memory.jsonl"))?))?;
    let memory = ExemplarMemory::from_manifest(state.memory_budget, state.selection_seed, &entries, |id| {
        let s = bench.train.iter().find(|s| s.id == id)?;
        let label = entries.iter().find(|e| e.sample_id == id)?.label;
        Some(Exemplar {
            sample_id: s.id.clone(),
            label,
            image: s.image.clone(),
            cloud: None,
        })
    })?;
    let learner = CrossModalLearner::resume(model, state.cil.clone(), state.run_seed, memory, state.logs.clone())?;
    Ok((learner, state, header.encoder))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(twin: bool) -> (Model, EncoderConfig) {
        let cfg = EncoderConfig {
            embed_dim: 8,
            point_hidden: (4, 6),
            image_hidden: 5,
            adapter_hidden: 3,
            twin_point_encoders: twin,
            ..Default::default()
        };
        let mut m = Model::new(&cfg, 8, 3).unwrap();
        m.head.grow(3);
        m.head.columns.iter_mut().enumerate().for_each(|(i, c)| *c = i as f64 * 0.25 - 1.0);
        m.adapter.up.weight[0] = 0.5;
        m.adapter.shared_id = "adapter-x".into();
        m.freeze_backbones();
        (m, cfg)
    }

    #[test]
    fn round_trip_is_bitwise() {
        for twin in [false, true] {
            let (m, cfg) = model(twin);
            let mut buf = Vec::new();
            write_model(&mut buf, &m, &cfg, serde_json::json!({"epoch": 4})).unwrap();
            assert_eq!(&buf[..8], MAGIC);
            let (back, header) = read_model(buf.as_slice()).unwrap();
            assert_eq!(back, m);
            assert_eq!(header.n_classes, 3);
            assert_eq!(header.meta["epoch"], 4);
            assert!(header.frozen.point && header.frozen.image);
            assert_eq!(header.tensors[0].name, "point/l1.weight");
            let header_len = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
            let payload = buf.len() - 20 - header_len;
            assert_eq!(header.tensors.iter().map(TensorEntry::len).sum::<usize>() * 8, payload);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let (m, cfg) = model(false);
        let mut buf = Vec::new();
        write_model(&mut buf, &m, &cfg, serde_json::Value::Null).unwrap();
        let mut flipped = buf.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert!(matches!(read_model(flipped.as_slice()), Err(Error::Checkpoint(_))));
        let mut magic = buf.clone();
        magic[0] = b'Y';
        assert!(matches!(read_model(magic.as_slice()), Err(Error::Checkpoint(_))));
        assert!(read_model(&buf[..buf.len() - 8]).is_err());
        assert!(read_model(&buf[..10]).is_err());
    }
}
