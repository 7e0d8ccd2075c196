//! Checkpoint archive: `SKGANCKP`, a little-endian `u32` version, a `u64`
//! header length, a JSON header, then raw little-endian tensor data at the
//! offsets listed in the header.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use super::{GradNorms, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::networks::{ModelConfig, NetId};
use crate::objectives::LossWeights;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SKGANCKP";
pub const CHECKPOINT_FORMAT: &str = "sketchgan-checkpoint/1";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    model: ModelConfig,
    train: TrainConfig,
    epoch: usize,
    batch_in_epoch: usize,
    step: u64,
    weights: LossWeights,
    grad_norms: GradNorms,
    consecutive_aborts: u32,
    optimizer_steps: Vec<u64>,
    tensors: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct Entry {
    pub group: String,
    pub name: String,
    pub shape: Vec<i64>,
    pub dtype: String,
    pub offset: u64,
}

pub(crate) fn dtype_name(kind: Kind) -> Result<&'static str> {
    match kind {
        Kind::Float => Ok("f32"),
        Kind::Double => Ok("f64"),
        k => Err(Error::Checkpoint(format!("unsupported tensor kind {k:?}"))),
    }
}

pub(crate) fn append_tensor(data: &mut Vec<u8>, t: &Tensor) -> Result<()> {
    let flat = t.detach().contiguous().view([-1]);
    match t.kind() {
        Kind::Float => {
            for v in Vec::<f32>::try_from(&flat)? {
                data.extend_from_slice(&v.to_le_bytes());
            }
        }
        Kind::Double => {
            for v in Vec::<f64>::try_from(&flat)? {
                data.extend_from_slice(&v.to_le_bytes());
            }
        }
        k => return Err(Error::Checkpoint(format!("unsupported tensor kind {k:?}"))),
    }
    Ok(())
}

fn groups(trainer: &Trainer) -> Vec<(String, Vec<(String, Tensor)>)> {
    let mut out = Vec::new();
    for id in NetId::ALL {
        out.push((id.name().to_string(), trainer.nets.state(id)));
    }
    for (id, opt) in NetId::ALL.iter().zip(&trainer.state.optimizers) {
        out.push((
            format!("adam_m/{}", id.name()),
            opt.moments.iter().map(|m| (m.name.clone(), m.m.shallow_clone())).collect(),
        ));
        out.push((
            format!("adam_v/{}", id.name()),
            opt.moments.iter().map(|m| (m.name.clone(), m.v.shallow_clone())).collect(),
        ));
    }
    out
}

/// Writes every parameter, optimizer moment and counter of `trainer`.
pub fn save_checkpoint(trainer: &Trainer, path: &Path) -> Result<()> {
    let mut data = Vec::new();
    let mut entries = Vec::new();
    for (group, tensors) in groups(trainer) {
        for (name, t) in tensors {
            entries.push(Entry {
                group: group.clone(),
                name,
                shape: t.size(),
                dtype: dtype_name(t.kind())?.to_string(),
                offset: data.len() as u64,
            });
            append_tensor(&mut data, &t)?;
        }
    }
    let st = &trainer.state;
    let header = Header {
        format: CHECKPOINT_FORMAT.to_string(),
        model: trainer.model_config().clone(),
        train: trainer.cfg.clone(),
        epoch: st.epoch,
        batch_in_epoch: st.batch_in_epoch,
        step: st.step,
        weights: st.weights,
        grad_norms: st.grad_norms,
        consecutive_aborts: st.consecutive_aborts,
        optimizer_steps: st.optimizers.iter().map(|o| o.steps).collect(),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(20 + json.len() + data.len());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&data);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_tensor(data: &[u8], e: &Entry) -> Result<Tensor> {
    let n: i64 = e.shape.iter().product();
    let (width, kind) = match e.dtype.as_str() {
        "f32" => (4usize, Kind::Float),
        "f64" => (8, Kind::Double),
        d => return Err(Error::Checkpoint(format!("{}/{}: unknown dtype {d}", e.group, e.name))),
    };
    let start = e.offset as usize;
    let end = start + n as usize * width;
    let bytes = data
        .get(start..end)
        .ok_or_else(|| Error::Checkpoint(format!("{}/{}: truncated tensor data", e.group, e.name)))?;
    let t = if kind == Kind::Float {
        let v: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::from_slice(&v)
    } else {
        let v: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::from_slice(&v)
    };
    Ok(t.view(e.shape.as_slice()))
}

fn parse(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a sketchgan checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version(format!("archive version {version}, expected {VERSION}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let json = bytes
        .get(20..20 + len)
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("unreadable header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Version(format!(
            "format tag {:?}, expected {CHECKPOINT_FORMAT:?}",
            header.format
        )));
    }
    Ok((header, &bytes[20 + len..]))
}

/// Restores a trainer exactly as saved.
pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (h, data) = parse(&bytes)?;
    let kind = match h.tensors.first().map(|e| e.dtype.as_str()) {
        Some("f64") => Kind::Double,
        _ => Kind::Float,
    };
    let mut trainer = Trainer::with_kind(&h.model, &h.train, kind)?;
    let mut by_group: std::collections::BTreeMap<&str, Vec<(String, Tensor)>> = Default::default();
    for e in &h.tensors {
        by_group
            .entry(e.group.as_str())
            .or_default()
            .push((e.name.clone(), read_tensor(data, e)?));
    }
    let mut take = |g: String| {
        by_group
            .remove(g.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor group {g}")))
    };
    for id in NetId::ALL {
        let values = take(id.name().to_string())?;
        trainer.nets.load_state(id, &values)?;
    }
    if h.optimizer_steps.len() != NetId::ALL.len() {
        return Err(Error::Checkpoint("optimizer state for every network expected".into()));
    }
    for (i, id) in NetId::ALL.iter().enumerate() {
        let ms = take(format!("adam_m/{}", id.name()))?;
        let vs = take(format!("adam_v/{}", id.name()))?;
        let opt = &mut trainer.state.optimizers[i];
        if ms.len() != opt.moments.len() || vs.len() != opt.moments.len() {
            return Err(Error::Checkpoint(format!("{}: optimizer moment count mismatch", id.name())));
        }
        opt.steps = h.optimizer_steps[i];
        tch::no_grad(|| {
            for ((mo, (mn, m)), (_, v)) in opt.moments.iter_mut().zip(&ms).zip(&vs) {
                if &mo.name != mn || mo.m.size() != m.size() {
                    return Err(Error::Checkpoint(format!("{}: moment {mn} does not fit", id.name())));
                }
                mo.m.copy_(m);
                mo.v.copy_(v);
            }
            Ok(())
        })?;
    }
    let st = &mut trainer.state;
    st.epoch = h.epoch;
    st.batch_in_epoch = h.batch_in_epoch;
    st.step = h.step;
    st.weights = h.weights;
    st.grad_norms = h.grad_norms;
    st.consecutive_aborts = h.consecutive_aborts;
    Ok(trainer)
}

/// Like [`load_checkpoint`], failing with a version error when the archive
/// was written for a different model configuration.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelConfig) -> Result<Trainer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (h, _) = parse(&bytes)?;
    if &h.model != expected {
        return Err(Error::Version(format!(
            "checkpoint model {:?} does not match expected {:?}",
            h.model, expected
        )));
    }
    load_checkpoint(path)
}
