//! Independently trained class and painter classifiers used to score
//! generated images, and the embedding they provide for FID/KID/IS.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::{nn, Device, Kind, Tensor};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::networks::layers::ParamInit;
use crate::networks::{named_tensors, Classifier};
use crate::objectives::class_loss_d;
use crate::trainer::checkpoint::{append_tensor, dtype_name, read_tensor, Entry};
use crate::trainer::Adam;

const PROBE_MAGIC: &[u8; 8] = b"SKGPROBE";
const PROBE_FORMAT: &str = "sketchgan-probes/1";
const EVAL_CHUNK: i64 = 256;
/// Random translation applied to probe training images, in pixels.
const MAX_SHIFT: i64 = 2;

/// Maps images to a feature vector and to class probabilities.
pub trait EmbeddingExtractor {
    fn name(&self) -> &str;
    fn features(&self, images: &Tensor) -> Result<Tensor>;
    fn probabilities(&self, images: &Tensor) -> Result<Tensor>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub base_channels: usize,
    pub hidden: usize,
    /// Every n-th sample is held out to measure accuracy.
    pub held_out_every: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 8,
            batch_size: 32,
            lr: 1e-3,
            base_channels: 16,
            hidden: 64,
            held_out_every: 5,
            seed: 0,
        }
    }
}

/// One frozen classifier.
pub struct Probe {
    vs: nn::VarStore,
    net: Classifier,
    resolution: usize,
    pub held_out_accuracy: f64,
}

impl std::fmt::Debug for Probe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Probe")
            .field("classes", &self.net.classes())
            .field("held_out_accuracy", &self.held_out_accuracy)
            .finish()
    }
}

impl Probe {
    fn new(resolution: usize, cfg: &ProbeConfig, classes: usize, stream: u64) -> Self {
        let vs = nn::VarStore::new(Device::Cpu);
        let mut init = ParamInit::new(cfg.seed, 100 + stream);
        let net = Classifier::new(&vs.root(), &mut init, resolution, cfg.base_channels, cfg.hidden, classes);
        Probe {
            vs,
            net,
            resolution,
            held_out_accuracy: f64::NAN,
        }
    }

    pub fn classes(&self) -> usize {
        self.net.classes() as usize
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    fn chunked(&self, images: &Tensor, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<Tensor> {
        let n = images.size()[0];
        let x = images.to_kind(Kind::Float);
        tch::no_grad(|| {
            let mut parts = Vec::new();
            let mut i = 0;
            while i < n {
                let len = EVAL_CHUNK.min(n - i);
                parts.push(f(&x.narrow(0, i, len))?);
                i += len;
            }
            if parts.is_empty() {
                return Err(Error::InvalidArgument("no images to classify".into()));
            }
            Ok(Tensor::cat(&parts, 0))
        })
    }

    pub fn logits(&self, images: &Tensor) -> Result<Tensor> {
        self.chunked(images, |x| self.net.logits(x))
    }

    /// Top-1 predicted labels.
    pub fn predict(&self, images: &Tensor) -> Result<Vec<usize>> {
        let idx = self.logits(images)?.argmax(1, false);
        Ok(Vec::<i64>::try_from(&idx)?.into_iter().map(|v| v as usize).collect())
    }

    fn train(&mut self, ds: &Dataset, labels: &[usize], cfg: &ProbeConfig, rng: &mut ChaCha8Rng) -> Result<()> {
        let hold = cfg.held_out_every.max(2);
        let (held, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|i| i % hold == 0);
        let params = named_tensors(&self.vs, true);
        let mut opt = Adam::new(&params, 0.9, 0.999, 1e-8);
        let label_tensor = |idx: &[usize]| Tensor::from_slice(&idx.iter().map(|&i| labels[i] as i64).collect::<Vec<_>>());
        let mut order = train.clone();
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(cfg.batch_size) {
                let mut x = ds.sketch_batch(chunk, Kind::Float)?;
                let (dx, dy) = (rng.gen_range(-MAX_SHIFT..=MAX_SHIFT), rng.gen_range(-MAX_SHIFT..=MAX_SHIFT));
                // background is -1 after the [0, 1] -> [-1, 1] remap, ink is +1
                x = shift(&x, dx, dy);
                for (_, p) in &params {
                    let mut g = p.grad();
                    if g.defined() {
                        let _ = g.zero_();
                    }
                }
                class_loss_d(&self.net.logits(&x)?, &label_tensor(chunk))?.backward();
                opt.step(&params, cfg.lr);
            }
        }
        self.vs.freeze();
        let eval = if held.is_empty() { &train } else { &held };
        let pred = self.predict(&ds.sketch_batch(eval, Kind::Float)?)?;
        let hits = eval.iter().zip(&pred).filter(|(&i, &p)| labels[i] == p).count();
        self.held_out_accuracy = hits as f64 / eval.len() as f64;
        Ok(())
    }
}

/// Translates images by whole pixels, filling with the background value.
fn shift(x: &Tensor, dx: i64, dy: i64) -> Tensor {
    if dx == 0 && dy == 0 {
        return x.shallow_clone();
    }
    let s = x.size();
    let (h, w) = (s[2], s[3]);
    let pad = MAX_SHIFT;
    let padded = (x + 1.0).constant_pad_nd([pad, pad, pad, pad]) - 1.0;
    padded.narrow(2, pad - dy, h).narrow(3, pad - dx, w)
}

impl EmbeddingExtractor for Probe {
    fn name(&self) -> &str {
        "proxy:class-probe"
    }

    fn features(&self, images: &Tensor) -> Result<Tensor> {
        self.chunked(images, |x| self.net.features(x))
    }

    fn probabilities(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.logits(images)?.softmax(1, Kind::Float))
    }
}

/// The class probe and painter probe together, plus the painters the painter
/// probe knows.
#[derive(Debug)]
pub struct Probes {
    pub class: Probe,
    pub painter: Probe,
    pub painter_names: Vec<String>,
}

/// Trains both probes on `independent`, whose painters must not appear in
/// `excluded_painters` (the painters of the generator's train and test data).
pub fn train_probes(independent: &Dataset, excluded_painters: &BTreeSet<&str>, cfg: &ProbeConfig) -> Result<Probes> {
    let shared: Vec<&str> = independent
        .painter_identities()
        .into_iter()
        .filter(|p| excluded_painters.contains(p))
        .collect();
    if !shared.is_empty() {
        return Err(Error::Data(format!(
            "probe dataset shares painters with the generator's data: {shared:?}"
        )));
    }
    if independent.len() < 2 {
        return Err(Error::Data("probe dataset needs at least 2 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let res = independent.resolution();
    let classes: Vec<usize> = independent.samples().iter().map(|s| s.class_label).collect();
    let painters: Vec<usize> = independent.samples().iter().map(|s| s.painter_label).collect();
    let mut class = Probe::new(res, cfg, independent.class_count(), 0);
    class.train(independent, &classes, cfg, &mut rng)?;
    let mut painter = Probe::new(res, cfg, independent.painter_count(), 1);
    painter.train(independent, &painters, cfg, &mut rng)?;
    Ok(Probes {
        class,
        painter,
        painter_names: independent.painter_names().to_vec(),
    })
}

/// Top-1 accuracy of `probe` on `images` against `labels`.
pub fn probe_accuracy(images: &Tensor, labels: &[usize], probe: &Probe) -> Result<f64> {
    if labels.is_empty() || images.size()[0] != labels.len() as i64 {
        return Err(Error::InvalidArgument(format!(
            "{} images with {} labels",
            images.size()[0],
            labels.len()
        )));
    }
    let pred = probe.predict(images)?;
    Ok(pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64)
}

/// Fraction of images the class probe assigns to their intended class.
pub fn content_accuracy(images: &Tensor, labels: &[usize], class_probe: &Probe) -> Result<f64> {
    probe_accuracy(images, labels, class_probe)
}

/// Fraction of images the painter probe attributes to the intended painter.
pub fn painter_accuracy(images: &Tensor, painters: &[usize], painter_probe: &Probe) -> Result<f64> {
    probe_accuracy(images, painters, painter_probe)
}

#[derive(Serialize, Deserialize)]
struct ProbeHeader {
    format: String,
    resolution: usize,
    base_channels: usize,
    hidden: usize,
    class_count: usize,
    painter_count: usize,
    class_accuracy: f64,
    painter_accuracy: f64,
    painter_names: Vec<String>,
    tensors: Vec<Entry>,
}

impl Probes {
    pub fn save(&self, path: &Path, cfg: &ProbeConfig) -> Result<()> {
        let mut data = Vec::new();
        let mut tensors = Vec::new();
        for (group, probe) in [("class", &self.class), ("painter", &self.painter)] {
            for (name, t) in named_tensors(&probe.vs, false) {
                tensors.push(Entry {
                    group: group.into(),
                    name,
                    shape: t.size(),
                    dtype: dtype_name(t.kind())?.into(),
                    offset: data.len() as u64,
                });
                append_tensor(&mut data, &t)?;
            }
        }
        let header = ProbeHeader {
            format: PROBE_FORMAT.into(),
            resolution: self.class.resolution,
            base_channels: cfg.base_channels,
            hidden: cfg.hidden,
            class_count: self.class.classes(),
            painter_count: self.painter.classes(),
            class_accuracy: self.class.held_out_accuracy,
            painter_accuracy: self.painter.held_out_accuracy,
            painter_names: self.painter_names.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(PROBE_MAGIC);
        bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&json);
        bytes.extend_from_slice(&data);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Probes> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[..8] != PROBE_MAGIC {
            return Err(Error::Checkpoint(format!("{} is not a probe archive", path.display())));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let json = bytes
            .get(16..16 + len)
            .ok_or_else(|| Error::Checkpoint("truncated probe header".into()))?;
        let h: ProbeHeader =
            serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("unreadable probe header: {e}")))?;
        if h.format != PROBE_FORMAT {
            return Err(Error::Version(format!("probe format {:?}, expected {PROBE_FORMAT:?}", h.format)));
        }
        let data = &bytes[16 + len..];
        let cfg = ProbeConfig {
            base_channels: h.base_channels,
            hidden: h.hidden,
            ..ProbeConfig::default()
        };
        let mut out = Vec::new();
        for (group, classes, acc) in [
            ("class", h.class_count, h.class_accuracy),
            ("painter", h.painter_count, h.painter_accuracy),
        ] {
            let mut probe = Probe::new(h.resolution, &cfg, classes, 0);
            let own = named_tensors(&probe.vs, false);
            let saved: Vec<&Entry> = h.tensors.iter().filter(|e| e.group == group).collect();
            if saved.len() != own.len() {
                return Err(Error::Checkpoint(format!("{group} probe: tensor count mismatch")));
            }
            tch::no_grad(|| {
                for ((name, dst), e) in own.iter().zip(&saved) {
                    let src = read_tensor(data, e)?;
                    if name != &e.name || src.size() != dst.size() {
                        return Err(Error::Checkpoint(format!("{group} probe: tensor {} does not fit", e.name)));
                    }
                    dst.shallow_clone().copy_(&src);
                }
                Ok(())
            })?;
            probe.vs.freeze();
            probe.held_out_accuracy = acc;
            out.push(probe);
        }
        let painter = out.pop().unwrap();
        let class = out.pop().unwrap();
        Ok(Probes {
            class,
            painter,
            painter_names: h.painter_names,
        })
    }
}
