//! The five cooperating networks and the style-conditioning types.
//!
//! * generator: U-Net over the content icon, style injected by conditional
//!   batch norm ([`Generator`])
//! * style encoder: sketch to diagonal-Gaussian style posterior ([`StyleEncoder`])
//! * discriminator: real/fake probability ([`Discriminator`])
//! * class recognizer and painter identifier: [`Classifier`]s with
//!   independent parameters

pub mod critics;
pub mod generator;
pub mod layers;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use tch::{nn, Device, Kind, Tensor};

pub use critics::{Backbone, Classifier, Discriminator, StyleEncoder, LOG_VARIANCE_BOUND};
pub use generator::Generator;
pub use layers::{ConditionalBatchNorm, ParamInit};

use crate::error::{Error, Result};

/// Style sites in the generator: the bottleneck and three decoder stages.
pub const CBN_SITES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub resolution: usize,
    /// Length of the style vector (random or reference style).
    pub style_dim: usize,
    /// Length of the additive noise vector appended to the style.
    pub noise_dim: usize,
    pub base_channels: usize,
    /// Number of equal chunks the style condition is split into.
    pub cbn_sites: usize,
    /// Width of the classifiers' penultimate layer.
    pub classifier_hidden: usize,
    pub class_count: usize,
    pub painter_count: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            resolution: 128,
            style_dim: 32,
            noise_dim: 32,
            base_channels: 64,
            cbn_sites: CBN_SITES,
            classifier_hidden: 128,
            class_count: 1,
            painter_count: 1,
        }
    }
}

impl ModelConfig {
    /// Defaults scaled to a resolution: 64 base channels at 128 px, 32 below.
    pub fn for_resolution(resolution: usize, class_count: usize, painter_count: usize) -> Self {
        ModelConfig {
            resolution,
            base_channels: if resolution >= 128 { 64 } else { 32 },
            class_count,
            painter_count,
            ..ModelConfig::default()
        }
    }

    pub fn condition_len(&self) -> usize {
        self.style_dim + self.noise_dim
    }

    pub fn chunk_len(&self) -> usize {
        self.condition_len() / self.cbn_sites
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 || self.resolution % 8 != 0 {
            return Err(Error::Config(format!(
                "resolution must be a positive multiple of 8 (three downsamplings), got {}",
                self.resolution
            )));
        }
        if self.style_dim == 0 || self.base_channels == 0 || self.classifier_hidden == 0 {
            return Err(Error::Config("style_dim, base_channels and classifier_hidden must be positive".into()));
        }
        if self.cbn_sites != CBN_SITES {
            return Err(Error::Config(format!(
                "the generator has {CBN_SITES} style sites, cbn_sites = {}",
                self.cbn_sites
            )));
        }
        if self.condition_len() % self.cbn_sites != 0 {
            return Err(Error::Config(format!(
                "style_dim + noise_dim = {} is not divisible by cbn_sites = {}",
                self.condition_len(),
                self.cbn_sites
            )));
        }
        if self.class_count == 0 || self.painter_count == 0 {
            return Err(Error::Config("class_count and painter_count must be positive".into()));
        }
        Ok(())
    }
}

/// A batch of style vectors, `[B, style_dim]`.
#[derive(Debug)]
pub struct StyleVector {
    values: Tensor,
}

impl StyleVector {
    pub fn new(values: Tensor, style_dim: usize) -> Result<Self> {
        let s = values.size();
        if s.len() != 2 || s[1] != style_dim as i64 {
            return Err(Error::Shape(format!("style vector must be [B, {style_dim}], got {s:?}")));
        }
        Ok(StyleVector { values })
    }

    /// Draws `batch` styles from the standard-normal prior.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, batch: usize, style_dim: usize, kind: Kind) -> Self {
        StyleVector {
            values: gaussian(rng, &[batch as i64, style_dim as i64], kind),
        }
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_tensor(self) -> Tensor {
        self.values
    }

    pub fn batch(&self) -> i64 {
        self.values.size()[0]
    }

    pub fn len(&self) -> usize {
        self.values.size()[1] as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.values.isfinite().all().int64_value(&[]) != 0
    }
}

/// Diagonal-Gaussian style posterior produced by the style encoder.
#[derive(Debug)]
pub struct StylePosterior {
    pub mean: Tensor,
    pub log_variance: Tensor,
}

impl StylePosterior {
    pub fn mean_style(&self) -> StyleVector {
        StyleVector {
            values: self.mean.shallow_clone(),
        }
    }

    /// Reparameterized sample `mean + exp(log_variance / 2) * eps`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StyleVector {
        let eps = gaussian(rng, &self.mean.size(), self.mean.kind());
        StyleVector {
            values: &self.mean + (&self.log_variance * 0.5).exp() * eps,
        }
    }
}

/// Style vector concatenated with per-sample noise, `[B, style_dim + noise_dim]`.
#[derive(Debug)]
pub struct StyleCondition {
    values: Tensor,
}

impl StyleCondition {
    pub fn new(values: Tensor, sites: usize) -> Result<Self> {
        let s = values.size();
        if s.len() != 2 || sites == 0 || s[1] % sites as i64 != 0 {
            return Err(Error::Shape(format!(
                "style condition {s:?} cannot be split into {sites} equal chunks"
            )));
        }
        Ok(StyleCondition { values })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// The `k` equal chunks, in order; chunk `i` drives style site `i`.
    pub fn chunks(&self, k: usize) -> Vec<Tensor> {
        self.values.chunk(k as i64, 1)
    }
}

/// Builds the generator's style condition `concat(style, z_n)` with a fresh
/// standard-normal `z_n` of length `noise_dim`.
pub fn make_style_condition<R: Rng + ?Sized>(
    style: &StyleVector,
    noise_dim: usize,
    rng: &mut R,
) -> Result<StyleCondition> {
    let noise = gaussian(rng, &[style.batch(), noise_dim as i64], style.values.kind());
    condition_with_noise(style, &noise)
}

/// `concat(style, noise)` with caller-supplied noise.
pub fn condition_with_noise(style: &StyleVector, noise: &Tensor) -> Result<StyleCondition> {
    let ns = noise.size();
    if ns.len() != 2 || ns[0] != style.batch() {
        return Err(Error::Shape(format!(
            "noise {ns:?} does not match {} style vectors",
            style.batch()
        )));
    }
    let values = Tensor::cat(&[style.values.shallow_clone(), noise.to_kind(style.values.kind())], 1);
    let sites = CBN_SITES;
    StyleCondition::new(values, sites)
}

/// Encoder features of a content icon: three levels at 1/2, 1/4 and 1/8 of the
/// resolution plus the bottleneck.
#[derive(Debug)]
pub struct FeaturePyramid {
    pub levels: Vec<Tensor>,
    pub bottleneck: Tensor,
}

/// Standard-normal samples drawn on the host from `rng`.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, shape: &[i64], kind: Kind) -> Tensor {
    let n: i64 = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    Tensor::from_slice(&data).view(shape).to_kind(kind)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetId {
    Generator,
    StyleEncoder,
    Discriminator,
    Recognizer,
    Identifier,
}

impl NetId {
    pub const ALL: [NetId; 5] = [
        NetId::Generator,
        NetId::StyleEncoder,
        NetId::Discriminator,
        NetId::Recognizer,
        NetId::Identifier,
    ];
    pub const CRITICS: [NetId; 3] = [NetId::Discriminator, NetId::Recognizer, NetId::Identifier];
    pub const GENERATORS: [NetId; 2] = [NetId::Generator, NetId::StyleEncoder];

    pub fn name(self) -> &'static str {
        match self {
            NetId::Generator => "generator",
            NetId::StyleEncoder => "style_encoder",
            NetId::Discriminator => "discriminator",
            NetId::Recognizer => "recognizer",
            NetId::Identifier => "identifier",
        }
    }

    fn index(self) -> usize {
        NetId::ALL.iter().position(|&n| n == self).unwrap()
    }
}

fn is_buffer(name: &str) -> bool {
    name.ends_with("running_mean") || name.ends_with("running_var")
}

/// Named tensors of a var store sorted by name; `trainable_only` drops the
/// batch-norm running statistics.
pub fn named_tensors(vs: &nn::VarStore, trainable_only: bool) -> Vec<(String, Tensor)> {
    let mut v: Vec<(String, Tensor)> = vs
        .variables()
        .into_iter()
        .filter(|(name, _)| !trainable_only || !is_buffer(name))
        .collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

/// All five networks, each with its own parameter store.
pub struct Networks {
    cfg: ModelConfig,
    stores: Vec<nn::VarStore>,
    pub generator: Generator,
    pub encoder: StyleEncoder,
    pub discriminator: Discriminator,
    pub recognizer: Classifier,
    pub identifier: Classifier,
}

impl std::fmt::Debug for Networks {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Networks").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Networks {
    /// Initializes every network from `seed` (weights N(0, 0.02), biases 0).
    /// `kind` is `Float` for training and `Double` for gradient checks.
    pub fn new(cfg: &ModelConfig, seed: u64, kind: Kind) -> Result<Self> {
        cfg.validate()?;
        let mut stores: Vec<nn::VarStore> = (0..5).map(|_| nn::VarStore::new(Device::Cpu)).collect();
        let init = |id: NetId| ParamInit::new(seed, id.index() as u64 + 1);
        let generator = Generator::new(&stores[0].root(), &mut init(NetId::Generator), cfg);
        let encoder = StyleEncoder::new(&stores[1].root(), &mut init(NetId::StyleEncoder), cfg);
        let discriminator = Discriminator::new(&stores[2].root(), &mut init(NetId::Discriminator), cfg);
        let recognizer = Classifier::new(
            &stores[3].root(),
            &mut init(NetId::Recognizer),
            cfg.resolution,
            cfg.base_channels,
            cfg.classifier_hidden,
            cfg.class_count,
        );
        let identifier = Classifier::new(
            &stores[4].root(),
            &mut init(NetId::Identifier),
            cfg.resolution,
            cfg.base_channels,
            cfg.classifier_hidden,
            cfg.painter_count,
        );
        if kind != Kind::Float {
            for vs in stores.iter_mut() {
                vs.set_kind(kind);
            }
        }
        Ok(Networks {
            cfg: cfg.clone(),
            stores,
            generator,
            encoder,
            discriminator,
            recognizer,
            identifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn kind(&self) -> Kind {
        self.stores[0].kind()
    }

    pub fn store(&self, id: NetId) -> &nn::VarStore {
        &self.stores[id.index()]
    }

    pub fn freeze(&mut self, ids: &[NetId]) {
        for &id in ids {
            self.stores[id.index()].freeze();
        }
    }

    pub fn unfreeze(&mut self, ids: &[NetId]) {
        for &id in ids {
            self.stores[id.index()].unfreeze();
        }
    }

    pub fn parameters(&self, id: NetId) -> Vec<(String, Tensor)> {
        named_tensors(self.store(id), true)
    }

    /// Parameters and batch-norm running statistics.
    pub fn state(&self, id: NetId) -> Vec<(String, Tensor)> {
        named_tensors(self.store(id), false)
    }

    /// Copies values into this model's tensors, matching by name.
    pub fn load_state(&mut self, id: NetId, values: &[(String, Tensor)]) -> Result<()> {
        let own = self.state(id);
        if own.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "{}: {} tensors stored, model has {}",
                id.name(),
                values.len(),
                own.len()
            )));
        }
        tch::no_grad(|| {
            for ((name, dst), (src_name, src)) in own.iter().zip(values) {
                if name != src_name || dst.size() != src.size() {
                    return Err(Error::Checkpoint(format!(
                        "{}: tensor {src_name} {:?} does not fit {name} {:?}",
                        id.name(),
                        src.size(),
                        dst.size()
                    )));
                }
                let mut dst = dst.shallow_clone();
                dst.copy_(&src.to_kind(dst.kind()));
            }
            Ok(())
        })
    }
}
