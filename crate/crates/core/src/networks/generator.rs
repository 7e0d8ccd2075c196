//! U-Net generator: the content icon is encoded by three stride-2 levels, the
//! decoder resamples its running features to each skip's resolution,
//! concatenates the skip, and is modulated by one style chunk per stage.

use tch::{nn, Tensor};

use super::layers::{check_image, leaky_relu, upsample, BatchNorm, ConditionalBatchNorm, Conv2d, ParamInit};
use super::{FeaturePyramid, ModelConfig, StyleCondition, CBN_SITES};
use crate::error::{Error, Result};

#[derive(Debug)]
struct EncoderLevel {
    down: Conv2d,
    bn1: BatchNorm,
    conv: Conv2d,
    bn2: BatchNorm,
}

impl EncoderLevel {
    fn new(p: &nn::Path, init: &mut ParamInit, cin: i64, cout: i64) -> Self {
        EncoderLevel {
            down: Conv2d::new(&(p / "down"), init, cin, cout, 2),
            bn1: BatchNorm::new(&(p / "bn1"), cout),
            conv: Conv2d::new(&(p / "conv"), init, cout, cout, 1),
            bn2: BatchNorm::new(&(p / "bn2"), cout),
        }
    }

    fn forward(&self, x: &Tensor, train: bool) -> Tensor {
        let h = leaky_relu(&self.bn1.forward(&self.down.forward(x), train));
        leaky_relu(&self.bn2.forward(&self.conv.forward(&h), train))
    }
}

/// conv -> CBN -> lrelu -> conv -> CBN -> lrelu, both CBNs driven by the same
/// style chunk.
#[derive(Debug)]
struct StyledBlock {
    conv1: Conv2d,
    cbn1: ConditionalBatchNorm,
    conv2: Conv2d,
    cbn2: ConditionalBatchNorm,
}

impl StyledBlock {
    fn new(p: &nn::Path, init: &mut ParamInit, cin: i64, cout: i64, chunk_len: i64) -> Self {
        StyledBlock {
            conv1: Conv2d::new(&(p / "conv1"), init, cin, cout, 1),
            cbn1: ConditionalBatchNorm::new(&(p / "cbn1"), init, cout, chunk_len),
            conv2: Conv2d::new(&(p / "conv2"), init, cout, cout, 1),
            cbn2: ConditionalBatchNorm::new(&(p / "cbn2"), init, cout, chunk_len),
        }
    }

    fn forward(&self, x: &Tensor, chunk: &Tensor, train: bool) -> Result<Tensor> {
        let h = leaky_relu(&self.cbn1.forward(&self.conv1.forward(x), chunk, train)?);
        Ok(leaky_relu(&self.cbn2.forward(&self.conv2.forward(&h), chunk, train)?))
    }
}

#[derive(Debug)]
pub struct Generator {
    levels: Vec<EncoderLevel>,
    bottleneck: EncoderLevelFlat,
    bottleneck_site: StyledHead,
    up: Vec<Conv2d>,
    stages: Vec<StyledBlock>,
    out_up: Conv2d,
    /// Last layer of the generator; the loss balancer measures gradient norms
    /// on its weight.
    pub out: Conv2d,
    resolution: i64,
    condition_len: i64,
}

/// Two stride-1 conv -> BN -> lrelu layers.
#[derive(Debug)]
struct EncoderLevelFlat {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
}

impl EncoderLevelFlat {
    fn new(p: &nn::Path, init: &mut ParamInit, channels: i64) -> Self {
        EncoderLevelFlat {
            conv1: Conv2d::new(&(p / "conv1"), init, channels, channels, 1),
            bn1: BatchNorm::new(&(p / "bn1"), channels),
            conv2: Conv2d::new(&(p / "conv2"), init, channels, channels, 1),
            bn2: BatchNorm::new(&(p / "bn2"), channels),
        }
    }

    fn forward(&self, x: &Tensor, train: bool) -> Tensor {
        let h = leaky_relu(&self.bn1.forward(&self.conv1.forward(x), train));
        leaky_relu(&self.bn2.forward(&self.conv2.forward(&h), train))
    }
}

/// The bottleneck's style site: conv -> CBN -> lrelu.
#[derive(Debug)]
struct StyledHead {
    conv: Conv2d,
    cbn: ConditionalBatchNorm,
}

impl Generator {
    pub fn new(p: &nn::Path, init: &mut ParamInit, cfg: &ModelConfig) -> Self {
        let b = cfg.base_channels as i64;
        let chunk = cfg.chunk_len() as i64;
        let widths = [b, 2 * b, 4 * b];
        let levels = (0..3)
            .map(|j| {
                let cin = if j == 0 { 1 } else { widths[j - 1] };
                EncoderLevel::new(&(p / format!("enc{}", j + 1)), init, cin, widths[j])
            })
            .collect();
        let bottleneck = EncoderLevelFlat::new(&(p / "bottleneck"), init, widths[2]);
        let bottleneck_site = StyledHead {
            conv: Conv2d::new(&(p / "site0" / "conv"), init, widths[2], widths[2], 1),
            cbn: ConditionalBatchNorm::new(&(p / "site0" / "cbn"), init, widths[2], chunk),
        };
        // decoder stage i (1..=3) consumes skip level j = 4 - i
        let mut up = Vec::new();
        let mut stages = Vec::new();
        let mut prev = widths[2];
        for i in 1..=3usize {
            let skip = widths[3 - i];
            up.push(Conv2d::new(&(p / format!("up{i}")), init, prev, skip, 1));
            stages.push(StyledBlock::new(&(p / format!("dec{i}")), init, 2 * skip, skip, chunk));
            prev = skip;
        }
        Generator {
            levels,
            bottleneck,
            bottleneck_site,
            up,
            stages,
            out_up: Conv2d::new(&(p / "out_up"), init, b, b, 1),
            out: Conv2d::new(&(p / "out"), init, b, 1, 1),
            resolution: cfg.resolution as i64,
            condition_len: cfg.condition_len() as i64,
        }
    }

    /// Encoder pass over `[B, 1, R, R]` icons in `[-1, 1]`.
    pub fn encode_content(&self, icon: &Tensor, train: bool) -> Result<FeaturePyramid> {
        check_image(icon, self.resolution, "encode_content")?;
        let mut levels = Vec::with_capacity(3);
        let mut h = icon.shallow_clone();
        for level in &self.levels {
            h = level.forward(&h, train);
            levels.push(h.shallow_clone());
        }
        let bottleneck = self.bottleneck.forward(&h, train);
        Ok(FeaturePyramid { levels, bottleneck })
    }

    /// Decoder pass: `F^i = concat(Up(F^{i-1}), F_d^j)` with stage `i` modulated
    /// by style chunk `i` (chunk 0 drives the bottleneck site).
    pub fn decode(&self, pyramid: &FeaturePyramid, condition: &StyleCondition, train: bool) -> Result<Tensor> {
        let batch = pyramid.bottleneck.size()[0];
        let cs = condition.values().size();
        if cs != [batch, self.condition_len] {
            return Err(Error::Shape(format!(
                "generator expects a [{batch}, {}] style condition, got {cs:?}",
                self.condition_len
            )));
        }
        let chunks = condition.chunks(CBN_SITES);
        let site = &self.bottleneck_site;
        let mut h = leaky_relu(&site.cbn.forward(&site.conv.forward(&pyramid.bottleneck), &chunks[0], train)?);
        for (i, (up, stage)) in self.up.iter().zip(&self.stages).enumerate() {
            let skip = &pyramid.levels[2 - i];
            let factor = skip.size()[2] / h.size()[2];
            let upsampled = up.forward(&upsample(&h, factor));
            h = stage.forward(&Tensor::cat(&[upsampled, skip.shallow_clone()], 1), &chunks[i + 1], train)?;
        }
        let h = leaky_relu(&self.out_up.forward(&upsample(&h, 2)));
        Ok(self.out.forward(&h).tanh())
    }

    pub fn forward(&self, icon: &Tensor, condition: &StyleCondition, train: bool) -> Result<Tensor> {
        let pyramid = self.encode_content(icon, train)?;
        if pyramid.bottleneck.size()[0] != condition.values().size()[0] {
            return Err(Error::Shape(format!(
                "{} icons with {} style conditions",
                pyramid.bottleneck.size()[0],
                condition.values().size()[0]
            )));
        }
        self.decode(&pyramid, condition, train)
    }

    /// The conditional batch norm layers in site order (two per site except
    /// the bottleneck).
    pub fn cbn_layers(&self) -> Vec<&ConditionalBatchNorm> {
        let mut out = vec![&self.bottleneck_site.cbn];
        for s in &self.stages {
            out.push(&s.cbn1);
            out.push(&s.cbn2);
        }
        out
    }
}
