//! Convolutional stacks that read images: the style encoder, the
//! discriminator, and the classifier used for the class recognizer, the
//! painter identifier and the evaluation probes.

use tch::{nn, Tensor};

use super::layers::{check_image, leaky_relu, strided_size, Conv2d, Linear, ParamInit};
use super::{ModelConfig, StylePosterior};
use crate::error::Result;

pub const LOG_VARIANCE_BOUND: f64 = 10.0;

/// Four stride-2 3x3 convolutions with leaky rectifiers, widths b, 2b, 4b, 4b.
#[derive(Debug)]
pub struct Backbone {
    convs: Vec<Conv2d>,
    resolution: i64,
    flat_len: i64,
}

impl Backbone {
    pub fn new(p: &nn::Path, init: &mut ParamInit, resolution: usize, base: usize) -> Self {
        let b = base as i64;
        let widths = [b, 2 * b, 4 * b, 4 * b];
        let mut cin = 1;
        let mut side = resolution as i64;
        let convs = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let c = Conv2d::new(&(p / format!("conv{}", i + 1)), init, cin, w, 2);
                cin = w;
                side = strided_size(side);
                c
            })
            .collect();
        Backbone {
            convs,
            resolution: resolution as i64,
            flat_len: 4 * b * side * side,
        }
    }

    pub fn flat_len(&self) -> i64 {
        self.flat_len
    }

    pub fn forward(&self, x: &Tensor, what: &str) -> Result<Tensor> {
        check_image(x, self.resolution, what)?;
        let mut h = x.shallow_clone();
        for c in &self.convs {
            h = leaky_relu(&c.forward(&h));
        }
        Ok(h.flatten(1, -1))
    }
}

#[derive(Debug)]
pub struct Discriminator {
    backbone: Backbone,
    head: Linear,
}

impl Discriminator {
    pub fn new(p: &nn::Path, init: &mut ParamInit, cfg: &ModelConfig) -> Self {
        let backbone = Backbone::new(&(p / "backbone"), init, cfg.resolution, cfg.base_channels);
        let head = Linear::new(&(p / "head"), init, backbone.flat_len(), 1);
        Discriminator { backbone, head }
    }

    /// Pre-sigmoid scores, shape `[B]`.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.head.forward(&self.backbone.forward(x, "discriminator")?).squeeze_dim(1))
    }

    /// Probability that each image is real, shape `[B]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.logits(x)?.sigmoid())
    }
}

/// Backbone -> hidden layer -> class logits.
#[derive(Debug)]
pub struct Classifier {
    backbone: Backbone,
    hidden: Linear,
    head: Linear,
    classes: i64,
}

impl Classifier {
    pub fn new(p: &nn::Path, init: &mut ParamInit, resolution: usize, base: usize, hidden: usize, classes: usize) -> Self {
        let backbone = Backbone::new(&(p / "backbone"), init, resolution, base);
        let hidden_layer = Linear::new(&(p / "hidden"), init, backbone.flat_len(), hidden as i64);
        let head = Linear::new(&(p / "head"), init, hidden as i64, classes as i64);
        Classifier {
            backbone,
            hidden: hidden_layer,
            head,
            classes: classes as i64,
        }
    }

    pub fn classes(&self) -> i64 {
        self.classes
    }

    /// Penultimate activations (the embedding used by the distribution metrics).
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        Ok(leaky_relu(&self.hidden.forward(&self.backbone.forward(x, "classifier")?)))
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.head.forward(&self.features(x)?))
    }
}

/// Maps a sketch to a diagonal-Gaussian posterior over style vectors.
#[derive(Debug)]
pub struct StyleEncoder {
    convs: Vec<Conv2d>,
    mean: Linear,
    log_variance: Linear,
    resolution: i64,
}

impl StyleEncoder {
    pub fn new(p: &nn::Path, init: &mut ParamInit, cfg: &ModelConfig) -> Self {
        let b = cfg.base_channels as i64;
        let plan = [(1, b, 2), (b, 2 * b, 2), (2 * b, 4 * b, 2), (4 * b, 4 * b, 1)];
        let convs = plan
            .iter()
            .enumerate()
            .map(|(i, &(cin, cout, s))| Conv2d::new(&(p / format!("conv{}", i + 1)), init, cin, cout, s))
            .collect();
        let d = cfg.style_dim as i64;
        StyleEncoder {
            convs,
            mean: Linear::new(&(p / "mean"), init, 4 * b, d),
            log_variance: Linear::new(&(p / "log_variance"), init, 4 * b, d),
            resolution: cfg.resolution as i64,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<StylePosterior> {
        check_image(x, self.resolution, "style encoder")?;
        let mut h = x.shallow_clone();
        for c in &self.convs {
            h = leaky_relu(&c.forward(&h));
        }
        let pooled = h.mean_dim([2i64, 3].as_slice(), false, None);
        let log_variance = self
            .log_variance
            .forward(&pooled)
            .clamp(-LOG_VARIANCE_BOUND, LOG_VARIANCE_BOUND);
        Ok(StylePosterior {
            mean: self.mean.forward(&pooled),
            log_variance,
        })
    }
}
