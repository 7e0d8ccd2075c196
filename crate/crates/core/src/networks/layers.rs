use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tch::{nn, Tensor};

use crate::error::{Error, Result};

/// Standard deviation of the zero-mean Gaussian weight initialization.
pub const LEAKY_SLOPE: f64 = 0.2;
const BN_MOMENTUM: f64 = 0.1;
const BN_EPS: f64 = 1e-5;

/// Draws initial parameter values from a seeded stream so that a model's
/// initialization is independent of libtorch's global generator.
pub struct ParamInit {
    rng: ChaCha8Rng,
}

impl ParamInit {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        ParamInit { rng }
    }

    pub fn normal(&mut self, shape: &[i64], std: f64) -> Tensor {
        let n: i64 = shape.iter().product();
        let dist = Normal::new(0.0f32, std as f32).unwrap();
        let data: Vec<f32> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        Tensor::from_slice(&data).view(shape)
    }
}

pub fn leaky_relu(x: &Tensor) -> Tensor {
    x.maximum(&(x * LEAKY_SLOPE))
}

/// Nearest-neighbour upsampling by an integer factor.
/// He initialization for a leaky rectifier of slope [`LEAKY_SLOPE`].
pub fn he_std(fan_in: i64) -> f64 {
    (2.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * fan_in as f64)).sqrt()
}

pub fn upsample(x: &Tensor, factor: i64) -> Tensor {
    if factor == 1 {
        return x.shallow_clone();
    }
    let size = x.size();
    x.upsample_nearest2d([size[2] * factor, size[3] * factor], None, None)
}

#[derive(Debug)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    stride: i64,
}

impl Conv2d {
    /// 3x3 convolution with padding 1.
    pub fn new(p: &nn::Path, init: &mut ParamInit, cin: i64, cout: i64, stride: i64) -> Self {
        let weight = p.var_copy("weight", &init.normal(&[cout, cin, 3, 3], he_std(cin * 9)));
        let bias = p.zeros("bias", &[cout]);
        Conv2d { weight, bias, stride }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.conv2d(
            &self.weight,
            Some(&self.bias),
            [self.stride, self.stride],
            [1, 1],
            [1, 1],
            1,
        )
    }
}

#[derive(Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(p: &nn::Path, init: &mut ParamInit, fin: i64, fout: i64) -> Self {
        let weight = p.var_copy("weight", &init.normal(&[fout, fin], he_std(fin)));
        let bias = p.zeros("bias", &[fout]);
        Linear { weight, bias }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.linear(&self.weight, Some(&self.bias))
    }
}

/// Batch normalization with a learned per-channel affine transform.
#[derive(Debug)]
pub struct BatchNorm {
    weight: Tensor,
    bias: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
}

impl BatchNorm {
    pub fn new(p: &nn::Path, channels: i64) -> Self {
        BatchNorm {
            weight: p.ones("weight", &[channels]),
            bias: p.zeros("bias", &[channels]),
            running_mean: p.zeros_no_train("running_mean", &[channels]),
            running_var: p.ones_no_train("running_var", &[channels]),
        }
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Tensor {
        x.batch_norm(
            Some(&self.weight),
            Some(&self.bias),
            Some(&self.running_mean),
            Some(&self.running_var),
            train,
            BN_MOMENTUM,
            BN_EPS,
            false,
        )
    }
}

/// Conditional batch normalization: features are normalized over the batch
/// and spatial axes, then scaled and shifted per sample and channel by
/// learned affine maps of a style chunk.
#[derive(Debug)]
pub struct ConditionalBatchNorm {
    pub gamma: Linear,
    pub beta: Linear,
    running_mean: Tensor,
    running_var: Tensor,
    chunk_len: i64,
}

impl ConditionalBatchNorm {
    pub fn new(p: &nn::Path, init: &mut ParamInit, channels: i64, chunk_len: i64) -> Self {
        // fan-in scaled so the style moves scale and shift by O(1) from the start
        let std = 1.0 / (chunk_len as f64).sqrt();
        let gamma = Linear {
            weight: (p / "gamma").var_copy("weight", &init.normal(&[channels, chunk_len], std)),
            bias: (p / "gamma").ones("bias", &[channels]),
        };
        let beta = Linear {
            weight: (p / "beta").var_copy("weight", &init.normal(&[channels, chunk_len], std)),
            bias: (p / "beta").zeros("bias", &[channels]),
        };
        ConditionalBatchNorm {
            gamma,
            beta,
            running_mean: p.zeros_no_train("running_mean", &[channels]),
            running_var: p.ones_no_train("running_var", &[channels]),
            chunk_len,
        }
    }

    pub fn chunk_len(&self) -> i64 {
        self.chunk_len
    }

    pub fn forward(&self, x: &Tensor, chunk: &Tensor, train: bool) -> Result<Tensor> {
        let xs = x.size();
        let cs = chunk.size();
        if xs.len() != 4 || cs.len() != 2 || cs[1] != self.chunk_len || cs[0] != xs[0] {
            return Err(Error::Shape(format!(
                "conditional batch norm: features {xs:?} with chunk {cs:?}, chunk length {}",
                self.chunk_len
            )));
        }
        let channels = self.gamma.bias.size()[0];
        if xs[1] != channels {
            return Err(Error::Shape(format!(
                "conditional batch norm over {channels} channels got {xs:?}"
            )));
        }
        let normalized = x.batch_norm(
            None::<&Tensor>,
            None::<&Tensor>,
            Some(&self.running_mean),
            Some(&self.running_var),
            train,
            BN_MOMENTUM,
            BN_EPS,
            false,
        );
        let gamma = self.gamma.forward(chunk).view([xs[0], channels, 1, 1]);
        let beta = self.beta.forward(chunk).view([xs[0], channels, 1, 1]);
        Ok(normalized * gamma + beta)
    }
}

/// Spatial size after a 3x3, stride-2, padding-1 convolution.
pub fn strided_size(n: i64) -> i64 {
    (n - 1) / 2 + 1
}

pub fn check_image(x: &Tensor, resolution: i64, what: &str) -> Result<()> {
    let s = x.size();
    if s.len() != 4 || s[1] != 1 || s[2] != resolution || s[3] != resolution {
        return Err(Error::Shape(format!(
            "{what} expects [B, 1, {resolution}, {resolution}], got {s:?}"
        )));
    }
    Ok(())
}

