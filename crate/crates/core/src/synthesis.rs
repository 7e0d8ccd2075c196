//! Inference-time generation: random style, reference style, style
//! interpolation and unseen-class icons. All forwards run in evaluation mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::error::{Error, Result};
use crate::networks::{condition_with_noise, gaussian, make_style_condition, Networks, StyleVector};
use crate::raster::{self, Raster};

/// Independent random stream for request `index` of a run seeded with `seed`.
pub fn request_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generator output for a batch of icons `[B, 1, H, W]` and styles `[B, D_s]`,
/// each with fresh noise.
pub fn generate_with_style<R: Rng + ?Sized>(
    nets: &Networks,
    icons: &Tensor,
    style: &StyleVector,
    rng: &mut R,
) -> Result<Tensor> {
    let cond = make_style_condition(style, nets.config().noise_dim, rng)?;
    tch::no_grad(|| nets.generator.forward(icons, &cond, false))
}

/// Posterior means of the style encoder for a batch of sketches.
pub fn reference_styles(nets: &Networks, sketches: &Tensor) -> Result<StyleVector> {
    let post = tch::no_grad(|| nets.encoder.forward(sketches))?;
    Ok(post.mean_style())
}

fn icon_tensor(nets: &Networks, icon: &Raster) -> Tensor {
    icon.to_tensor(nets.kind())
}

/// One sketch of `icon` in a style drawn from the standard-normal prior.
pub fn generate_random<R: Rng + ?Sized>(nets: &Networks, icon: &Raster, rng: &mut R) -> Result<Raster> {
    let style = StyleVector::random(rng, 1, nets.config().style_dim, nets.kind());
    let out = generate_with_style(nets, &icon_tensor(nets, icon), &style, rng)?;
    Raster::from_tensor(&out)
}

/// One sketch of `icon` imitating the style of `style_image`. The icon's class
/// and the style image's class need not agree.
pub fn generate_reference<R: Rng + ?Sized>(
    nets: &Networks,
    icon: &Raster,
    style_image: &Raster,
    rng: &mut R,
) -> Result<Raster> {
    let style = reference_styles(nets, &icon_tensor(nets, style_image))?;
    let out = generate_with_style(nets, &icon_tensor(nets, icon), &style, rng)?;
    Raster::from_tensor(&out)
}

/// Linear path between two `[1, D_s]` styles at `α_k = k / (steps - 1)`. The
/// first and last entries are the inputs themselves.
pub fn interpolation_path(a: &StyleVector, b: &StyleVector, steps: usize) -> Result<Tensor> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    if a.values().size() != b.values().size() || a.batch() != 1 {
        return Err(Error::Shape(format!(
            "interpolation endpoints {:?} and {:?}",
            a.values().size(),
            b.values().size()
        )));
    }
    let rows: Vec<Tensor> = (0..steps)
        .map(|k| {
            if k == 0 {
                a.values().shallow_clone()
            } else if k == steps - 1 {
                b.values().shallow_clone()
            } else {
                let alpha = k as f64 / (steps - 1) as f64;
                a.values() * (1.0 - alpha) + b.values() * alpha
            }
        })
        .collect();
    Ok(Tensor::cat(&rows, 0))
}

/// Frames of `icon` along the style path from `style_a` to `style_b`. One
/// noise vector is shared by every frame so only the style varies.
pub fn interpolate_styles<R: Rng + ?Sized>(
    nets: &Networks,
    icon: &Raster,
    style_a: &Raster,
    style_b: &Raster,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<Raster>> {
    let a = reference_styles(nets, &icon_tensor(nets, style_a))?;
    let b = reference_styles(nets, &icon_tensor(nets, style_b))?;
    let path = interpolation_path(&a, &b, steps)?;
    raster::unstack(&generate_along_path(nets, icon, &path, rng)?)
}

/// Generator output for every row of `path` with a single shared noise vector.
pub fn generate_along_path<R: Rng + ?Sized>(
    nets: &Networks,
    icon: &Raster,
    path: &Tensor,
    rng: &mut R,
) -> Result<Tensor> {
    let steps = path.size()[0];
    let style = StyleVector::new(path.shallow_clone(), nets.config().style_dim)?;
    let noise = gaussian(rng, &[1, nets.config().noise_dim as i64], nets.kind()).repeat([steps, 1]);
    let cond = condition_with_noise(&style, &noise)?;
    let icons = icon_tensor(nets, icon).repeat([steps, 1, 1, 1]);
    tch::no_grad(|| nets.generator.forward(&icons, &cond, false))
}

/// Where the style of a class-extension sample comes from.
#[derive(Clone, Copy, Debug)]
pub enum StyleSource<'a> {
    Random,
    Reference(&'a Raster),
}

/// Generation for an icon the model never saw in training; the machinery is
/// that of [`generate_random`] and [`generate_reference`].
pub fn generate_class_extension<R: Rng + ?Sized>(
    nets: &Networks,
    new_icon: &Raster,
    style: StyleSource<'_>,
    rng: &mut R,
) -> Result<Raster> {
    if new_icon.width() != nets.config().resolution || new_icon.height() != nets.config().resolution {
        return Err(Error::Shape(format!(
            "icon is {}x{}, model resolution is {}",
            new_icon.width(),
            new_icon.height(),
            nets.config().resolution
        )));
    }
    match style {
        StyleSource::Random => generate_random(nets, new_icon, rng),
        StyleSource::Reference(img) => generate_reference(nets, new_icon, img, rng),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    Random,
    Reference,
    Interpolation,
}

/// A batch of generations for one icon.
#[derive(Clone, Debug)]
pub struct GenerationRequest {
    pub mode: GenerationMode,
    pub icon: Raster,
    /// One image for reference mode, two for interpolation.
    pub style_images: Vec<Raster>,
    /// Samples for random/reference mode, frames for interpolation.
    pub count: usize,
    pub seed: u64,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<()> {
        let need = match self.mode {
            GenerationMode::Random => 0,
            GenerationMode::Reference => 1,
            GenerationMode::Interpolation => 2,
        };
        if self.style_images.len() != need {
            return Err(Error::InvalidArgument(format!(
                "{:?} mode takes {need} style image(s), got {}",
                self.mode,
                self.style_images.len()
            )));
        }
        if self.count == 0 || (self.mode == GenerationMode::Interpolation && self.count < 2) {
            return Err(Error::InvalidArgument(format!("count {} too small for {:?} mode", self.count, self.mode)));
        }
        Ok(())
    }

    /// Runs the request; sample `i` uses the stream `(seed, i)`.
    pub fn run(&self, nets: &Networks) -> Result<Vec<Raster>> {
        self.validate()?;
        match self.mode {
            GenerationMode::Random => (0..self.count)
                .map(|i| generate_random(nets, &self.icon, &mut request_rng(self.seed, i as u64)))
                .collect(),
            GenerationMode::Reference => (0..self.count)
                .map(|i| {
                    generate_reference(nets, &self.icon, &self.style_images[0], &mut request_rng(self.seed, i as u64))
                })
                .collect(),
            GenerationMode::Interpolation => interpolate_styles(
                nets,
                &self.icon,
                &self.style_images[0],
                &self.style_images[1],
                self.count,
                &mut request_rng(self.seed, 0),
            ),
        }
    }
}
