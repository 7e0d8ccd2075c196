//! Quantitative evaluation: PSNR, IS, FID and KID over a pluggable
//! embedding, and probe accuracies on generated images.

mod metrics;
mod probes;

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tch::{Kind, Tensor};

pub use metrics::{
    fid, gaussian_stats, inception_score, kid, mmd2_unbiased, psnr, psnr_slices, GaussianStats, KID_SUBSETS,
    KID_SUBSET_SIZE, PSNR_CAP_DB,
};
pub use probes::{
    content_accuracy, painter_accuracy, probe_accuracy, train_probes, EmbeddingExtractor, Probe, ProbeConfig, Probes,
};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::networks::{Classifier, Networks, StyleVector};
use crate::synthesis::{generate_with_style, reference_styles};

const GEN_CHUNK: usize = 64;

/// `[N, F]` tensor to a row-major matrix.
pub fn to_matrix(t: &Tensor) -> Result<DMatrix<f64>> {
    let s = t.size();
    if s.len() != 2 {
        return Err(Error::Shape(format!("expected a [N, F] matrix, got {s:?}")));
    }
    let v = Vec::<f64>::try_from(&t.to_kind(Kind::Double).contiguous().view([-1]))?;
    Ok(DMatrix::from_row_slice(s[0] as usize, s[1] as usize, &v))
}

/// Penultimate features of a model's own class recognizer. Used when no
/// independent probe is available.
pub struct RecognizerEmbedding<'a>(pub &'a Classifier);

impl EmbeddingExtractor for RecognizerEmbedding<'_> {
    fn name(&self) -> &str {
        "proxy:recognizer"
    }

    fn features(&self, images: &Tensor) -> Result<Tensor> {
        tch::no_grad(|| self.0.features(images))
    }

    fn probabilities(&self, images: &Tensor) -> Result<Tensor> {
        Ok(tch::no_grad(|| self.0.logits(images))?.softmax(1, Kind::Float))
    }
}

/// Metrics of one evaluation run; absent values are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub fid: f64,
    pub kid: f64,
    pub is_score: f64,
    pub psnr: f64,
    pub c_acc: Option<f64>,
    pub p_acc: Option<f64>,
    pub real_count: usize,
    pub fake_count: usize,
    /// Name of the embedding behind FID/KID/IS.
    pub embedding: String,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("absent".to_string(), |x| format!("{x:.6}"));
        writeln!(f, "EMBEDDING={}", self.embedding)?;
        writeln!(f, "FID={:.6}", self.fid)?;
        writeln!(f, "KID={:.6}", self.kid)?;
        writeln!(f, "IS={:.6}", self.is_score)?;
        writeln!(f, "PSNR={:.6}", self.psnr)?;
        writeln!(f, "C_ACC={}", opt(self.c_acc))?;
        writeln!(f, "P_ACC={}", opt(self.p_acc))?;
        writeln!(f, "REAL_COUNT={}", self.real_count)?;
        writeln!(f, "FAKE_COUNT={}", self.fake_count)
    }
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub seed: u64,
    /// Upper bound on evaluated test samples (all when `None`).
    pub max_samples: Option<usize>,
    pub is_splits: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 0,
            max_samples: None,
            is_splits: 1,
        }
    }
}

/// Runs `f` over index chunks and concatenates the resulting tensors.
fn batched(n: usize, mut f: impl FnMut(&[usize]) -> Result<Tensor>) -> Result<Tensor> {
    let idx: Vec<usize> = (0..n).collect();
    let parts = idx.chunks(GEN_CHUNK).map(&mut f).collect::<Result<Vec<_>>>()?;
    Ok(Tensor::cat(&parts, 0))
}

/// One random-style generation per sample of `ds` (its own icon).
pub fn generate_random_for(nets: &Networks, ds: &Dataset, indices: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor> {
    batched(indices.len(), |c| {
        let idx: Vec<usize> = c.iter().map(|&i| indices[i]).collect();
        let icons = ds.icon_batch(&idx, nets.kind())?;
        let z = StyleVector::random(rng, idx.len(), nets.config().style_dim, nets.kind());
        generate_with_style(nets, &icons, &z, rng)
    })
}

/// Mean PSNR (max value 1 on `[0, 1]` rasters) of `G(m, E(x).mean)` against `x`.
pub fn reconstruction_psnr(nets: &Networks, ds: &Dataset, indices: &[usize], rng: &mut ChaCha8Rng) -> Result<f64> {
    let recon = batched(indices.len(), |c| {
        let idx: Vec<usize> = c.iter().map(|&i| indices[i]).collect();
        let style = reference_styles(nets, &ds.sketch_batch(&idx, nets.kind())?)?;
        generate_with_style(nets, &ds.icon_batch(&idx, nets.kind())?, &style, rng)
    })?;
    let real = ds.sketch_batch(indices, Kind::Float)?;
    let to01 = |t: &Tensor| -> Result<Vec<f32>> {
        Ok(Vec::<f32>::try_from(&((t.to_kind(Kind::Float) + 1.0) * 0.5).clamp(0.0, 1.0).contiguous().view([-1]))?)
    };
    let px = (real.size()[2] * real.size()[3]) as usize;
    let (r, g) = (to01(&real)?, to01(&recon)?);
    let total: f64 = r
        .chunks(px)
        .zip(g.chunks(px))
        .map(|(a, b)| psnr_slices(a, b, 1.0))
        .sum::<Result<f64>>()?;
    Ok(total / indices.len() as f64)
}

/// Painter accuracy of reference-guided generations. Icons come from `test`;
/// each style image is a random sample of `style_source`, whose painters the
/// painter probe was trained on.
pub fn reference_painter_accuracy(
    nets: &Networks,
    test: &Dataset,
    indices: &[usize],
    style_source: &Dataset,
    painter_probe: &Probe,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if style_source.is_empty() {
        return Err(Error::Data("no style images for painter accuracy".into()));
    }
    let style_idx: Vec<usize> = indices.iter().map(|_| rng.gen_range(0..style_source.len())).collect();
    let fakes = batched(indices.len(), |c| {
        let idx: Vec<usize> = c.iter().map(|&i| indices[i]).collect();
        let sidx: Vec<usize> = c.iter().map(|&i| style_idx[i]).collect();
        let style = reference_styles(nets, &style_source.sketch_batch(&sidx, nets.kind())?)?;
        generate_with_style(nets, &test.icon_batch(&idx, nets.kind())?, &style, rng)
    })?;
    let painters: Vec<usize> = style_idx.iter().map(|&i| style_source.samples()[i].painter_label).collect();
    painter_accuracy(&fakes, &painters, painter_probe)
}

/// Full metric report of `nets` on `test`. FID, KID and IS use `extractor`;
/// C_ACC and P_ACC need probes (P_ACC also needs the probe corpus as style
/// source).
pub fn evaluate(
    nets: &Networks,
    test: &Dataset,
    extractor: &dyn EmbeddingExtractor,
    probes: Option<&Probes>,
    style_source: Option<&Dataset>,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    let n = cfg.max_samples.map_or(test.len(), |m| m.min(test.len()));
    if n < 2 {
        return Err(Error::Data(format!("evaluation needs at least 2 test samples, got {n}")));
    }
    let indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let real = test.sketch_batch(&indices, Kind::Float)?;
    let fake = generate_random_for(nets, test, &indices, &mut rng)?;

    let real_f = to_matrix(&extractor.features(&real)?)?;
    let fake_f = to_matrix(&extractor.features(&fake)?)?;
    let fid_v = fid(&gaussian_stats(&real_f)?, &gaussian_stats(&fake_f)?)?;
    let kid_v = kid(&real_f, &fake_f, KID_SUBSET_SIZE, KID_SUBSETS, &mut rng)?;
    let is_v = inception_score(&to_matrix(&extractor.probabilities(&fake)?)?, cfg.is_splits)?;
    let psnr_v = reconstruction_psnr(nets, test, &indices, &mut rng)?;

    let labels: Vec<usize> = indices.iter().map(|&i| test.samples()[i].class_label).collect();
    let c_acc = probes.map(|p| content_accuracy(&fake, &labels, &p.class)).transpose()?;
    let p_acc = match (probes, style_source) {
        (Some(p), Some(src)) => Some(reference_painter_accuracy(nets, test, &indices, src, &p.painter, &mut rng)?),
        _ => None,
    };
    Ok(MetricsReport {
        fid: fid_v,
        kid: kid_v,
        is_score: is_v,
        psnr: psnr_v,
        c_acc,
        p_acc,
        real_count: n,
        fake_count: n,
        embedding: extractor.name().to_string(),
    })
}
