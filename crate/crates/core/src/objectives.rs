//! Training objectives. Tensor-valued functions are differentiable and used
//! by the trainer; the report helpers combine already-evaluated scalars.
//!
//! Every expectation is an arithmetic mean over the batch.

use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};
use crate::networks::StylePosterior;

/// Dynamic weights are kept inside this range.
pub const LAMBDA_MIN: f64 = 0.01;
pub const LAMBDA_MAX: f64 = 100.0;
pub const DEFAULT_LAMBDA_KL: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_class: f64,
    pub lambda_id: f64,
    pub lambda_style: f64,
    pub lambda_kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_class: 1.0,
            lambda_id: 1.0,
            lambda_style: 1.0,
            lambda_kl: DEFAULT_LAMBDA_KL,
        }
    }
}

impl LossWeights {
    pub fn clipped(self) -> Self {
        let c = |v: f64| v.clamp(LAMBDA_MIN, LAMBDA_MAX);
        LossWeights {
            lambda_class: c(self.lambda_class),
            lambda_id: c(self.lambda_id),
            lambda_style: c(self.lambda_style),
            lambda_kl: self.lambda_kl,
        }
    }
}

/// Scalar values of every loss at one training step.
///
/// `adv_g` is the adversarial term the generator actually minimizes (the
/// non-saturating form unless configured otherwise).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub adv1: f64,
    pub adv2: f64,
    pub adv: f64,
    pub adv_g: f64,
    pub class_d: f64,
    pub class_g: f64,
    pub style: f64,
    pub id_d: f64,
    pub id_g: f64,
    pub kl: f64,
    pub total_ge: f64,
    pub total_d: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.adv1, self.adv2, self.adv, self.adv_g, self.class_d, self.class_g, self.style, self.id_d,
            self.id_g, self.kl, self.total_ge, self.total_d,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

fn check_probabilities(op: &'static str, scores: &Tensor) -> Result<()> {
    if scores.numel() == 0 {
        return Err(Error::Domain {
            op,
            detail: "empty score vector".into(),
        });
    }
    let s = scores.to_kind(Kind::Double);
    let inside = s.gt(0.0).logical_and(&s.lt(1.0)).all().int64_value(&[]) != 0;
    if !inside {
        return Err(Error::Domain {
            op,
            detail: format!(
                "scores must lie in (0, 1), got min {} max {}",
                s.min().double_value(&[]),
                s.max().double_value(&[])
            ),
        });
    }
    Ok(())
}

fn log_likelihood_pair(op: &'static str, real: &Tensor, fake: &Tensor) -> Result<Tensor> {
    check_probabilities(op, real)?;
    check_probabilities(op, fake)?;
    Ok(real.log().mean(None) + fake.neg().log1p().mean(None))
}

/// `mean log D(x) + mean log(1 - D(G(m, z_s)))` over discriminator probabilities.
pub fn adv_loss_1(real_scores: &Tensor, fake_scores_random: &Tensor) -> Result<Tensor> {
    log_likelihood_pair("adv_loss_1", real_scores, fake_scores_random)
}

/// `mean log D(x) + mean log(1 - D(G(m, E(x_s))))` over discriminator probabilities.
pub fn adv_loss_2(real_scores: &Tensor, fake_scores_reference: &Tensor) -> Result<Tensor> {
    log_likelihood_pair("adv_loss_2", real_scores, fake_scores_reference)
}

/// The same value as [`adv_loss_1`] computed from pre-sigmoid scores, stable
/// for saturated discriminators.
pub fn adv_loss_from_logits(real_logits: &Tensor, fake_logits: &Tensor) -> Tensor {
    real_logits.log_sigmoid().mean(None) + (-fake_logits).log_sigmoid().mean(None)
}

pub fn adv_loss(adv1: &Tensor, adv2: &Tensor) -> Tensor {
    adv1 + adv2
}

/// The generator's adversarial objective for one fake path, to be minimized:
/// `mean log(1 - D(fake))` when `saturating`, otherwise `-mean log D(fake)`.
pub fn generator_adv_term(fake_logits: &Tensor, saturating: bool) -> Tensor {
    if saturating {
        (-fake_logits).log_sigmoid().mean(None)
    } else {
        -fake_logits.log_sigmoid().mean(None)
    }
}

fn cross_entropy(op: &'static str, logits: &Tensor, labels: &Tensor) -> Result<Tensor> {
    let ls = logits.size();
    let ys = labels.size();
    if ls.len() != 2 || ys.len() != 1 || ls[0] != ys[0] || ls[0] == 0 {
        return Err(Error::Shape(format!("{op}: logits {ls:?} with labels {ys:?}")));
    }
    let lo = labels.min().int64_value(&[]);
    let hi = labels.max().int64_value(&[]);
    if lo < 0 || hi >= ls[1] {
        return Err(Error::InvalidArgument(format!(
            "{op}: label outside 0..{} (got range {lo}..={hi})",
            ls[1]
        )));
    }
    let logp = logits.log_softmax(1, None);
    Ok(-logp.gather(1, &labels.unsqueeze(1), false).mean(None))
}

/// Cross-entropy of the class recognizer on real (sketch, class) pairs.
pub fn class_loss_d(logits: &Tensor, labels: &Tensor) -> Result<Tensor> {
    cross_entropy("class_loss_d", logits, labels)
}

/// Recognizer cross-entropy on both generated paths against the content class.
pub fn class_loss_g(logits_reference_path: &Tensor, logits_random_path: &Tensor, labels: &Tensor) -> Result<Tensor> {
    Ok(cross_entropy("class_loss_g", logits_reference_path, labels)?
        + cross_entropy("class_loss_g", logits_random_path, labels)?)
}

/// Mean absolute difference between sampled styles and their reconstructions.
pub fn style_recon_loss(z_s: &Tensor, reconstructed: &Tensor) -> Result<Tensor> {
    if z_s.size() != reconstructed.size() {
        return Err(Error::Shape(format!(
            "style_recon_loss: {:?} vs {:?}",
            z_s.size(),
            reconstructed.size()
        )));
    }
    Ok((z_s - reconstructed).abs().mean(None))
}

/// Cross-entropy of the painter identifier on real (sketch, painter) pairs.
pub fn id_loss_d(logits: &Tensor, painters: &Tensor) -> Result<Tensor> {
    cross_entropy("id_loss_d", logits, painters)
}

/// Identifier cross-entropy on reference-style outputs against the style
/// sample's painter.
pub fn id_loss_g(logits_on_generated: &Tensor, style_painters: &Tensor) -> Result<Tensor> {
    cross_entropy("id_loss_g", logits_on_generated, style_painters)
}

/// `KL(N(mean, exp(log_variance)) || N(0, I))`, summed over dimensions and
/// averaged over the batch.
pub fn kl_loss(posterior: &StylePosterior) -> Result<Tensor> {
    let finite = posterior.mean.isfinite().all().int64_value(&[]) != 0
        && posterior.log_variance.isfinite().all().int64_value(&[]) != 0;
    if !finite {
        return Err(Error::Numeric("kl_loss: non-finite style posterior".into()));
    }
    let lv = &posterior.log_variance;
    // expm1(v) >= v after rounding, so every term stays non-negative.
    let per_dim = posterior.mean.square() + (lv.expm1() - lv);
    Ok(per_dim.sum_dim_intlist([1i64].as_slice(), false, None).mean(None) * 0.5)
}

/// `adv_g + λ_class class_g + λ_id id_g + λ_style style + λ_kl kl`.
pub fn total_ge_loss(report: &LossReport, weights: &LossWeights) -> f64 {
    report.adv_g
        + weights.lambda_class * report.class_g
        + weights.lambda_id * report.id_g
        + weights.lambda_style * report.style
        + weights.lambda_kl * report.kl
}

/// Minimization targets of the discriminator, recognizer and identifier.
pub fn critic_objectives(report: &LossReport) -> (f64, f64, f64) {
    (-report.adv, report.class_d, report.id_d)
}
