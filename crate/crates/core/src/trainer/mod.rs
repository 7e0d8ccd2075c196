//! Alternating critic / generator training.

mod adam;
pub(crate) mod checkpoint;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_MAGIC};

use crate::dataset::{sample_style_index, Dataset};
use crate::error::{Error, Result};
use crate::networks::{make_style_condition, ModelConfig, NetId, Networks, StyleVector};
use crate::objectives::{
    adv_loss_from_logits, class_loss_d, class_loss_g, generator_adv_term, id_loss_d, id_loss_g, kl_loss,
    style_recon_loss, LossReport, LossWeights, DEFAULT_LAMBDA_KL,
};
use crate::raster;

const BALANCE_EPS: f64 = 1e-8;
const STEP_STREAM_SALT: u64 = 0x7374_6570;
const SHUFFLE_SALT: u64 = 0x7368_7566;
const GRID_SALT: u64 = 0x6772_6964;
const GRID_SIZE: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Last epoch trained at the full learning rate; decay is linear to zero
    /// at `epochs`.
    pub decay_start_epoch: usize,
    pub lambda_kl: f64,
    pub balance_momentum: f64,
    pub balance_clip_min: f64,
    pub balance_clip_max: f64,
    /// When false the dynamic weights stay at their initial values, unclipped.
    pub balance: bool,
    pub initial_lambda_class: f64,
    pub initial_lambda_id: f64,
    pub initial_lambda_style: f64,
    /// Literal `log(1 - D(fake))` generator objective instead of `-log D(fake)`.
    pub saturating: bool,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    /// Write a checkpoint every this many epochs (0: only the final one).
    pub checkpoint_every: usize,
    pub sample_grids: bool,
    pub max_consecutive_aborts: u32,
    /// Fraction of painters the command-line front end holds out for testing.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 69,
            batch_size: 8,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            adam_eps: 1e-8,
            decay_start_epoch: 25,
            lambda_kl: DEFAULT_LAMBDA_KL,
            balance_momentum: 0.9,
            balance_clip_min: 0.01,
            balance_clip_max: 100.0,
            balance: true,
            initial_lambda_class: 1.0,
            initial_lambda_id: 1.0,
            initial_lambda_style: 1.0,
            saturating: false,
            critic_steps: 1,
            checkpoint_every: 10,
            sample_grids: true,
            max_consecutive_aborts: 3,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.decay_start_epoch >= self.epochs {
            return bad(format!(
                "decay_start_epoch ({}) must be below epochs ({})",
                self.decay_start_epoch, self.epochs
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("balance_momentum", self.balance_momentum)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.balance_clip_min > 0.0 && self.balance_clip_min <= self.balance_clip_max) {
            return bad("balance clip range must be positive and ordered".into());
        }
        if self.critic_steps == 0 {
            return bad("critic_steps must be at least 1".into());
        }
        if self.lambda_kl < 0.0 {
            return bad("lambda_kl must be non-negative".into());
        }
        Ok(())
    }

    pub fn initial_weights(&self) -> LossWeights {
        LossWeights {
            lambda_class: self.initial_lambda_class,
            lambda_id: self.initial_lambda_id,
            lambda_style: self.initial_lambda_style,
            lambda_kl: self.lambda_kl,
        }
    }
}

/// Learning rate for a zero-based epoch: constant through `decay_start_epoch`,
/// then linear to zero at `epochs`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let d = cfg.decay_start_epoch as f64;
    let span = cfg.epochs as f64 - d;
    let past = (epoch as f64 - d).max(0.0);
    (cfg.lr * (1.0 - past / span)).max(0.0)
}

/// Gradient norms of the adversarial and auxiliary losses at the generator's
/// final block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradNorms {
    pub adv: f64,
    pub class: f64,
    pub id: f64,
    pub style: f64,
}

impl GradNorms {
    fn is_finite(&self) -> bool {
        [self.adv, self.class, self.id, self.style].iter().all(|v| v.is_finite())
    }
}

/// One balancing update: `λ_i <- m λ_i + (1 - m) ‖g_adv‖ / max(‖g_i‖, ε)`,
/// clipped. Equal norms are an exact fixed point. Non-finite norms keep the
/// previous weights.
pub fn balance_weights(norms: &GradNorms, prev: &LossWeights, cfg: &TrainConfig) -> LossWeights {
    if !norms.is_finite() {
        warn!("non-finite gradient norms {norms:?}; keeping loss weights");
        return *prev;
    }
    let m = cfg.balance_momentum;
    let upd = |prev: f64, g: f64| {
        let raw = norms.adv / g.max(BALANCE_EPS);
        (m * prev + (1.0 - m) * raw).clamp(cfg.balance_clip_min, cfg.balance_clip_max)
    };
    LossWeights {
        lambda_class: upd(prev.lambda_class, norms.class),
        lambda_id: upd(prev.lambda_id, norms.id),
        lambda_style: upd(prev.lambda_style, norms.style),
        lambda_kl: prev.lambda_kl,
    }
}

/// Everything besides network parameters needed to continue training.
#[derive(Debug)]
pub struct TrainState {
    pub epoch: usize,
    /// Batch index within the current epoch.
    pub batch_in_epoch: usize,
    pub step: u64,
    pub weights: LossWeights,
    /// Exponential moving average of [`GradNorms`].
    pub grad_norms: GradNorms,
    pub consecutive_aborts: u32,
    pub optimizers: Vec<Adam>,
}

/// A content batch, or a style batch drawn independently of it.
#[derive(Debug)]
pub struct Batch {
    pub sketches: Tensor,
    pub icons: Tensor,
    pub classes: Tensor,
    pub painters: Tensor,
}

impl Batch {
    pub fn from_indices(ds: &Dataset, indices: &[usize], kind: Kind) -> Result<Self> {
        Ok(Batch {
            sketches: ds.sketch_batch(indices, kind)?,
            icons: ds.icon_batch(indices, kind)?,
            classes: ds.class_labels(indices),
            painters: ds.painter_labels(indices),
        })
    }

    pub fn len(&self) -> i64 {
        self.sketches.size()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Result of one [`Trainer::train_step`].
#[derive(Clone, Copy, Debug)]
pub struct StepOutcome {
    pub report: LossReport,
    /// The step produced a non-finite loss and every parameter was restored.
    pub aborted: bool,
}

struct Snapshot {
    params: Vec<Vec<Tensor>>,
    optimizers: Vec<(u64, Vec<(Tensor, Tensor)>)>,
    weights: LossWeights,
    grad_norms: GradNorms,
}

pub struct Trainer {
    pub nets: Networks,
    pub state: TrainState,
    pub cfg: TrainConfig,
}

impl std::fmt::Debug for Trainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer")
            .field("cfg", &self.cfg)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ STEP_STREAM_SALT);
    rng.set_stream(step);
    rng
}

fn scalar(t: &Tensor) -> f64 {
    t.double_value(&[])
}

fn zero_grads(params: &[(String, Tensor)]) {
    for (_, p) in params {
        let mut g = p.grad();
        if g.defined() {
            let _ = g.zero_();
        }
    }
}

fn grad_norm(loss: &Tensor, wrt: &Tensor) -> f64 {
    if !loss.requires_grad() {
        return 0.0;
    }
    let g = Tensor::run_backward(&[loss], &[wrt], true, false);
    scalar(&g[0].norm())
}

impl Trainer {
    pub fn new(model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<Self> {
        Self::with_kind(model_cfg, cfg, Kind::Float)
    }

    /// `Kind::Double` networks for gradient checks.
    pub fn with_kind(model_cfg: &ModelConfig, cfg: &TrainConfig, kind: Kind) -> Result<Self> {
        cfg.validate()?;
        let nets = Networks::new(model_cfg, cfg.seed, kind)?;
        let optimizers = NetId::ALL
            .iter()
            .map(|&id| Adam::new(&nets.parameters(id), cfg.beta1, cfg.beta2, cfg.adam_eps))
            .collect();
        Ok(Trainer {
            nets,
            state: TrainState {
                epoch: 0,
                batch_in_epoch: 0,
                step: 0,
                weights: cfg.initial_weights(),
                grad_norms: GradNorms::default(),
                consecutive_aborts: 0,
                optimizers,
            },
            cfg: cfg.clone(),
        })
    }

    pub fn model_config(&self) -> &ModelConfig {
        self.nets.config()
    }

    fn optimizer_step(&mut self, ids: &[NetId], lr: f64) {
        for &id in ids {
            let params = self.nets.parameters(id);
            self.state.optimizers[id as usize].step(&params, lr);
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            params: NetId::ALL
                .iter()
                .map(|&id| self.nets.state(id).into_iter().map(|(_, t)| t.detach().copy()).collect())
                .collect(),
            optimizers: self.state.optimizers.iter().map(Adam::snapshot).collect(),
            weights: self.state.weights,
            grad_norms: self.state.grad_norms,
        }
    }

    fn restore(&mut self, snap: &Snapshot) {
        tch::no_grad(|| {
            for (&id, saved) in NetId::ALL.iter().zip(&snap.params) {
                for ((_, t), s) in self.nets.state(id).iter().zip(saved) {
                    t.shallow_clone().copy_(s);
                }
            }
        });
        for (opt, s) in self.state.optimizers.iter_mut().zip(&snap.optimizers) {
            opt.restore(s);
        }
        self.state.weights = snap.weights;
        self.state.grad_norms = snap.grad_norms;
    }

    /// Generated images on both paths: random style and reference style from
    /// the style batch. Returns `(fake_random, fake_reference, z_s, posterior)`.
    fn generate_pair(
        &self,
        content: &Batch,
        style: &Batch,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Tensor, StyleVector, crate::networks::StylePosterior)> {
        let cfg = self.nets.config();
        let b = content.len() as usize;
        let z_s = StyleVector::random(rng, b, cfg.style_dim, self.nets.kind());
        let cond_random = make_style_condition(&z_s, cfg.noise_dim, rng)?;
        let fake_random = self.nets.generator.forward(&content.icons, &cond_random, true)?;
        let posterior = self.nets.encoder.forward(&style.sketches)?;
        let s_ref = posterior.sample(rng);
        let cond_ref = make_style_condition(&s_ref, cfg.noise_dim, rng)?;
        let fake_ref = self.nets.generator.forward(&content.icons, &cond_ref, true)?;
        Ok((fake_random, fake_ref, z_s, posterior))
    }

    /// Updates the discriminator, recognizer and identifier once. Fills the
    /// critic fields of `report`; returns false when a loss was not finite
    /// (nothing is updated then).
    pub fn critic_phase(
        &mut self,
        content: &Batch,
        style: &Batch,
        rng: &mut ChaCha8Rng,
        lr: f64,
        report: &mut LossReport,
    ) -> Result<bool> {
        let (fake_random, fake_ref) = tch::no_grad(|| -> Result<(Tensor, Tensor)> {
            let (a, b, _, _) = self.generate_pair(content, style, rng)?;
            Ok((a, b))
        })?;
        for id in NetId::CRITICS {
            zero_grads(&self.nets.parameters(id));
        }
        let n = content.len();
        let logits = self.nets.discriminator.logits(&Tensor::cat(
            &[content.sketches.shallow_clone(), fake_random, fake_ref],
            0,
        ))?;
        let real = logits.narrow(0, 0, n);
        let adv1 = adv_loss_from_logits(&real, &logits.narrow(0, n, n));
        let adv2 = adv_loss_from_logits(&real, &logits.narrow(0, 2 * n, n));
        let adv = &adv1 + &adv2;
        let class_d = class_loss_d(&self.nets.recognizer.logits(&content.sketches)?, &content.classes)?;
        let id_d = id_loss_d(&self.nets.identifier.logits(&content.sketches)?, &content.painters)?;
        let total = -&adv + &class_d + &id_d;

        report.adv1 = scalar(&adv1);
        report.adv2 = scalar(&adv2);
        report.adv = report.adv1 + report.adv2;
        report.total_d = -report.adv;
        report.class_d = scalar(&class_d);
        report.id_d = scalar(&id_d);
        if !scalar(&total).is_finite() {
            return Ok(false);
        }
        total.backward();
        self.optimizer_step(&NetId::CRITICS, lr);
        Ok(true)
    }

    /// Updates the generator and style encoder once with the critics frozen.
    pub fn generator_phase(
        &mut self,
        content: &Batch,
        style: &Batch,
        rng: &mut ChaCha8Rng,
        lr: f64,
        report: &mut LossReport,
    ) -> Result<bool> {
        self.nets.freeze(&NetId::CRITICS);
        let out = self.generator_losses(content, style, rng, report);
        self.nets.unfreeze(&NetId::CRITICS);
        let total = match out? {
            Some(t) => t,
            None => return Ok(false),
        };
        total.backward();
        self.optimizer_step(&NetId::GENERATORS, lr);
        Ok(true)
    }

    fn generator_losses(
        &mut self,
        content: &Batch,
        style: &Batch,
        rng: &mut ChaCha8Rng,
        report: &mut LossReport,
    ) -> Result<Option<Tensor>> {
        for id in NetId::GENERATORS {
            zero_grads(&self.nets.parameters(id));
        }
        let (fake_random, fake_ref, z_s, posterior) = self.generate_pair(content, style, rng)?;
        let n = content.len();
        let d = self
            .nets
            .discriminator
            .logits(&Tensor::cat(&[fake_random.shallow_clone(), fake_ref.shallow_clone()], 0))?;
        let adv_g = generator_adv_term(&d.narrow(0, 0, n), self.cfg.saturating)
            + generator_adv_term(&d.narrow(0, n, n), self.cfg.saturating);
        let class_g = class_loss_g(
            &self.nets.recognizer.logits(&fake_ref)?,
            &self.nets.recognizer.logits(&fake_random)?,
            &content.classes,
        )?;
        let id_g = id_loss_g(&self.nets.identifier.logits(&fake_ref)?, &style.painters)?;
        let style_l = style_recon_loss(z_s.values(), &self.nets.encoder.forward(&fake_random)?.mean)?;
        let kl = match kl_loss(&posterior) {
            Ok(k) => k,
            Err(Error::Numeric(_)) => {
                report.kl = f64::NAN;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };

        report.adv_g = scalar(&adv_g);
        report.class_g = scalar(&class_g);
        report.id_g = scalar(&id_g);
        report.style = scalar(&style_l);
        report.kl = scalar(&kl);

        if self.cfg.balance {
            let w = &self.nets.generator.out.weight;
            let norms = GradNorms {
                adv: grad_norm(&adv_g, w),
                class: grad_norm(&class_g, w),
                id: grad_norm(&id_g, w),
                style: grad_norm(&style_l, w),
            };
            self.state.weights = balance_weights(&norms, &self.state.weights, &self.cfg);
            if norms.is_finite() {
                let m = self.cfg.balance_momentum;
                let e = &mut self.state.grad_norms;
                let ema = |old: f64, new: f64| if self.state.step == 0 { new } else { m * old + (1.0 - m) * new };
                *e = GradNorms {
                    adv: ema(e.adv, norms.adv),
                    class: ema(e.class, norms.class),
                    id: ema(e.id, norms.id),
                    style: ema(e.style, norms.style),
                };
            }
        }
        let w = self.state.weights;
        let total = &adv_g
            + &class_g * w.lambda_class
            + &id_g * w.lambda_id
            + &style_l * w.lambda_style
            + &kl * w.lambda_kl;
        report.total_ge = scalar(&total);
        if !report.total_ge.is_finite() {
            return Ok(None);
        }
        Ok(Some(total))
    }

    /// One critic phase (repeated `critic_steps` times) then one generator
    /// phase. A non-finite loss restores the pre-step state; the step still
    /// counts so the next one draws fresh randomness.
    pub fn train_step(&mut self, content: &Batch, style: &Batch) -> Result<StepOutcome> {
        if content.len() != style.len() || content.is_empty() {
            return Err(Error::Shape(format!(
                "content batch of {} with style batch of {}",
                content.len(),
                style.len()
            )));
        }
        let lr = lr_schedule(self.state.epoch, &self.cfg);
        let mut rng = step_rng(self.cfg.seed, self.state.step);
        // the style sampler consumed the front of this stream; skip past it
        rng.set_word_pos(1 << 20);
        let snap = self.snapshot();
        let mut report = LossReport::default();
        let mut ok = true;
        for _ in 0..self.cfg.critic_steps {
            ok &= self.critic_phase(content, style, &mut rng, lr, &mut report)?;
            if !ok {
                break;
            }
        }
        if ok {
            ok = self.generator_phase(content, style, &mut rng, lr, &mut report)?;
        }
        self.state.step += 1;
        if ok {
            self.state.consecutive_aborts = 0;
            return Ok(StepOutcome { report, aborted: false });
        }
        self.restore(&snap);
        self.state.consecutive_aborts += 1;
        warn!(
            "step {}: non-finite loss, parameters restored ({} consecutive)",
            self.state.step - 1,
            self.state.consecutive_aborts
        );
        if self.state.consecutive_aborts >= self.cfg.max_consecutive_aborts {
            return Err(Error::Numeric(format!(
                "{} consecutive training steps produced non-finite losses",
                self.state.consecutive_aborts
            )));
        }
        Ok(StepOutcome { report, aborted: true })
    }

    fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ SHUFFLE_SALT);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Batches for the current step: the next slice of this epoch's
    /// permutation and an independently drawn style batch.
    fn next_batches(&self, ds: &Dataset, order: &[usize]) -> Result<(Batch, Batch)> {
        let b = self.cfg.batch_size;
        let start = self.state.batch_in_epoch * b;
        let content_idx = &order[start..(start + b).min(order.len())];
        let mut rng = step_rng(self.cfg.seed, self.state.step);
        let style_idx = content_idx
            .iter()
            .map(|_| sample_style_index(ds, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let kind = self.nets.kind();
        Ok((
            Batch::from_indices(ds, content_idx, kind)?,
            Batch::from_indices(ds, &style_idx, kind)?,
        ))
    }

    pub fn steps_per_epoch(&self, ds: &Dataset) -> usize {
        ds.len().div_ceil(self.cfg.batch_size)
    }

    /// Trains until `cfg.epochs` are done or `max_steps` more steps have run.
    /// With an output directory, writes `losses.jsonl`, per-epoch sample grids
    /// under `samples/`, periodic checkpoints under `checkpoints/` and
    /// `final.ckpt` when training completes.
    pub fn run(&mut self, ds: &Dataset, out: Option<&Path>, max_steps: Option<u64>) -> Result<Vec<LossReport>> {
        if ds.len() < self.cfg.batch_size {
            return Err(Error::Data(format!(
                "dataset has {} samples, fewer than one batch of {}",
                ds.len(),
                self.cfg.batch_size
            )));
        }
        if ds.resolution() != self.model_config().resolution {
            return Err(Error::Data(format!(
                "dataset resolution {} differs from the model's {}",
                ds.resolution(),
                self.model_config().resolution
            )));
        }
        let mut log = match out {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join("losses.jsonl");
                let f = fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| Error::io(&path, e))?;
                Some((path, std::io::BufWriter::new(f)))
            }
            None => None,
        };
        let per_epoch = self.steps_per_epoch(ds);
        let mut reports = Vec::new();
        let mut budget = max_steps.unwrap_or(u64::MAX);
        while self.state.epoch < self.cfg.epochs && budget > 0 {
            let order = self.epoch_order(ds.len(), self.state.epoch);
            while self.state.batch_in_epoch < per_epoch && budget > 0 {
                let (content, style) = self.next_batches(ds, &order)?;
                let outcome = self.train_step(&content, &style)?;
                budget -= 1;
                self.state.batch_in_epoch += 1;
                if let Some((path, w)) = log.as_mut() {
                    let rec = serde_json::json!({
                        "epoch": self.state.epoch,
                        "step": self.state.step - 1,
                        "aborted": outcome.aborted,
                        "weights": self.state.weights,
                        "losses": outcome.report,
                    });
                    writeln!(w, "{rec}").map_err(|e| Error::io(path.as_path(), e))?;
                }
                reports.push(outcome.report);
            }
            if self.state.batch_in_epoch < per_epoch {
                break;
            }
            let done = self.state.epoch;
            self.state.epoch += 1;
            self.state.batch_in_epoch = 0;
            if let Some(r) = reports.last() {
                info!(
                    "epoch {}/{}: adv {:.4} class_g {:.4} id_g {:.4} style {:.4} kl {:.4}",
                    done + 1,
                    self.cfg.epochs,
                    r.adv,
                    r.class_g,
                    r.id_g,
                    r.style,
                    r.kl
                );
            }
            if let Some(dir) = out {
                if self.cfg.sample_grids {
                    self.write_sample_grid(ds, &dir.join("samples").join(format!("epoch_{:03}.png", done + 1)))?;
                }
                let periodic = self.cfg.checkpoint_every > 0 && (done + 1) % self.cfg.checkpoint_every == 0;
                if periodic && self.state.epoch < self.cfg.epochs {
                    save_checkpoint(self, &dir.join("checkpoints").join(format!("epoch_{:03}.ckpt", done + 1)))?;
                }
            }
        }
        if let Some((path, mut w)) = log {
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        if let Some(dir) = out {
            if self.state.epoch >= self.cfg.epochs {
                save_checkpoint(self, &dir.join("final.ckpt"))?;
            }
        }
        Ok(reports)
    }

    /// Grid of generated sketches, one row per fixed content icon and one
    /// column per fixed random style. Uses its own random stream.
    pub fn write_sample_grid(&self, ds: &Dataset, path: &Path) -> Result<PathBuf> {
        let cfg = self.nets.config();
        let icons: Vec<_> = ds.icon_table().values().take(GRID_SIZE).cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ GRID_SALT);
        let styles = StyleVector::random(&mut rng, GRID_SIZE, cfg.style_dim, self.nets.kind());
        let cond = make_style_condition(&styles, cfg.noise_dim, &mut rng)?;
        let rows = tch::no_grad(|| -> Result<Vec<Vec<raster::Raster>>> {
            icons
                .iter()
                .map(|icon| {
                    let m = icon.to_tensor(self.nets.kind()).repeat([GRID_SIZE as i64, 1, 1, 1]);
                    raster::unstack(&self.nets.generator.forward(&m, &cond, false)?)
                })
                .collect()
        })?;
        let sheet = raster::contact_sheet(&rows)?;
        sheet.save_png(path)?;
        Ok(path.to_path_buf())
    }
}

/// Trains a fresh model on `dataset`.
pub fn fit(dataset: &Dataset, cfg: &TrainConfig, model_cfg: &ModelConfig, out: Option<&Path>) -> Result<Trainer> {
    let mut trainer = Trainer::new(model_cfg, cfg)?;
    trainer.run(dataset, out, None)?;
    Ok(trainer)
}
