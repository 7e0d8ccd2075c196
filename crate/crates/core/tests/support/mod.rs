//! Criterion checks shared by the acceptance harness. Each returns a short
//! summary on success and a description of the first violation otherwise.

#![allow(dead_code)]

pub mod e2e;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchgan::dataset::{
    all_compositions, class_extension_split, make_toy_dataset, sample_style_index, split_by_painter, ExtensionOption,
};
use sketchgan::evaluation::{fid, gaussian_stats, inception_score, kid, psnr, GaussianStats};
use sketchgan::networks::{
    condition_with_noise, gaussian, make_style_condition, ConditionalBatchNorm, ModelConfig, NetId, Networks,
    ParamInit, StyleCondition, StylePosterior, StyleVector,
};
use sketchgan::objectives::{
    adv_loss, adv_loss_1, adv_loss_2, adv_loss_from_logits, class_loss_d, class_loss_g, critic_objectives,
    generator_adv_term, id_loss_d, id_loss_g, kl_loss, style_recon_loss, total_ge_loss, LossReport, LossWeights,
};
use sketchgan::raster::Raster;
use sketchgan::trainer::{balance_weights, load_checkpoint, lr_schedule, save_checkpoint, Batch, GradNorms, TrainConfig, Trainer};
use tch::{nn, Kind, Tensor};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}
#[allow(unused_imports)]
pub(crate) use ensure;

pub fn within(budget: Duration, start: Instant) -> Result<Duration, String> {
    let e = start.elapsed();
    ensure!(e <= budget, "took {:.2?}, budget {:.0?}", e, budget);
    Ok(e)
}

fn lib<T>(r: sketchgan::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn f64s(v: &[f64]) -> Tensor {
    Tensor::from_slice(v)
}

fn v(t: &Tensor) -> f64 {
    t.double_value(&[])
}

// ---------------------------------------------------------------- 1

pub fn loss_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fixtures = 100;
    for k in 0..fixtures {
        let n = rng.gen_range(1..=16);
        let probs = |rng: &mut ChaCha8Rng| f64s(&(0..n).map(|_| rng.gen_range(1e-4..1.0 - 1e-4)).collect::<Vec<_>>());
        let (real, f1, f2) = (probs(&mut rng), probs(&mut rng), probs(&mut rng));
        let a1 = lib(adv_loss_1(&real, &f1))?;
        let a2 = lib(adv_loss_2(&real, &f2))?;
        let adv = v(&adv_loss(&a1, &a2));
        ensure!(adv == v(&a1) + v(&a2), "fixture {k}: adv {adv} != adv1 + adv2");
        ensure!(v(&adv_loss(&a2, &a1)) == adv, "fixture {k}: adv not commutative");

        let report = LossReport {
            adv1: v(&a1),
            adv2: v(&a2),
            adv,
            ..LossReport::default()
        };
        let (l_d, _, _) = critic_objectives(&report);
        ensure!(l_d == -adv, "fixture {k}: L_D {l_d} != -adv {adv}");

        let c = rng.gen_range(2..=9);
        let logits = |rng: &mut ChaCha8Rng| {
            Tensor::from_slice(&(0..n * c).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<f64>>()).view([n as i64, c as i64])
        };
        let labels = Tensor::from_slice(&(0..n).map(|_| rng.gen_range(0..c as i64)).collect::<Vec<_>>());
        let (lr, lz) = (logits(&mut rng), logits(&mut rng));
        let g = v(&lib(class_loss_g(&lr, &lz, &labels))?);
        let parts = v(&lib(class_loss_d(&lr, &labels))?) + v(&lib(class_loss_d(&lz, &labels))?);
        ensure!(g == parts, "fixture {k}: class_loss_g {g} != path sum {parts}");
    }
    let e = within(Duration::from_secs(1), start)?;
    Ok(format!("{fixtures} randomized fixtures exact, {e:.2?}"))
}

// ---------------------------------------------------------------- 2

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure!((got - want).abs() <= tol, "{name}: got {got}, expected {want} ± {tol}");
    Ok(())
}

pub fn closed_form_losses() -> Outcome {
    let start = Instant::now();
    let tol = 1e-6;
    let half = f64s(&[0.5, 0.5, 0.5]);
    let ln = f64::ln;
    close("adv_loss_1 at D=0.5", v(&lib(adv_loss_1(&half, &half))?), 2.0 * ln(0.5), tol)?;
    close("adv_loss_2 at D=0.5", v(&lib(adv_loss_2(&half, &half))?), 2.0 * ln(0.5), tol)?;
    close("adv at D=0.5 (rounded)", v(&lib(adv_loss_1(&half, &half))?), -1.3863, 5e-5)?;
    let (real, fake) = (f64s(&[0.9, 0.8]), f64s(&[0.1, 0.3]));
    let want = (ln(0.9) + ln(0.8)) / 2.0 + (ln(0.9) + ln(0.7)) / 2.0;
    close("adv_loss_1 fixture", v(&lib(adv_loss_1(&real, &fake))?), want, tol)?;
    close("adv_loss_2 fixture", v(&lib(adv_loss_2(&real, &fake))?), want, tol)?;
    // The four-digit rounding of this fixture is -0.3953.
    close("adv fixture (rounded)", want, -0.3953, 5e-5)?;
    let logit = |p: f64| ln(p / (1.0 - p));
    let from_logits = adv_loss_from_logits(&f64s(&[logit(0.9), logit(0.8)]), &f64s(&[logit(0.1), logit(0.3)]));
    close("adv from logits fixture", v(&from_logits), want, tol)?;

    let uniform4 = Tensor::zeros([3, 4], (Kind::Double, tch::Device::Cpu));
    let labels = Tensor::from_slice(&[0i64, 3, 1]);
    close("class_loss_d uniform C=4", v(&lib(class_loss_d(&uniform4, &labels))?), ln(4.0), tol)?;
    close("class_loss_g uniform C=4", v(&lib(class_loss_g(&uniform4, &uniform4, &labels))?), 2.0 * ln(4.0), tol)?;
    let two = f64s(&[2.0, 0.0]).view([1, 2]);
    close("class_loss_d (2,0)|0", v(&lib(class_loss_d(&two, &Tensor::from_slice(&[0i64])))?), ln(1.0 + (-2f64).exp()), tol)?;
    close("class_loss_d (2,0)|0 rounded", v(&lib(class_loss_d(&two, &Tensor::from_slice(&[0i64])))?), 0.1269, 5e-5)?;
    let one_hot = f64s(&[60.0, 0.0, 0.0, 0.0]).view([1, 4]);
    close("class_loss_d one-hot", v(&lib(class_loss_d(&one_hot, &Tensor::from_slice(&[0i64])))?), 0.0, tol)?;
    let uniform6 = Tensor::zeros([2, 6], (Kind::Double, tch::Device::Cpu));
    close("id_loss_d uniform P=6", v(&lib(id_loss_d(&uniform6, &Tensor::from_slice(&[5i64, 0])))?), ln(6.0), tol)?;
    close("id_loss_g uniform P=6", v(&lib(id_loss_g(&uniform6, &Tensor::from_slice(&[2i64, 4])))?), ln(6.0), tol)?;
    let id = v(&lib(id_loss_d(&two, &Tensor::from_slice(&[1i64])))?);
    close("id_loss_d (2,0)|1", id, 2.0 + ln(1.0 + (-2f64).exp()), tol)?;
    close("id_loss_d (2,0)|1 rounded", id, 2.1269, 5e-5)?;

    let dim = 8;
    let post = |mu: f64, lv: f64| StylePosterior {
        mean: Tensor::full([3, dim], mu, (Kind::Double, tch::Device::Cpu)),
        log_variance: Tensor::full([3, dim], lv, (Kind::Double, tch::Device::Cpu)),
    };
    close("kl at the prior", v(&lib(kl_loss(&post(0.0, 0.0)))?), 0.0, tol)?;
    close("kl mu=1 sigma=1", v(&lib(kl_loss(&post(1.0, 0.0)))?), 0.5 * dim as f64, tol)?;

    let l1 = lib(style_recon_loss(&f64s(&[0.0, 0.0, 0.0, 0.0]).view([1, 4]), &f64s(&[1.0, -1.0, 2.0, 0.0]).view([1, 4])))?;
    close("style L1 fixture", v(&l1), 1.0, tol)?;
    let same = f64s(&[0.3, -2.0, 1.5]).view([1, 3]);
    close("style L1 identical", v(&lib(style_recon_loss(&same, &same))?), 0.0, tol)?;

    let unit = LossReport {
        adv_g: 1.0,
        class_g: 1.0,
        id_g: 1.0,
        style: 1.0,
        kl: 1.0,
        ..LossReport::default()
    };
    close("total_ge unit losses", total_ge_loss(&unit, &LossWeights::default()), 4.001, 1e-12)?;
    let e = within(Duration::from_secs(1), start)?;
    Ok(format!("all closed forms within 1e-6, {e:.2?}"))
}

// ---------------------------------------------------------------- 3

/// Central-difference check of `loss` against autograd over a few entries of
/// every tensor in `wrt`. Returns the worst relative error and the count.
pub fn fd_check(
    wrt: &[(String, Tensor)],
    per_tensor: usize,
    rng: &mut ChaCha8Rng,
    loss: &dyn Fn() -> Tensor,
) -> Result<(f64, usize), String> {
    const H: f64 = 1e-6;
    const ABS_FLOOR: f64 = 1e-9;
    for (_, t) in wrt {
        let mut g = t.grad();
        if g.defined() {
            let _ = g.zero_();
        }
    }
    loss().backward();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (name, t) in wrt {
        let flat = t.detach().view([-1]);
        let n = flat.size()[0];
        let grad = t.grad();
        for _ in 0..per_tensor.min(n as usize) {
            let i = rng.gen_range(0..n);
            let analytic = if grad.defined() { grad.view([-1]).double_value(&[i]) } else { 0.0 };
            let orig = flat.double_value(&[i]);
            let at = |x: f64| -> f64 {
                tch::no_grad(|| {
                    let _ = flat.get(i).fill_(x);
                });
                loss().double_value(&[])
            };
            let numeric = (at(orig + H) - at(orig - H)) / (2.0 * H);
            at(orig);
            let diff = (analytic - numeric).abs();
            let rel = if diff <= ABS_FLOOR { 0.0 } else { diff / analytic.abs().max(numeric.abs()) };
            if rel > 1e-4 {
                return Err(format!("{name}[{i}]: autograd {analytic:e}, finite difference {numeric:e} (rel {rel:e})"));
            }
            worst = worst.max(rel);
            count += 1;
        }
    }
    Ok((worst, count))
}

pub fn miniature_config() -> ModelConfig {
    ModelConfig {
        resolution: 8,
        style_dim: 4,
        noise_dim: 4,
        base_channels: 1,
        cbn_sites: 4,
        classifier_hidden: 4,
        class_count: 3,
        painter_count: 2,
    }
}

/// Double-precision miniature networks with parameters redrawn at a scale
/// where gradients are well above finite-difference noise.
pub fn miniature_networks(seed: u64) -> Networks {
    let nets = Networks::new(&miniature_config(), seed, Kind::Double).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tch::no_grad(|| {
        for id in NetId::ALL {
            for (_, p) in nets.parameters(id) {
                let _ = p.shallow_clone().copy_(&(gaussian(&mut rng, &p.size(), Kind::Double) * 0.5));
            }
        }
    });
    nets
}

fn input(rng: &mut ChaCha8Rng, shape: &[i64]) -> Tensor {
    gaussian(rng, shape, Kind::Double).tanh().set_requires_grad(true)
}

pub fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let nets = miniature_networks(7);
    let cfg = nets.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = 3i64;
    let r = cfg.resolution as i64;
    let x = input(&mut rng, &[b, 1, r, r]);
    let x_style = input(&mut rng, &[b, 1, r, r]);
    let icon = input(&mut rng, &[b, 1, r, r]);
    let fake = input(&mut rng, &[b, 1, r, r]);
    let cond = gaussian(&mut rng, &[b, cfg.condition_len() as i64], Kind::Double).set_requires_grad(true);
    let z_s = gaussian(&mut rng, &[b, cfg.style_dim as i64], Kind::Double);
    let classes = Tensor::from_slice(&[0i64, 2, 1]);
    let painters = Tensor::from_slice(&[1i64, 0, 1]);

    let g = &nets.generator;
    let e = &nets.encoder;
    let d = &nets.discriminator;
    let rec = &nets.recognizer;
    let ident = &nets.identifier;
    let gen = |c: &Tensor| g.forward(&icon, &StyleCondition::new(c.shallow_clone(), cfg.cbn_sites).unwrap(), true).unwrap();
    let reference_cond = || {
        let post = e.forward(&x_style).unwrap();
        let mut eps_rng = ChaCha8Rng::seed_from_u64(11);
        let s = post.sample(&mut eps_rng);
        let noise = gaussian(&mut eps_rng, &[b, cfg.noise_dim as i64], Kind::Double);
        condition_with_noise(&s, &noise).unwrap().values().shallow_clone()
    };
    let random_cond = || {
        let noise = cond.narrow(1, cfg.style_dim as i64, cfg.noise_dim as i64).detach();
        Tensor::cat(&[z_s.shallow_clone(), noise], 1)
    };
    let params = |ids: &[NetId]| ids.iter().flat_map(|&id| nets.parameters(id)).collect::<Vec<_>>();
    let with = |mut p: Vec<(String, Tensor)>, extra: &[(&str, &Tensor)]| {
        p.extend(extra.iter().map(|(n, t)| (n.to_string(), t.shallow_clone())));
        p
    };

    type Case<'a> = (&'static str, Vec<(String, Tensor)>, Box<dyn Fn() -> Tensor + 'a>);
    let cases: Vec<Case> = vec![
        (
            "adv_loss_1 through D",
            with(params(&[NetId::Discriminator]), &[("x", &x)]),
            Box::new(|| adv_loss_1(&d.forward(&x).unwrap(), &d.forward(&fake).unwrap()).unwrap()),
        ),
        (
            "adv_loss_2 through D",
            with(params(&[NetId::Discriminator]), &[("fake", &fake)]),
            Box::new(|| adv_loss_2(&d.forward(&x).unwrap(), &d.forward(&fake).unwrap()).unwrap()),
        ),
        (
            "adversarial logits form through D",
            params(&[NetId::Discriminator]),
            Box::new(|| adv_loss_from_logits(&d.logits(&x).unwrap(), &d.logits(&fake).unwrap())),
        ),
        (
            "non-saturating generator term through G and D",
            with(params(&[NetId::Generator]), &[("condition", &cond), ("icon", &icon)]),
            Box::new(|| generator_adv_term(&d.logits(&gen(&cond)).unwrap(), false)),
        ),
        (
            "saturating generator term through G and D",
            params(&[NetId::Generator]),
            Box::new(|| generator_adv_term(&d.logits(&gen(&cond)).unwrap(), true)),
        ),
        (
            "class_loss_d through R",
            with(params(&[NetId::Recognizer]), &[("x", &x)]),
            Box::new(|| class_loss_d(&rec.logits(&x).unwrap(), &classes).unwrap()),
        ),
        (
            "class_loss_g through G, E and R",
            params(&[NetId::Generator, NetId::StyleEncoder]),
            Box::new(|| {
                class_loss_g(&rec.logits(&gen(&reference_cond())).unwrap(), &rec.logits(&gen(&random_cond())).unwrap(), &classes)
                    .unwrap()
            }),
        ),
        (
            "id_loss_d through I",
            params(&[NetId::Identifier]),
            Box::new(|| id_loss_d(&ident.logits(&x).unwrap(), &painters).unwrap()),
        ),
        (
            "id_loss_g through G, E and I",
            with(params(&[NetId::Generator, NetId::StyleEncoder]), &[("style image", &x_style)]),
            Box::new(|| id_loss_g(&ident.logits(&gen(&reference_cond())).unwrap(), &painters).unwrap()),
        ),
        (
            "style_recon_loss through G and E",
            params(&[NetId::Generator, NetId::StyleEncoder]),
            Box::new(|| style_recon_loss(&z_s, &e.forward(&gen(&random_cond())).unwrap().mean).unwrap()),
        ),
        (
            "kl_loss through E",
            with(params(&[NetId::StyleEncoder]), &[("style image", &x_style)]),
            Box::new(|| kl_loss(&e.forward(&x_style).unwrap()).unwrap()),
        ),
        (
            "E posterior mean vs input pixels",
            vec![("style image".into(), x_style.shallow_clone())],
            Box::new(|| (e.forward(&x_style).unwrap().mean * &z_s).sum(Kind::Double)),
        ),
    ];

    let mut total = 0;
    let mut worst: f64 = 0.0;
    for (name, wrt, f) in &cases {
        let (w, n) = fd_check(wrt, 2, &mut rng, f.as_ref()).map_err(|m| format!("{name}: {m}"))?;
        total += n;
        worst = worst.max(w);
    }

    // a lone conditional batch norm on a 2x2x2 feature map
    let vs = nn::VarStore::new(tch::Device::Cpu);
    let mut init = ParamInit::new(5, 1);
    let cbn = ConditionalBatchNorm::new(&vs.root(), &mut init, 2, 3);
    let mut vs = vs;
    vs.set_kind(Kind::Double);
    tch::no_grad(|| {
        for (_, p) in vs.variables() {
            let _ = p.shallow_clone().copy_(&(gaussian(&mut rng, &p.size(), Kind::Double) * 0.5 + 0.3));
        }
    });
    let feats = gaussian(&mut rng, &[b, 2, 2, 2], Kind::Double).set_requires_grad(true);
    let chunk = gaussian(&mut rng, &[b, 3], Kind::Double).set_requires_grad(true);
    let mix = gaussian(&mut rng, &[b, 2, 2, 2], Kind::Double);
    let mut wrt: Vec<(String, Tensor)> = vs.variables().into_iter().filter(|(_, t)| t.requires_grad()).collect();
    wrt.push(("chunk".into(), chunk.shallow_clone()));
    wrt.push(("features".into(), feats.shallow_clone()));
    let (w, n) = fd_check(&wrt, 6, &mut rng, &|| (cbn.forward(&feats, &chunk, true).unwrap() * &mix).sum(Kind::Double))
        .map_err(|m| format!("conditional batch norm: {m}"))?;
    total += n;
    worst = worst.max(w);

    let e = within(Duration::from_secs(120), start)?;
    Ok(format!(
        "{} losses + CBN, {total} coordinates, worst rel err {worst:.1e}, {e:.2?}",
        cases.len()
    ))
}

// ---------------------------------------------------------------- 4

pub fn small_trainer(seed: u64) -> (Trainer, sketchgan::dataset::Dataset) {
    let ds = make_toy_dataset(4, 3, 4, 32, seed).unwrap();
    let model = ModelConfig {
        resolution: 32,
        style_dim: 8,
        noise_dim: 8,
        base_channels: 4,
        classifier_hidden: 16,
        class_count: 4,
        painter_count: 3,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 20,
        decay_start_epoch: 5,
        batch_size: 4,
        seed,
        sample_grids: false,
        ..TrainConfig::default()
    };
    (Trainer::new(&model, &cfg).unwrap(), ds)
}

fn values(nets: &Networks, ids: &[NetId]) -> Vec<Tensor> {
    ids.iter()
        .flat_map(|&id| nets.parameters(id))
        .map(|(_, t)| t.detach().copy())
        .collect()
}

fn same(a: &[Tensor], b: &[Tensor]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.equal(y))
}

pub fn fixed_critic() -> Outcome {
    let start = Instant::now();
    let (mut t, ds) = small_trainer(2);
    let content = lib(Batch::from_indices(&ds, &[0, 5, 17, 40], Kind::Float))?;
    let style = lib(Batch::from_indices(&ds, &[33, 2, 9, 21], Kind::Float))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut report = LossReport::default();

    let ge_before = values(&t.nets, &NetId::GENERATORS);
    ensure!(lib(t.critic_phase(&content, &style, &mut rng, 1e-3, &mut report))?, "critic phase aborted");
    ensure!(same(&ge_before, &values(&t.nets, &NetId::GENERATORS)), "critic phase changed G/E parameters");

    // critic gradients now exist; clear them and run the generator phase
    let mut touched = 0;
    for id in NetId::CRITICS {
        for (_, p) in t.nets.parameters(id) {
            let mut g = p.grad();
            ensure!(g.defined(), "critic phase left {} without gradients", id.name());
            let _ = g.zero_();
            touched += 1;
        }
    }
    let critics_before = values(&t.nets, &NetId::CRITICS);
    ensure!(lib(t.generator_phase(&content, &style, &mut rng, 1e-3, &mut report))?, "generator phase aborted");
    for id in NetId::CRITICS {
        for (name, p) in t.nets.parameters(id) {
            let g = p.grad();
            let zero = !g.defined() || g.abs().max().double_value(&[]) == 0.0;
            ensure!(zero, "generator phase wrote gradient into {}/{name}", id.name());
        }
    }
    ensure!(same(&critics_before, &values(&t.nets, &NetId::CRITICS)), "generator phase changed D/R/I");
    let moved = t
        .nets
        .parameters(NetId::Generator)
        .iter()
        .any(|(_, p)| p.grad().defined() && p.grad().abs().max().double_value(&[]) > 0.0);
    ensure!(moved, "generator phase produced no generator gradient");
    ensure!(!same(&ge_before, &values(&t.nets, &NetId::GENERATORS)), "generator phase left G/E unchanged");
    let e = within(Duration::from_secs(10), start)?;
    Ok(format!("{touched} critic tensors stayed at zero gradient, {e:.2?}"))
}

// ---------------------------------------------------------------- 5

fn brute_mmd2(x: &[[f64; 2]], y: &[[f64; 2]]) -> f64 {
    let k = |a: &[f64; 2], b: &[f64; 2]| ((a[0] * b[0] + a[1] * b[1]) / 2.0 + 1.0).powi(3);
    let mut xx = 0.0;
    let mut yy = 0.0;
    let mut xy = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            if i != j {
                xx += k(&x[i], &x[j]);
            }
        }
    }
    for i in 0..y.len() {
        for j in 0..y.len() {
            if i != j {
                yy += k(&y[i], &y[j]);
            }
        }
    }
    for a in x {
        for b in y {
            xy += k(a, b);
        }
    }
    let (m, n) = (x.len() as f64, y.len() as f64);
    xx / (m * (m - 1.0)) + yy / (n * (n - 1.0)) - 2.0 * xy / (m * n)
}

pub fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let feats = DMatrix::from_fn(50, 3, |_, _| rng.gen_range(-1.0..1.0));
    let s = lib(gaussian_stats(&feats))?;
    ensure!(lib(fid(&s, &s))? == 0.0, "fid(S, S) != 0");

    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let a = GaussianStats {
        mean: DVector::from_vec(vec![1.0, -2.0]),
        covariance: cov.clone(),
    };
    let b = GaussianStats {
        mean: DVector::from_vec(vec![4.0, 2.0]),
        covariance: cov,
    };
    close("mean-shift FID d=(3,4)", lib(fid(&a, &b))?, 25.0, 1e-9)?;

    let da: [f64; 3] = [0.5, 2.0, 3.0];
    let db: [f64; 3] = [1.5, 0.25, 3.0];
    let diag = |d: &[f64]| GaussianStats {
        mean: DVector::zeros(3),
        covariance: DMatrix::from_diagonal(&DVector::from_column_slice(d)),
    };
    let want: f64 = da.iter().zip(&db).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum();
    close("diagonal FID", lib(fid(&diag(&da), &diag(&db)))?, want, 1e-9)?;

    let x = [[0.5, -1.0], [2.0, 0.25], [-1.5, 1.0]];
    let y = [[1.0, 1.0], [0.0, -2.0], [0.75, 0.5]];
    let m = |p: &[[f64; 2]]| DMatrix::from_fn(p.len(), 2, |i, j| p[i][j]);
    let got = lib(kid(&m(&x), &m(&y), 100, 10, &mut rng))?;
    close("KID 3-point brute force", got, brute_mmd2(&x, &y), 1e-12)?;
    close("KID symmetric", lib(kid(&m(&y), &m(&x), 100, 10, &mut rng))?, got, 1e-12)?;

    let c = 4;
    let one_hot = DMatrix::from_fn(4 * c, c, |i, j| if i % c == j { 1.0 } else { 0.0 });
    close("IS one-hot C=4", lib(inception_score(&one_hot, 1))?, c as f64, 1e-9)?;

    let zeros = Raster::zeros(4, 4);
    let ones = lib(Raster::from_pixels(4, 4, vec![1.0; 16]))?;
    close("PSNR 0 vs 1", lib(psnr(&zeros, &ones, 1.0))?, 0.0, 1e-6)?;
    let half = lib(Raster::from_pixels(4, 4, (0..16).map(|i| if i % 2 == 0 { 0.5 } else { 0.0 }).collect()))?;
    // MSE 0.125
    close("PSNR half pixels off by 0.5", lib(psnr(&zeros, &half, 1.0))?, 10.0 * 8f64.log10(), 1e-6)?;
    let quarter = lib(Raster::from_pixels(4, 4, vec![0.25; 16]))?;
    // MSE 0.0625
    close("PSNR all pixels off by 0.25", lib(psnr(&zeros, &quarter, 1.0))?, 12.0412, 5e-5)?;
    close("PSNR all pixels off by 0.25", lib(psnr(&zeros, &quarter, 1.0))?, 10.0 * 16f64.log10(), 1e-6)?;
    let e = within(Duration::from_secs(10), start)?;
    Ok(format!("FID, KID, IS and PSNR oracles matched, {e:.2?}"))
}

// ---------------------------------------------------------------- 6

pub fn style_condition_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for &(ds, dn, k) in &[(32usize, 32usize, 4usize), (4, 4, 4), (6, 2, 4), (8, 16, 4)] {
        let style = StyleVector::random(&mut rng, 5, ds, Kind::Float);
        let c1 = lib(make_style_condition(&style, dn, &mut rng))?;
        let c2 = lib(make_style_condition(&style, dn, &mut rng))?;
        ensure!(c1.values().size() == [5, (ds + dn) as i64], "condition length for ({ds}, {dn})");
        for c in [&c1, &c2] {
            ensure!(c.values().narrow(1, 0, ds as i64).equal(style.values()), "style prefix not bit-exact");
        }
        ensure!(
            !c1.values().narrow(1, ds as i64, dn as i64).equal(&c2.values().narrow(1, ds as i64, dn as i64)),
            "two draws produced the same noise suffix"
        );
        let chunks = c1.chunks(k);
        ensure!(chunks.len() == k, "expected {k} chunks");
        ensure!(chunks.iter().all(|c| c.size()[1] == ((ds + dn) / k) as i64), "unequal chunks");
        ensure!(Tensor::cat(&chunks, 1).equal(c1.values()), "chunks do not reconstruct the condition");
    }
    let bad = ModelConfig {
        style_dim: 5,
        noise_dim: 2,
        ..ModelConfig::default()
    };
    ensure!(matches!(bad.validate(), Err(sketchgan::Error::Config(_))), "indivisible D_s + D_n accepted");
    ensure!(
        matches!(StyleCondition::new(Tensor::zeros([2, 7], (Kind::Float, tch::Device::Cpu)), 4), Err(sketchgan::Error::Shape(_))),
        "condition of length 7 accepted for 4 sites"
    );
    let style = StyleVector::random(&mut rng, 1, 4, Kind::Double);
    let draws = 100_000;
    let cond = lib(make_style_condition(
        &StyleVector::new(style.values().repeat([draws, 1]), 4).map_err(|e| e.to_string())?,
        4,
        &mut rng,
    ))?;
    let noise = cond.values().narrow(1, 4, 4);
    let (mean, var) = (v(&noise.mean(None)), v(&noise.var(true)));
    ensure!(mean.abs() < 0.02 && (var - 1.0).abs() < 0.05, "noise mean {mean}, variance {var}");
    let e = within(Duration::from_secs(1), start)?;
    Ok(format!("prefix, chunking and divisibility hold; noise mean {mean:.4} var {var:.4}, {e:.2?}"))
}

// ---------------------------------------------------------------- 7

pub fn schedule_and_balancing() -> Outcome {
    let start = Instant::now();
    let cfg = TrainConfig::default();
    ensure!(lr_schedule(0, &cfg) == 1e-4, "lr(0) = {}", lr_schedule(0, &cfg));
    ensure!(lr_schedule(25, &cfg) == 1e-4, "lr(25) = {}", lr_schedule(25, &cfg));
    ensure!(lr_schedule(47, &cfg) == 5e-5, "lr(47) = {}", lr_schedule(47, &cfg));
    ensure!(lr_schedule(69, &cfg) == 0.0, "lr(69) = {}", lr_schedule(69, &cfg));
    for e in 0..80 {
        ensure!(lr_schedule(e + 1, &cfg) <= lr_schedule(e, &cfg), "lr increases at epoch {e}");
    }

    let prev = LossWeights::default();
    for n in [1e-6, 0.3, 1.0, 7.5, 1e4] {
        let w = balance_weights(
            &GradNorms {
                adv: n,
                class: n,
                id: n,
                style: n,
            },
            &prev,
            &cfg,
        );
        ensure!(w == prev, "equal norms {n} moved the weights to {w:?}");
    }
    let w = balance_weights(
        &GradNorms {
            adv: 2.0,
            class: 2.0,
            id: 2.0,
            style: 1.0,
        },
        &prev,
        &cfg,
    );
    close("lambda_style after ‖g_adv‖=2, ‖g_style‖=1", w.lambda_style, 1.1, 1e-12)?;
    let w = balance_weights(
        &GradNorms {
            adv: 1.0,
            class: 0.0,
            id: 1e9,
            style: 1.0,
        },
        &prev,
        &cfg,
    );
    ensure!(w.lambda_class == 100.0 && w.lambda_id == 0.9 * 1.0 + (1.0 - 0.9) * 1e-9, "zero-norm clip: {w:?}");
    let mut w = prev;
    for _ in 0..200 {
        w = balance_weights(
            &GradNorms {
                adv: 1.0,
                class: 1e6,
                id: 0.0,
                style: 1.0,
            },
            &w,
            &cfg,
        );
    }
    ensure!(w.lambda_class == 0.01 && w.lambda_id == 100.0, "clip bounds not reached exactly: {w:?}");
    ensure!(w.lambda_kl == prev.lambda_kl, "lambda_kl changed");
    let e = within(Duration::from_secs(1), start)?;
    Ok(format!("lr fixtures, fixed point and clip bounds exact, {e:.2?}"))
}

// ---------------------------------------------------------------- 8

pub fn determinism_and_resume() -> Outcome {
    let start = Instant::now();
    let steps = 100;
    let (mut a, ds) = small_trainer(21);
    let ra = lib(a.run(&ds, None, Some(steps)))?;
    let (mut b, _) = small_trainer(21);
    let rb = lib(b.run(&ds, None, Some(steps)))?;
    ensure!(ra.len() == steps as usize, "run produced {} reports", ra.len());
    ensure!(ra.iter().all(LossReport::is_finite), "non-finite report");
    if let Some(i) = (0..ra.len()).find(|&i| ra[i] != rb[i]) {
        return Err(format!("seeded runs diverge at step {i}: {:?} vs {:?}", ra[i], rb[i]));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("mid.ckpt");
    let (mut c, _) = small_trainer(21);
    let mut rc = lib(c.run(&ds, None, Some(37)))?;
    lib(save_checkpoint(&c, &path))?;
    drop(c);
    let mut resumed = lib(load_checkpoint(&path))?;
    rc.extend(lib(resumed.run(&ds, None, Some(steps - 37)))?);
    if let Some(i) = (0..ra.len()).find(|&i| ra[i] != rc[i]) {
        return Err(format!("resumed run diverges at step {i}: {:?} vs {:?}", ra[i], rc[i]));
    }
    for id in NetId::ALL {
        ensure!(
            same(&values(&a.nets, &[id]), &values(&resumed.nets, &[id])),
            "{} parameters differ after resume",
            id.name()
        );
    }
    let e = within(Duration::from_secs(300), start)?;
    Ok(format!("{steps}-step streams identical; resume at step 37 bit-identical, {e:.2?}"))
}

// ---------------------------------------------------------------- 10

/// Upper 0.001 quantile of the chi-square distribution with 3 degrees of freedom.
const CHI2_3DF_P001: f64 = 16.266;

pub fn dataset_protocol() -> Outcome {
    let start = Instant::now();
    let ds = lib(make_toy_dataset(8, 10, 2, 32, 3))?;
    for seed in 0..50 {
        for frac in [0.1, 0.2, 0.5] {
            let (train, test) = lib(split_by_painter(&ds, frac, seed))?;
            let tp = train.painters_present();
            let sp = test.painters_present();
            ensure!(tp.is_disjoint(&sp), "seed {seed}: painters shared across split");
            ensure!(train.len() + test.len() == ds.len(), "seed {seed}: samples lost");
            let want = ((frac * 10.0).round() as usize).max(1);
            ensure!(sp.len() == want, "seed {seed}, fraction {frac}: {} test painters", sp.len());
            let names: BTreeSet<_> = train.painter_identities();
            ensure!(names.is_disjoint(&test.painter_identities()), "painter identities shared");
        }
    }

    let four = lib(make_toy_dataset(2, 2, 1, 32, 0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 10_000;
    let mut counts = [0usize; 4];
    for _ in 0..draws {
        counts[lib(sample_style_index(&four, &mut rng))?] += 1;
    }
    let expected = draws as f64 / 4.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    ensure!(chi2 < CHI2_3DF_P001, "style sampling chi-square {chi2:.2} (counts {counts:?})");

    let big = lib(make_toy_dataset(24, 3, 1, 32, 5))?;
    let comps = all_compositions();
    let (tr, te) = lib(class_extension_split(&big, 12, ExtensionOption::Recombination))?;
    let seen: BTreeSet<_> = tr.classes_present().iter().flat_map(|&c| comps[c].component_set()).collect();
    for c in te.classes_present() {
        ensure!(comps[c].component_set().is_subset(&seen), "recombination class {c} has an unseen component");
    }
    ensure!(tr.painters_present() == te.painters_present(), "recombination split moved painters");
    let (tr, te) = lib(class_extension_split(&big, 12, ExtensionOption::NovelComponents))?;
    let seen: BTreeSet<_> = tr.classes_present().iter().flat_map(|&c| comps[c].component_set()).collect();
    for c in te.classes_present() {
        ensure!(!comps[c].component_set().is_subset(&seen), "novel class {c} has only seen components");
    }
    ensure!(tr.classes_present().is_disjoint(&te.classes_present()), "class shared across extension split");
    ensure!(tr.painters_present() == te.painters_present(), "novel-component split moved painters");
    let e = within(Duration::from_secs(30), start)?;
    Ok(format!(
        "150 disjoint splits; chi-square {chi2:.2} < {CHI2_3DF_P001}; both extension options hold, {e:.2?}"
    ))
}
