//! Scaled toy end-to-end run: one generator trained on 8 toy classes, probes
//! trained on an independent corpus by other painters that also covers the
//! class-extension candidates.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use sketchgan::dataset::{
    all_compositions, class_extension_split, make_toy_dataset_from_compositions, Dataset, ExtensionOption,
};
use sketchgan::evaluation::{content_accuracy, generate_random_for, train_probes, Probe, ProbeConfig, Probes};
use sketchgan::networks::{ModelConfig, Networks};
use sketchgan::raster::stack;
use sketchgan::synthesis::{
    generate_along_path, generate_class_extension, generate_with_style, interpolation_path, reference_styles,
    request_rng, StyleSource,
};
use sketchgan::trainer::{save_checkpoint, TrainConfig, Trainer};
use sketchgan::Result;
use tch::{Kind, Tensor};

pub const CLASSES: usize = 8;
pub const PAINTERS: usize = 6;
pub const SAMPLES: usize = 64;
pub const RESOLUTION: usize = 32;
/// Classes of the probe corpus: the generator's, then candidates for both
/// class-extension options.
pub const PROBE_CLASSES: usize = 24;

#[derive(Clone, Debug)]
pub struct E2eConfig {
    pub seed: u64,
    pub epochs: usize,
    pub base_channels: usize,
    pub style_dim: usize,
    pub noise_dim: usize,
    pub probe_samples: usize,
    pub attribution_trials: usize,
    pub interpolation_triples: usize,
    pub interpolation_steps: usize,
    pub extension_per_class: usize,
}

impl Default for E2eConfig {
    fn default() -> Self {
        E2eConfig {
            seed: 0,
            epochs: 12,
            base_channels: 16,
            // a small noise share keeps the style recoverable from the output
            style_dim: 28,
            noise_dim: 4,
            probe_samples: 32,
            attribution_trials: 240,
            interpolation_triples: 40,
            interpolation_steps: 7,
            extension_per_class: 64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct E2eResult {
    pub seed: u64,
    pub probe_class_accuracy: f64,
    pub c_acc: f64,
    pub attribution: f64,
    pub endpoints_exact: bool,
    pub stable_frames: f64,
    pub stable_triples: f64,
    pub recombination_acc: f64,
    pub novel_acc: f64,
    pub final_adv1: f64,
    pub train_time: Duration,
    pub total_time: Duration,
}

impl E2eResult {
    pub fn a(&self) -> bool {
        self.c_acc >= 0.80
    }
    pub fn b(&self) -> bool {
        self.attribution >= 0.70
    }
    pub fn c(&self) -> bool {
        self.endpoints_exact && self.stable_frames >= 0.90
    }
    pub fn d(&self) -> bool {
        self.recombination_acc >= 0.70 && self.recombination_acc > self.novel_acc
    }
}

/// Splits the probe corpus (the generator's classes first) with both
/// class-extension options; returns the test classes of each.
fn extension_classes(probe_ds: &Dataset) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut sides = Vec::new();
    for option in [ExtensionOption::Recombination, ExtensionOption::NovelComponents] {
        let (train, test) = class_extension_split(probe_ds, CLASSES, option)?;
        let expected: BTreeSet<usize> = (0..CLASSES).collect();
        if train.classes_present() != expected {
            return Err(sketchgan::Error::Data(format!(
                "{option:?} split trains on {:?}, not the generator's classes",
                train.classes_present()
            )));
        }
        sides.push(test.classes_present().into_iter().collect::<Vec<_>>());
    }
    let novel = sides.pop().unwrap();
    Ok((sides.pop().unwrap(), novel))
}

fn batched(n: usize, chunk: usize, mut f: impl FnMut(std::ops::Range<usize>) -> Result<Tensor>) -> Result<Tensor> {
    let parts = (0..n)
        .step_by(chunk)
        .map(|s| f(s..(s + chunk).min(n)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::cat(&parts, 0))
}

/// Posterior means of every sample of `ds`, `[N, D_s]`.
fn encode_all(nets: &Networks, ds: &Dataset) -> Result<Tensor> {
    batched(ds.len(), 256, |r| {
        let idx: Vec<usize> = r.collect();
        Ok(reference_styles(nets, &ds.sketch_batch(&idx, nets.kind())?)?.into_tensor())
    })
}

fn painter_centroids(nets: &Networks, ds: &Dataset) -> Result<Tensor> {
    let styles = encode_all(nets, ds)?;
    let rows: Vec<Tensor> = (0..ds.painter_count())
        .map(|p| {
            let idx: Vec<i64> = (0..ds.len() as i64)
                .filter(|&i| ds.samples()[i as usize].painter_label == p)
                .collect();
            styles.index_select(0, &Tensor::from_slice(&idx)).mean_dim(0, false, None)
        })
        .collect();
    Ok(Tensor::stack(&rows, 0))
}

fn nearest(centroids: &Tensor, x: &Tensor) -> Vec<usize> {
    // [N, 1, D] - [1, P, D]
    let d = (x.unsqueeze(1) - centroids.unsqueeze(0)).square().sum_dim_intlist([2i64].as_slice(), false, None);
    Vec::<i64>::try_from(&d.argmin(1, false)).unwrap().into_iter().map(|v| v as usize).collect()
}

/// Reference-guided attribution: fraction of trials whose re-encoded output
/// lies nearest the reference painter's centroid.
fn attribution(nets: &Networks, ds: &Dataset, trials: usize, seed: u64) -> Result<f64> {
    let centroids = painter_centroids(nets, ds)?;
    let mut rng = request_rng(seed, 1);
    let refs: Vec<usize> = (0..trials).map(|_| rng.gen_range(0..ds.len())).collect();
    let icons: Vec<usize> = (0..trials).map(|_| rng.gen_range(0..ds.len())).collect();
    let regen = batched(trials, 64, |r| {
        let ri: Vec<usize> = r.clone().map(|i| refs[i]).collect();
        let ii: Vec<usize> = r.map(|i| icons[i]).collect();
        let style = reference_styles(nets, &ds.sketch_batch(&ri, nets.kind())?)?;
        let fake = generate_with_style(nets, &ds.icon_batch(&ii, nets.kind())?, &style, &mut rng)?;
        Ok(reference_styles(nets, &fake)?.into_tensor())
    })?;
    let hits = nearest(&centroids, &regen)
        .iter()
        .zip(&refs)
        .filter(|(&p, &r)| p == ds.samples()[r].painter_label)
        .count();
    Ok(hits as f64 / trials as f64)
}

fn interpolation(nets: &Networks, ds: &Dataset, probes: &Probes, cfg: &E2eConfig) -> Result<(bool, f64, f64)> {
    let mut rng = request_rng(cfg.seed, 2);
    let mut exact = true;
    let mut stable_frames = 0;
    let mut stable_triples = 0;
    for _ in 0..cfg.interpolation_triples {
        let class = rng.gen_range(0..ds.class_count());
        let a = rng.gen_range(0..ds.len());
        let b = loop {
            let b = rng.gen_range(0..ds.len());
            if ds.samples()[b].painter_label != ds.samples()[a].painter_label {
                break b;
            }
        };
        let sa = reference_styles(nets, &ds.sketch_batch(&[a], nets.kind())?)?;
        let sb = reference_styles(nets, &ds.sketch_batch(&[b], nets.kind())?)?;
        let path = interpolation_path(&sa, &sb, cfg.interpolation_steps)?;
        let last = cfg.interpolation_steps as i64 - 1;
        exact &= path.narrow(0, 0, 1).equal(sa.values()) && path.narrow(0, last, 1).equal(sb.values());
        let frames = generate_along_path(nets, ds.icon(class)?, &path, &mut rng)?;
        let ok = probes.class.predict(&frames)?.iter().filter(|&&p| p == class).count();
        stable_frames += ok;
        stable_triples += usize::from(ok == cfg.interpolation_steps);
    }
    let t = cfg.interpolation_triples;
    Ok((
        exact,
        stable_frames as f64 / (t * cfg.interpolation_steps) as f64,
        stable_triples as f64 / t as f64,
    ))
}

fn extension_accuracy(
    nets: &Networks,
    probe_ds: &Dataset,
    classes: &[usize],
    per_class: usize,
    probe: &Probe,
    seed: u64,
) -> Result<f64> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for &c in classes {
        let icon = probe_ds.icon(c)?;
        for k in 0..per_class {
            let mut rng = request_rng(seed ^ 0xE7, (c * per_class + k) as u64);
            images.push(generate_class_extension(nets, icon, StyleSource::Random, &mut rng)?);
            labels.push(c);
        }
    }
    let refs: Vec<&_> = images.iter().collect();
    content_accuracy(&stack(&refs, Kind::Float)?, &labels, probe)
}

pub fn run(cfg: &E2eConfig, keep: Option<&Path>) -> Result<E2eResult> {
    let start = Instant::now();
    let all = all_compositions();
    let ds = make_toy_dataset_from_compositions(&all[..CLASSES], PAINTERS, SAMPLES, RESOLUTION, cfg.seed)?;
    // Probes for the generator's own classes, and a wider one covering the
    // class-extension candidates; same painters, all unseen by the generator.
    let probe_cfg = ProbeConfig {
        seed: cfg.seed,
        ..ProbeConfig::default()
    };
    let probe_seed = cfg.seed + 1000;
    let own_ds = make_toy_dataset_from_compositions(&all[..CLASSES], PAINTERS, cfg.probe_samples, RESOLUTION, probe_seed)?;
    let probes = train_probes(&own_ds, &ds.painter_identities(), &probe_cfg)?;
    let probe_ds =
        make_toy_dataset_from_compositions(&all[..PROBE_CLASSES], PAINTERS, cfg.probe_samples, RESOLUTION, probe_seed)?;
    let (recombination, novel) = extension_classes(&probe_ds)?;
    let wide = train_probes(&probe_ds, &ds.painter_identities(), &probe_cfg)?;

    let model = ModelConfig {
        base_channels: cfg.base_channels,
        style_dim: cfg.style_dim,
        noise_dim: cfg.noise_dim,
        ..ModelConfig::for_resolution(RESOLUTION, CLASSES, PAINTERS)
    };
    let train = TrainConfig {
        epochs: cfg.epochs,
        decay_start_epoch: (cfg.epochs * 25).div_ceil(69).min(cfg.epochs - 1),
        seed: cfg.seed,
        sample_grids: keep.is_some(),
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let mut trainer = Trainer::new(&model, &train)?;
    let reports = trainer.run(&ds, keep, None)?;
    let train_time = t0.elapsed();
    if let Some(dir) = keep {
        save_checkpoint(&trainer, &dir.join("e2e.ckpt"))?;
    }
    let nets = &trainer.nets;
    let final_adv1 = reports.last().map_or(f64::NAN, |r| r.adv1);

    let idx: Vec<usize> = (0..ds.len()).step_by(6).collect();
    let mut rng = request_rng(cfg.seed, 0);
    let fakes = generate_random_for(nets, &ds, &idx, &mut rng)?;
    let labels: Vec<usize> = idx.iter().map(|&i| ds.samples()[i].class_label).collect();
    let c_acc = content_accuracy(&fakes, &labels, &probes.class)?;

    let attribution = attribution(nets, &ds, cfg.attribution_trials, cfg.seed)?;
    let (endpoints_exact, stable_frames, stable_triples) = interpolation(nets, &ds, &probes, cfg)?;

    let recombination_acc =
        extension_accuracy(nets, &probe_ds, &recombination, cfg.extension_per_class, &wide.class, cfg.seed)?;
    let novel_acc = extension_accuracy(nets, &probe_ds, &novel, cfg.extension_per_class, &wide.class, cfg.seed)?;
    Ok(E2eResult {
        seed: cfg.seed,
        probe_class_accuracy: probes.class.held_out_accuracy,
        c_acc,
        attribution,
        endpoints_exact,
        stable_frames,
        stable_triples,
        recombination_acc,
        novel_acc,
        final_adv1,
        train_time,
        total_time: start.elapsed(),
    })
}
