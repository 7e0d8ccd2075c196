mod config;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;
use sketchgan::dataset::{load_dataset, make_toy_dataset, split_by_painter, write_dataset, Dataset};
use sketchgan::evaluation::{evaluate, EvalConfig, EmbeddingExtractor, ProbeConfig, Probes, RecognizerEmbedding};
use sketchgan::networks::Networks;
use sketchgan::raster::{contact_sheet, Raster};
use sketchgan::synthesis::{GenerationMode, GenerationRequest};
use sketchgan::trainer::{load_checkpoint, save_checkpoint, Trainer};
use sketchgan::Error;

use config::RunConfig;
use manifest::{artifacts, now_unix, RunManifest};

/// Output root used when `--out` is not given.
pub const OUT_ENV: &str = "SKETCHGAN_OUT";

#[derive(Debug, Parser)]
#[command(name = "sketchgan", version, about = "Content-conditioned, style-controllable sketch generation")]
pub struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $SKETCHGAN_OUT, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a procedural toy corpus.
    MakeToyData(ToyArgs),
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Generate sketches of a known class.
    Generate(GenerateArgs),
    /// Interpolate between the styles of two sketches.
    Interpolate(InterpolateArgs),
    /// Generate sketches of a class absent from training, given its icon.
    Extend(ExtendArgs),
    /// Compute FID, KID, IS, PSNR and probe accuracies.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct ToyArgs {
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 6)]
    painters: usize,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 32)]
    resolution: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus directory.
    #[arg(long)]
    data: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    decay_start_epoch: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    style_dim: Option<usize>,
    #[arg(long)]
    noise_dim: Option<usize>,
    /// Use the literal log(1 - D(fake)) generator objective.
    #[arg(long)]
    saturating: bool,
    /// Stop after this many steps and write `last.ckpt`.
    #[arg(long)]
    max_steps: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Random,
    Reference,
}

#[derive(Debug, Args)]
struct ModelInput {
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    model: ModelInput,
    /// Corpus providing the class icons.
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "class")]
    class: usize,
    #[arg(long, value_enum, default_value_t = Mode::Random)]
    mode: Mode,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long)]
    style_image: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InterpolateArgs {
    #[command(flatten)]
    model: ModelInput,
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "class")]
    class: usize,
    #[arg(long)]
    style_a: PathBuf,
    #[arg(long)]
    style_b: PathBuf,
    #[arg(long, default_value_t = 7)]
    steps: usize,
}

#[derive(Debug, Args)]
struct ExtendArgs {
    #[command(flatten)]
    model: ModelInput,
    /// Icon of the new class.
    #[arg(long)]
    icon: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Random)]
    mode: Mode,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long)]
    style_image: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    model: ModelInput,
    /// Corpus the model was trained from; its held-out painters are scored.
    #[arg(long)]
    data: PathBuf,
    /// Trained probes (from an earlier `evaluate --probe-data`).
    #[arg(long)]
    probes: Option<PathBuf>,
    /// Independent corpus with disjoint painters: trains probes when
    /// `--probes` is absent and supplies the style images for P_ACC.
    #[arg(long)]
    probe_data: Option<PathBuf>,
    #[arg(long)]
    max_samples: Option<usize>,
}

struct Ctx {
    out: PathBuf,
    seed: Option<u64>,
    config: RunConfig,
    inputs: Vec<String>,
    record: serde_json::Value,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidArgument(msg.into()).into()
}

fn load_model(path: &Path) -> Result<Networks> {
    let t = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(t.nets)
}

fn load_style(path: &Path, nets: &Networks) -> Result<Raster> {
    Ok(Raster::load_png(path, Some(nets.config().resolution))?)
}

fn write_images(out: &Path, images: &[Raster], prefix: &str) -> Result<()> {
    for (i, img) in images.iter().enumerate() {
        img.save_png(&out.join(format!("{prefix}_{i:03}.png")))?;
    }
    contact_sheet(&[images.to_vec()])?.save_png(&out.join("sheet.png"))?;
    Ok(())
}

fn run_request(ctx: &mut Ctx, nets: &Networks, req: GenerationRequest, prefix: &str) -> Result<()> {
    let images = req.run(nets)?;
    write_images(&ctx.out, &images, prefix)?;
    let path = ctx.out.join("request.json");
    fs::write(&path, serde_json::to_string_pretty(&ctx.record)?)?;
    Ok(())
}

fn style_images(mode: Mode, style: &Option<PathBuf>, nets: &Networks, ctx: &mut Ctx) -> Result<Vec<Raster>> {
    match (mode, style) {
        (Mode::Random, None) => Ok(Vec::new()),
        (Mode::Random, Some(_)) => Err(usage("--style-image is only used with --mode reference")),
        (Mode::Reference, None) => Err(usage("--mode reference requires --style-image")),
        (Mode::Reference, Some(p)) => {
            ctx.inputs.push(p.display().to_string());
            Ok(vec![load_style(p, nets)?])
        }
    }
}

fn gen_mode(m: Mode) -> GenerationMode {
    match m {
        Mode::Random => GenerationMode::Random,
        Mode::Reference => GenerationMode::Reference,
    }
}

fn cmd_make_toy(ctx: &mut Ctx, a: &ToyArgs) -> Result<()> {
    let seed = ctx.seed.unwrap_or(0);
    let ds = make_toy_dataset(a.classes, a.painters, a.samples, a.resolution, seed)?;
    write_dataset(&ds, &ctx.out)?;
    ctx.record = json!({"classes": a.classes, "painters": a.painters, "samples": a.samples, "resolution": a.resolution});
    info!("wrote {} samples to {}", ds.len(), ctx.out.display());
    Ok(())
}

fn cmd_train(ctx: &mut Ctx, a: &TrainArgs) -> Result<()> {
    let c = &mut ctx.config;
    c.set_opt("epochs", a.epochs)?;
    c.set_opt("batch_size", a.batch_size)?;
    c.set_opt("lr", a.lr)?;
    c.set_opt("decay_start_epoch", a.decay_start_epoch)?;
    c.set_opt("test_fraction", a.test_fraction)?;
    c.set_opt("resolution", a.resolution)?;
    c.set_opt("base_channels", a.base_channels)?;
    c.set_opt("style_dim", a.style_dim)?;
    c.set_opt("noise_dim", a.noise_dim)?;
    c.set_opt("seed", ctx.seed)?;
    if a.saturating {
        c.set_opt("saturating", Some(true))?;
    }
    ctx.inputs.push(a.data.display().to_string());
    let ds = load_dataset(&a.data, c.resolution())?;
    let mut trainer = match &a.resume {
        Some(p) => {
            ctx.inputs.push(p.display().to_string());
            load_checkpoint(p)?
        }
        None => {
            let model = c.model_config(ds.resolution(), ds.class_count(), ds.painter_count())?;
            Trainer::new(&model, &c.train_config()?)?
        }
    };
    let (train, test) = split_by_painter(&ds, trainer.cfg.test_fraction, trainer.cfg.seed)?;
    fs::create_dir_all(&ctx.out)?;
    fs::write(
        ctx.out.join("split.json"),
        serde_json::to_string_pretty(&json!({
            "train_painters": train.painter_identities(),
            "test_painters": test.painter_identities(),
        }))?,
    )?;
    ctx.record = json!({"model": trainer.model_config(), "train": trainer.cfg});
    trainer.run(&train, Some(&ctx.out), a.max_steps)?;
    if trainer.state.epoch < trainer.cfg.epochs {
        save_checkpoint(&trainer, &ctx.out.join("last.ckpt"))?;
    }
    Ok(())
}

fn cmd_generate(ctx: &mut Ctx, a: &GenerateArgs) -> Result<()> {
    let nets = load_model(&a.model.checkpoint)?;
    ctx.inputs.push(a.model.checkpoint.display().to_string());
    ctx.inputs.push(a.data.display().to_string());
    let ds = load_dataset(&a.data, Some(nets.config().resolution))?;
    let icon = ds.icon(a.class)?.clone();
    let style_images = style_images(a.mode, &a.style_image, &nets, ctx)?;
    let seed = ctx.seed.unwrap_or(0);
    ctx.record = json!({"mode": gen_mode(a.mode), "class": a.class, "count": a.count, "seed": seed,
        "style_image": a.style_image});
    let req = GenerationRequest {
        mode: gen_mode(a.mode),
        icon,
        style_images,
        count: a.count,
        seed,
    };
    run_request(ctx, &nets, req, "sample")
}

fn cmd_interpolate(ctx: &mut Ctx, a: &InterpolateArgs) -> Result<()> {
    if a.steps < 2 {
        return Err(usage("--steps must be at least 2"));
    }
    let nets = load_model(&a.model.checkpoint)?;
    ctx.inputs.extend([&a.model.checkpoint, &a.data, &a.style_a, &a.style_b].map(|p| p.display().to_string()));
    let ds = load_dataset(&a.data, Some(nets.config().resolution))?;
    let seed = ctx.seed.unwrap_or(0);
    ctx.record = json!({"mode": GenerationMode::Interpolation, "class": a.class, "steps": a.steps, "seed": seed,
        "style_a": a.style_a, "style_b": a.style_b});
    let req = GenerationRequest {
        mode: GenerationMode::Interpolation,
        icon: ds.icon(a.class)?.clone(),
        style_images: vec![load_style(&a.style_a, &nets)?, load_style(&a.style_b, &nets)?],
        count: a.steps,
        seed,
    };
    run_request(ctx, &nets, req, "frame")
}

fn cmd_extend(ctx: &mut Ctx, a: &ExtendArgs) -> Result<()> {
    let nets = load_model(&a.model.checkpoint)?;
    ctx.inputs.push(a.model.checkpoint.display().to_string());
    ctx.inputs.push(a.icon.display().to_string());
    let icon = load_style(&a.icon, &nets)?;
    let style_images = style_images(a.mode, &a.style_image, &nets, ctx)?;
    let seed = ctx.seed.unwrap_or(0);
    ctx.record = json!({"mode": gen_mode(a.mode), "icon": a.icon, "count": a.count, "seed": seed,
        "style_image": a.style_image, "class_extension": true});
    let req = GenerationRequest {
        mode: gen_mode(a.mode),
        icon,
        style_images,
        count: a.count,
        seed,
    };
    run_request(ctx, &nets, req, "sample")
}

fn cmd_evaluate(ctx: &mut Ctx, a: &EvaluateArgs) -> Result<()> {
    let trainer = load_checkpoint(&a.model.checkpoint)?;
    ctx.inputs.push(a.model.checkpoint.display().to_string());
    ctx.inputs.push(a.data.display().to_string());
    let nets = &trainer.nets;
    let res = nets.config().resolution;
    let ds = load_dataset(&a.data, Some(res))?;
    let (train, test) = split_by_painter(&ds, trainer.cfg.test_fraction, trainer.cfg.seed)?;
    let probe_data: Option<Dataset> = match &a.probe_data {
        Some(p) => {
            ctx.inputs.push(p.display().to_string());
            Some(load_dataset(p, Some(res))?)
        }
        None => None,
    };
    let seed = ctx.seed.unwrap_or(0);
    let probes = match (&a.probes, &probe_data) {
        (Some(p), _) => {
            ctx.inputs.push(p.display().to_string());
            Some(Probes::load(p)?)
        }
        (None, Some(pd)) => {
            let mut excluded = train.painter_identities();
            excluded.extend(test.painter_identities());
            let cfg = ProbeConfig {
                seed,
                ..ProbeConfig::default()
            };
            let probes = sketchgan::evaluation::train_probes(pd, &excluded, &cfg)?;
            fs::create_dir_all(&ctx.out)?;
            probes.save(&ctx.out.join("probes.bin"), &cfg)?;
            Some(probes)
        }
        (None, None) => None,
    };
    let recognizer = RecognizerEmbedding(&nets.recognizer);
    let extractor: &dyn EmbeddingExtractor = match &probes {
        Some(p) => &p.class,
        None => &recognizer,
    };
    let cfg = EvalConfig {
        seed,
        max_samples: a.max_samples,
        ..EvalConfig::default()
    };
    let report = evaluate(nets, &test, extractor, probes.as_ref(), probe_data.as_ref(), &cfg)?;
    fs::create_dir_all(&ctx.out)?;
    fs::write(ctx.out.join("metrics.txt"), report.to_string())?;
    print!("{report}");
    ctx.record = json!({"seed": seed, "max_samples": a.max_samples, "test_painters": test.painter_identities()});
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut ctx = Ctx {
        out,
        seed: cli.seed,
        config,
        inputs: cli.config.iter().map(|p| p.display().to_string()).collect(),
        record: json!({}),
    };
    let started = now_unix();
    let name = match &cli.command {
        Command::MakeToyData(a) => {
            cmd_make_toy(&mut ctx, a)?;
            "make-toy-data"
        }
        Command::Train(a) => {
            cmd_train(&mut ctx, a)?;
            "train"
        }
        Command::Generate(a) => {
            cmd_generate(&mut ctx, a)?;
            "generate"
        }
        Command::Interpolate(a) => {
            cmd_interpolate(&mut ctx, a)?;
            "interpolate"
        }
        Command::Extend(a) => {
            cmd_extend(&mut ctx, a)?;
            "extend"
        }
        Command::Evaluate(a) => {
            cmd_evaluate(&mut ctx, a)?;
            "evaluate"
        }
    };
    if !ctx.out.is_dir() {
        bail!(Error::Data(format!("no output written to {}", ctx.out.display())));
    }
    RunManifest {
        command: name.to_string(),
        config: ctx.record,
        inputs: ctx.inputs,
        outputs: artifacts(&ctx.out)?,
        seed: cli.seed.unwrap_or(0),
        started_unix: started,
        finished_unix: now_unix(),
    }
    .write(&ctx.out)
}
