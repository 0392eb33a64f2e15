use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mst_core::model::ModelConfig;
use mst_core::pipeline::{
    evaluate, make_synthetic_corpus, precompute_wireframes, run_inference, training_scenes,
    training_scenes_from_cache, Corpus, Corruption, FixedDetector, InferenceMode, InferenceOptions,
    NullDetector, OracleDetector, Thresholds, WireframeDetector,
};
use mst_core::trainer::{Checkpoint, TrainConfig, Trainer, TrainingScene};
use mst_core::wireframe::{sap_score, threshold_wireframe, Wireframe};
use mst_core::{Image, MaskBitmap};

#[derive(Parser)]
#[command(name = "mst", version, about = "Sketch-tensor image inpainting and object removal")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic line-scene corpus (images/, masks/, wireframes/, manifest.json).
    GenData(GenData),
    /// Detect and cache wireframes for every corpus image.
    PrecomputeWf(PrecomputeWf),
    /// Train a model and write a checkpoint.
    Train(Train),
    /// Inpaint the masked region of one image.
    Infer(Infer),
    /// Remove the masked object from one image.
    Remove(Infer),
    /// Score a checkpoint on a corpus.
    Eval(Eval),
    /// Run the HTTP service.
    Serve(Serve),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Line detector backend. The synthetic oracle looks up planted lines of a corpus,
/// optionally degraded; a JSON file supplies one fixed wireframe.
#[derive(Args, Clone)]
struct DetectorArgs {
    /// Corpus whose planted wireframes back the oracle detector.
    #[arg(long)]
    oracle_corpus: Option<PathBuf>,
    /// Fixed wireframe JSON used for every image.
    #[arg(long, conflicts_with = "oracle_corpus")]
    wireframe: Option<PathBuf>,
    /// Endpoint jitter (pixels) applied by the oracle.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Low-confidence spurious lines added per image by the oracle.
    #[arg(long, default_value_t = 0)]
    spurious: usize,
    #[arg(long, default_value_t = 0)]
    detector_seed: u64,
}

impl DetectorArgs {
    fn build(&self, fallback_corpus: Option<&Path>) -> Result<Box<dyn WireframeDetector>> {
        if let Some(path) = &self.wireframe {
            let wf = Wireframe::load(path).with_context(|| format!("reading {}", path.display()))?;
            return Ok(Box::new(FixedDetector(wf)));
        }
        let root = self.oracle_corpus.as_deref().or(fallback_corpus);
        let Some(root) = root else {
            log::warn!("no detector source given; no lines will be detected");
            return Ok(Box::new(NullDetector));
        };
        let corpus = Corpus::open(root)?;
        let scenes = corpus.samples()?.into_iter().map(|s| (s.image, s.wireframe)).collect();
        let mut det = OracleDetector::new(scenes);
        if self.jitter > 0.0 || self.spurious > 0 {
            det = det.with_corruption(Corruption {
                seed: self.detector_seed,
                jitter: self.jitter,
                spurious: self.spurious,
                ..Corruption::default()
            });
        }
        Ok(Box::new(det))
    }
}

#[derive(Args)]
struct PrecomputeWf {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long, default_value_t = 0.95)]
    tau_unmasked: f64,
    #[arg(long, default_value_t = 0.925)]
    tau_masked: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelSize {
    /// 256x256 model.
    Full,
    /// 64x64 desk-scale model.
    Smoke,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    corpus: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Training configuration (JSON, or TOML by extension); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelSize::Smoke)]
    model: ModelSize,
    /// Continue from a checkpoint written by `train`.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Per-step losses as JSON lines.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Use cached wireframes (from `precompute-wf`) instead of the corpus ground truth.
    #[arg(long)]
    use_cache: bool,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr_g: Option<f64>,
    #[arg(long)]
    lr_d: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    decay_every: Option<u64>,
    #[arg(long)]
    encoder_freeze_at: Option<u64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    m_early: Option<f64>,
    #[arg(long)]
    m_late: Option<f64>,
}

impl Train {
    fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        set!(total_steps, batch_size, seed, lr_g, lr_d, lr_decay, decay_every, beta1, beta2, m_early, m_late);
        if self.encoder_freeze_at.is_some() {
            cfg.encoder_freeze_at = self.encoder_freeze_at;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct Infer {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// 1-bit (or any grayscale) PNG; white marks the region to fill.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the three sketch-tensor channels here.
    #[arg(long)]
    sketch_dir: Option<PathBuf>,
    /// Line masking probability; defaults to the mode's value.
    #[arg(long)]
    m: Option<f64>,
    /// Force lines by index: `3=keep` or `5=drop`.
    #[arg(long = "line", value_parser = parse_override)]
    lines: Vec<(usize, bool)>,
    #[command(flatten)]
    detector: DetectorArgs,
}

fn parse_override(s: &str) -> Result<(usize, bool), String> {
    let (i, action) = s.split_once('=').ok_or("expected INDEX=keep|drop")?;
    let i = i.parse().map_err(|e| format!("line index {i}: {e}"))?;
    match action {
        "keep" => Ok((i, true)),
        "drop" => Ok((i, false)),
        other => Err(format!("unknown action {other}; use keep or drop")),
    }
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Inpaint)]
    mode: Mode,
    /// Write the full report (per-image rows and means) as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Squared endpoint distance threshold for the detector's sAP.
    #[arg(long, default_value_t = 10.0)]
    sap_threshold: f64,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Inpaint,
    Removal,
}

impl From<Mode> for InferenceMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Inpaint => InferenceMode::Inpaint,
            Mode::Removal => InferenceMode::Removal,
        }
    }
}

#[derive(Args)]
struct Serve {
    #[arg(long, env = "SKETCH_PORT", default_value_t = mst_service::DEFAULT_PORT)]
    port: u16,
    #[arg(long, env = "SKETCH_CKPT")]
    checkpoint: PathBuf,
    /// Corpus backing the oracle line detector.
    #[arg(long, env = "SKETCH_CORPUS")]
    corpus: Option<PathBuf>,
    #[arg(long, env = "SKETCH_QUEUE", default_value_t = mst_service::DEFAULT_QUEUE_BUDGET)]
    queue_budget: usize,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::PrecomputeWf(a) => precompute(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a, InferenceMode::Inpaint),
        Command::Remove(a) => infer(a, InferenceMode::Removal),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
    }
}

fn gen_data(a: GenData) -> Result<()> {
    let corpus = make_synthetic_corpus(&a.out, a.n, a.size, a.seed)?;
    println!("wrote {} scenes to {}", corpus.len(), a.out.display());
    Ok(())
}

fn precompute(a: PrecomputeWf) -> Result<()> {
    let corpus = Corpus::open(&a.corpus)?;
    let detector = a.detector.build(Some(&a.corpus))?;
    let thresholds = Thresholds {
        unmasked: a.tau_unmasked,
        masked: a.tau_masked,
    };
    let report = precompute_wireframes(&corpus, detector.as_ref(), thresholds)?;
    println!(
        "computed {}, cached {}, failed {}",
        report.computed,
        report.cached,
        report.failed.len()
    );
    for (id, err) in &report.failed {
        println!("  {id}: {err}");
    }
    Ok(())
}

fn load_scenes(a: &Train, cfg: &TrainConfig) -> Result<Vec<TrainingScene>> {
    let corpus = Corpus::open(&a.corpus)?;
    let tau = Thresholds::default().unmasked;
    let scenes = if a.use_cache {
        training_scenes_from_cache(&corpus, tau, &cfg.canny)?
    } else {
        training_scenes(&corpus.samples()?, tau, &cfg.canny)?
    };
    if scenes.is_empty() {
        bail!("corpus {} is empty", a.corpus.display());
    }
    Ok(scenes)
}

fn train(a: Train) -> Result<()> {
    let mut trainer = match &a.resume {
        Some(p) => Checkpoint::load(p)?.into_trainer()?,
        None => {
            let model_cfg = match a.model {
                ModelSize::Full => ModelConfig::default(),
                ModelSize::Smoke => ModelConfig::smoke(),
            };
            Trainer::new(model_cfg, a.train_config()?)?
        }
    };
    let cfg = trainer.config().clone();
    let scenes = load_scenes(&a, &cfg)?;
    let size = trainer.model().config().image_size;
    if scenes[0].image.dims() != (size, size) {
        bail!("corpus images are {:?}, the model expects {size}x{size}", scenes[0].image.dims());
    }
    if let Some(p) = &a.log {
        let file = fs::OpenOptions::new().create(true).append(true).open(p)?;
        trainer.set_log(Box::new(std::io::BufWriter::new(file)));
    }
    let t0 = Instant::now();
    while trainer.step_count() < cfg.total_steps {
        let report = trainer.train_step(&scenes)?;
        let step = report.step + 1;
        if step % 50 == 0 || step == cfg.total_steps {
            let g = report.value("dec_g").unwrap_or(f64::NAN);
            log::info!(
                "step {step}/{} dec_g {g:.4} ({:.2} s/step)",
                cfg.total_steps,
                t0.elapsed().as_secs_f64() / step as f64
            );
        }
        if a.checkpoint_every.is_some_and(|n| step % n == 0) {
            Checkpoint::from_trainer(&trainer)?.save(&a.out)?;
        }
    }
    Checkpoint::from_trainer(&trainer)?.save(&a.out)?;
    println!("wrote {} after {} steps", a.out.display(), trainer.step_count());
    Ok(())
}

fn infer(a: Infer, mode: InferenceMode) -> Result<()> {
    let model = Checkpoint::load(&a.checkpoint)?.into_model()?;
    let image = Image::load(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
    let mask = MaskBitmap::load(&a.mask).with_context(|| format!("reading {}", a.mask.display()))?;
    let detector = a.detector.build(None)?;
    let opts = InferenceOptions {
        m_override: a.m,
        line_overrides: a.lines.clone(),
        ..InferenceOptions::default()
    };
    let out = run_inference(&model, &image, &mask, mode, detector.as_ref(), &opts)?;
    out.output.save(&a.out)?;
    if let Some(dir) = &a.sketch_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("lines.png"), out.sketch.lines.to_png_bytes()?)?;
        fs::write(dir.join("edges.png"), out.sketch.edges.to_png_bytes()?)?;
        fs::write(dir.join("combined.png"), out.sketch.combined.to_png_bytes()?)?;
    }
    let kept = out.decisions.iter().filter(|d| d.kept).count();
    println!(
        "wrote {} (m = {}, {kept}/{} lines kept)",
        a.out.display(),
        out.m,
        out.decisions.len()
    );
    Ok(())
}

fn eval(a: Eval) -> Result<()> {
    let model = Checkpoint::load(&a.checkpoint)?.into_model()?;
    let corpus = Corpus::open(&a.corpus)?;
    let samples = corpus.samples()?;
    let detector = a.detector.build(Some(&a.corpus))?;
    let opts = InferenceOptions::default();
    let mut report = evaluate(&model, &samples, a.mode.into(), detector.as_ref(), &opts)?;

    let tau = opts.thresholds.unmasked;
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for s in &samples {
        preds.push((s.id.clone(), detector.detect(&s.image.to_unit())?));
        gts.push((s.id.clone(), threshold_wireframe(&s.wireframe, tau)?));
    }
    report.sap = sap_score(&preds, &gts, a.sap_threshold).ok();

    println!(
        "{} images: PSNR {:.2} dB (masked input {:.2}), SSIM {:.4} (masked input {:.4})",
        report.rows.len(),
        report.mean_psnr,
        report.mean_baseline_psnr,
        report.mean_ssim,
        report.mean_baseline_ssim
    );
    if let Some(sap) = report.sap {
        println!("detector sAP{}: {sap:.2}", a.sap_threshold);
    }
    if let Some(out) = &a.out {
        fs::write(out, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn serve(a: Serve) -> Result<()> {
    let settings = mst_service::Settings {
        port: a.port,
        checkpoint: a.checkpoint,
        corpus: a.corpus,
        queue_budget: a.queue_budget,
    };
    let state = mst_service::load_state(&settings)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(mst_service::serve(state, settings.port))?;
    Ok(())
}
