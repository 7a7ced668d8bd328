//! The `earcough` command line.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error.
//! Every run writes the resolved configuration next to its outputs as TOML;
//! passing that file back through `--config` repeats the run.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentPlan;
use crate::dsp;
use crate::evalkit::{self, AblationMode};
use crate::nn::{self, ArchConfig, ModelSpec};
use crate::pipeline::{self, SplitConfig, TrainConfig};
use crate::stream;
use crate::synth::{self, SynthConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
    #[error(transparent)]
    Eval(#[from] evalkit::EvalError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Dsp(#[from] dsp::DspError),
    #[error(transparent)]
    Stream(#[from] stream::StreamError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_owned(), source }
}

fn parse_rate(s: &str) -> Result<u32, String> {
    let r: u32 = s.parse().map_err(|e| format!("{e}"))?;
    if crate::SUPPORTED_RATES.contains(&r) {
        Ok(r)
    } else {
        Err(format!("rate must be one of {:?}", crate::SUPPORTED_RATES))
    }
}

#[derive(Debug, Parser)]
#[command(name = "earcough", version, about = "Subject-aware cough detection for dual-microphone earbuds")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// TOML file with [synth], [train], [augment], [split] and [arch] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset.
    Synth(SynthArgs),
    /// Train a model for one sample rate.
    Train(TrainArgs),
    /// Evaluate a model on the test users.
    Eval(EvalArgs),
    /// Train and evaluate dual, feed-forward-only and feedback-only inputs.
    Ablate(AblateArgs),
    /// Print FLOPs and storage of the reference model at every rate.
    Profile(ProfileArgs),
    /// Detect subject coughs in a WAV file.
    Detect(DetectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub users: u32,
    #[arg(long)]
    pub activity_scale: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct TrainOpts {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Windows per epoch (random subset, reshuffled every epoch).
    #[arg(long)]
    pub epoch_size: Option<usize>,
    /// Augmented copies per training window (0 disables augmentation).
    #[arg(long)]
    pub copies: Option<usize>,
    /// Directory of two-channel WAVs to mix in as background noise
    /// (default: a synthetic pool).
    #[arg(long)]
    pub noise_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_rate, default_value = "8000")]
    pub rate: u32,
    #[arg(long)]
    pub out: PathBuf,
    /// History CSV (default: next to the model).
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Metrics JSON; a `.txt` table is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = evalkit::DEFAULT_THRESHOLD)]
    pub threshold: f32,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_rate, default_value = "8000")]
    pub rate: u32,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// CSV path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// NDJSON path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = evalkit::DEFAULT_THRESHOLD)]
    pub threshold: f32,
    /// Negative windows allowed inside one event.
    #[arg(long, default_value_t = 0)]
    pub gap: usize,
    /// Report every window's score instead of merged events.
    #[arg(long)]
    pub per_window: bool,
}

/// Tunables read from `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub augment: AugmentPlan,
    pub split: SplitConfig,
    pub arch: ArchConfig,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            train: TrainConfig { class_weighting: true, epoch_size: Some(2000), epochs_max: 20, early_stop_patience: 5, ..TrainConfig::default() },
            augment: AugmentPlan::default(),
            split: SplitConfig::default(),
            arch: ArchConfig::default(),
        }
    }
}

/// The resolved settings of one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub seed: u64,
    pub rate_hz: Option<u32>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub threshold: Option<f32>,
    pub config: ConfigFile,
}

impl RunConfig {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).expect("run config is plain data");
        fs::write(path, text).map_err(io_err(path))
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    // accept either a bare config or a recorded run
    if let Ok(run) = toml::from_str::<RunConfig>(&text) {
        return Ok(run.config);
    }
    let cfg: ConfigFile = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    cfg.augment.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(())
}

fn apply_train_opts(cfg: &mut ConfigFile, o: &TrainOpts, seed: u64) -> Result<(), CliError> {
    let t = &mut cfg.train;
    t.seed = seed;
    cfg.augment.seed = seed;
    if let Some(v) = o.epochs {
        t.epochs_max = v;
    }
    if let Some(v) = o.patience {
        t.early_stop_patience = v;
    }
    if let Some(v) = o.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = o.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = o.epoch_size {
        t.epoch_size = Some(v);
    }
    if let Some(v) = o.copies {
        cfg.augment.copies_per_clip = v;
    }
    t.validate().map_err(|e| CliError::Usage(e.to_string()))
}

/// Background windows used by the augmentation's noise stage.
pub const NOISE_POOL_SIZE: usize = 256;

fn noise_pool(cfg: &ConfigFile, rate: u32, dir: Option<&Path>) -> Result<Vec<dsp::DualChannelWindow>, CliError> {
    if !(cfg.augment.background && cfg.augment.copies_per_clip > 0) {
        return Ok(Vec::new());
    }
    match dir {
        Some(d) => crate::augment::load_noise_pool(d, rate).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(synth::noise_pool(&cfg.synth, rate, NOISE_POOL_SIZE, cfg.augment.seed)),
    }
}

fn train_inputs(manifest: &Path, o: &TrainOpts) -> Vec<PathBuf> {
    std::iter::once(manifest.to_owned()).chain(o.noise_dir.clone()).collect()
}

fn cmd_synth(cli: &Cli, a: &SynthArgs, mut cfg: ConfigFile) -> Result<PathBuf, CliError> {
    cfg.synth.n_users = a.users;
    cfg.synth.seed = cli.seed;
    if let Some(s) = a.activity_scale {
        cfg.synth.activity_scale = s;
    }
    cfg.synth.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    synth::generate_dataset(&cfg.synth, &a.out)?;
    let manifest = a.out.join(synth::MANIFEST_FILE);
    RunConfig {
        subcommand: "synth".into(),
        seed: cli.seed,
        rate_hz: Some(cfg.synth.sample_rate_hz),
        inputs: vec![],
        outputs: vec![a.out.clone()],
        threshold: None,
        config: cfg,
    }
    .write(&a.out.join("run_config.toml"))?;
    println!("{}", manifest.display());
    Ok(manifest)
}

fn cmd_train(cli: &Cli, a: &TrainArgs, mut cfg: ConfigFile) -> Result<(), CliError> {
    apply_train_opts(&mut cfg, &a.opts, cli.seed)?;
    let spec = ModelSpec::from_arch(a.rate, dsp::window_len(a.rate), &cfg.arch)?;
    let splits = pipeline::load_splits(&a.manifest, a.rate, &cfg.split)?;
    let pool = noise_pool(&cfg, a.rate, a.opts.noise_dir.as_deref())?;
    let (params, history) = pipeline::train(&splits.train, &splits.val, &spec, &cfg.train, &cfg.augment, &pool)?;
    ensure_parent(&a.out)?;
    nn::save_model(&spec, &params, &a.out)?;
    let hist = a.history.clone().unwrap_or_else(|| sidecar(&a.out, ".history.csv"));
    fs::write(&hist, history.to_csv()).map_err(io_err(&hist))?;
    RunConfig {
        subcommand: "train".into(),
        seed: cli.seed,
        rate_hz: Some(a.rate),
        inputs: train_inputs(&a.manifest, &a.opts),
        outputs: vec![a.out.clone(), hist.clone()],
        threshold: None,
        config: cfg,
    }
    .write(&sidecar(&a.out, ".run.toml"))?;
    eprintln!("trained {} epochs, best epoch {}", history.epochs.len(), history.best_epoch);
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs, cfg: ConfigFile) -> Result<(), CliError> {
    let (spec, params) = nn::load_model(&a.model)?;
    cfg.split.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let test_users = cfg.split.test_users.clone();
    let test = pipeline::load_windows(&a.manifest, spec.sample_rate_hz, |u| test_users.contains(&u))?;
    let report = evalkit::evaluate_at(&spec, &params, &test, a.threshold)?;
    ensure_parent(&a.out)?;
    fs::write(&a.out, report.to_json() + "\n").map_err(io_err(&a.out))?;
    let txt = a.out.with_extension("txt");
    let table = report.to_text();
    fs::write(&txt, &table).map_err(io_err(&txt))?;
    print!("{table}");
    RunConfig {
        subcommand: "eval".into(),
        seed: cli.seed,
        rate_hz: Some(spec.sample_rate_hz),
        inputs: vec![a.manifest.clone(), a.model.clone()],
        outputs: vec![a.out.clone(), txt],
        threshold: Some(a.threshold),
        config: cfg,
    }
    .write(&sidecar(&a.out, ".run.toml"))
}

fn cmd_ablate(cli: &Cli, a: &AblateArgs, mut cfg: ConfigFile) -> Result<(), CliError> {
    apply_train_opts(&mut cfg, &a.opts, cli.seed)?;
    let spec = ModelSpec::from_arch(a.rate, dsp::window_len(a.rate), &cfg.arch)?;
    let splits = pipeline::load_splits(&a.manifest, a.rate, &cfg.split)?;
    let pool = noise_pool(&cfg, a.rate, a.opts.noise_dir.as_deref())?;
    let report = evalkit::ablation(&splits.train, &splits.val, &splits.test, &spec, &cfg.train, &cfg.augment, &pool, &AblationMode::ALL)?;
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let json = a.out.join("ablation.json");
    let txt = a.out.join("ablation.txt");
    fs::write(&json, serde_json::to_string_pretty(&report).expect("plain data") + "\n").map_err(io_err(&json))?;
    fs::write(&txt, report.to_text()).map_err(io_err(&txt))?;
    print!("{}", report.to_text());
    RunConfig {
        subcommand: "ablate".into(),
        seed: cli.seed,
        rate_hz: Some(a.rate),
        inputs: train_inputs(&a.manifest, &a.opts),
        outputs: vec![json, txt],
        threshold: None,
        config: cfg,
    }
    .write(&a.out.join("run_config.toml"))
}

fn cmd_profile(a: &ProfileArgs) -> Result<(), CliError> {
    let csv = evalkit::resource_csv(&evalkit::resource_table(&crate::SUPPORTED_RATES)?);
    match &a.out {
        Some(p) => {
            ensure_parent(p)?;
            fs::write(p, &csv).map_err(io_err(p))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_detect(cli: &Cli, a: &DetectArgs, cfg: ConfigFile) -> Result<(), CliError> {
    let (spec, params) = nn::load_model(&a.model)?;
    let rec = dsp::load_recording(&a.wav)?;
    let rec = dsp::decimate(&rec, spec.sample_rate_hz)?;
    let write = |out: &mut dyn std::io::Write| -> Result<(), CliError> {
        if a.per_window {
            let scores = stream::window_scores(&spec, &params, &rec)?;
            stream::write_ndjson(&scores, out)?;
        } else {
            let events = stream::detect_with_gap(&spec, &params, &rec, a.threshold, a.gap)?;
            stream::write_ndjson(&events, out)?;
        }
        Ok(())
    };
    match &a.out {
        Some(p) => {
            ensure_parent(p)?;
            let f = fs::File::create(p).map_err(io_err(p))?;
            let mut w = std::io::BufWriter::new(f);
            write(&mut w)?;
            std::io::Write::flush(&mut w).map_err(io_err(p))?;
            RunConfig {
                subcommand: "detect".into(),
                seed: cli.seed,
                rate_hz: Some(spec.sample_rate_hz),
                inputs: vec![a.wav.clone(), a.model.clone()],
                outputs: vec![p.clone()],
                threshold: Some(a.threshold),
                config: cfg,
            }
            .write(&sidecar(p, ".run.toml"))?;
        }
        None => write(&mut std::io::stdout().lock())?,
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a, cfg).map(|_| ()),
        Command::Train(a) => cmd_train(cli, a, cfg),
        Command::Eval(a) => cmd_eval(cli, a, cfg),
        Command::Ablate(a) => cmd_ablate(cli, a, cfg),
        Command::Profile(a) => cmd_profile(a),
        Command::Detect(a) => cmd_detect(cli, a, cfg),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 2;
        }
        builder = builder.num_threads(j);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
