//! Dataset assembly and the training loop.
//!
//! Recordings are decimated to the model rate, cut into back-to-back 0.5 s
//! windows and labeled from their annotations. Splits are by user so no
//! user's audio reaches more than one of train, validation and test.

mod optim;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{self, AugmentError, AugmentPlan};
use crate::dsp::{self, DspError, DualChannelRecording, DualChannelWindow};
use crate::evalkit::{self, Confusion};
use crate::nn::{self, ModelParams, ModelSpec, NnError, Params, Workspace};
use crate::synth::{AnnotatedSegment, DatasetManifest, Environment, SynthError};

pub use optim::{Optimizer, OptimizerKind};

/// Minimum overlap with an annotated cough for a window to take its label.
pub const MIN_OVERLAP_S: f64 = 0.12;
const OVERLAP_EPS: f64 = 1e-9;
/// Examples per gradient work unit. Fixed so results do not depend on the
/// number of threads.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("user {0} appears in more than one split")]
    OverlappingUserSets(u32),
    #[error("training set needs both subject-cough and other windows")]
    SingleClassTrainingSet,
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("window rate {got} Hz does not match the model rate {expected} Hz")]
    RateMismatch { expected: u32, got: u32 },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowLabel {
    SubjectCough,
    EnvCough,
    Other,
}

impl WindowLabel {
    /// Target of the two-way head; environmental coughs count as other.
    pub fn class_index(self) -> usize {
        match self {
            Self::SubjectCough => nn::SUBJECT,
            Self::EnvCough | Self::Other => nn::OTHER,
        }
    }

    pub fn is_cough(self) -> bool {
        matches!(self, Self::SubjectCough | Self::EnvCough)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWindow {
    pub window: DualChannelWindow,
    pub label: WindowLabel,
    pub user_id: u32,
    pub environment: Environment,
}

/// Label of the window `[start_s, end_s)`.
pub fn label_for(start_s: f64, end_s: f64, annotations: &[AnnotatedSegment]) -> WindowLabel {
    let hits = |pred: fn(&AnnotatedSegment) -> bool| {
        annotations
            .iter()
            .filter(|a| pred(a))
            .any(|a| a.overlap_s(start_s, end_s) >= MIN_OVERLAP_S - OVERLAP_EPS)
    };
    if hits(|a| a.label.is_subject_cough()) {
        WindowLabel::SubjectCough
    } else if hits(|a| a.label.is_environmental_cough()) {
        WindowLabel::EnvCough
    } else {
        WindowLabel::Other
    }
}

/// Back-to-back 0.5 s windows of `rec`, each with its label.
pub fn label_windows(rec: &DualChannelRecording, annotations: &[AnnotatedSegment]) -> Vec<(DualChannelWindow, WindowLabel)> {
    dsp::slice_windows(rec)
        .into_iter()
        .map(|w| {
            let s = w.start_s();
            let label = label_for(s, s + crate::WINDOW_SECONDS, annotations);
            (w, label)
        })
        .collect()
}

/// Loads, decimates and labels every recording in the manifest whose user
/// passes `keep`. Windows are not normalized.
pub fn load_windows(
    manifest_path: &Path,
    rate_hz: u32,
    keep: impl Fn(u32) -> bool + Sync,
) -> Result<Vec<LabeledWindow>, PipelineError> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let per_rec: Vec<Vec<LabeledWindow>> = manifest
        .entries
        .par_iter()
        .filter(|e| keep(e.user_id))
        .map(|e| {
            let rec = dsp::load_recording(root.join(&e.wav_path))?;
            let rec = dsp::decimate(&rec, rate_hz)?;
            let ann = crate::synth::read_annotations(&root.join(&e.annotation_path))?;
            Ok(label_windows(&rec, &ann)
                .into_iter()
                .map(|(window, label)| LabeledWindow { window, label, user_id: e.user_id, environment: e.environment })
                .collect())
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok(per_rec.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub subject_cough: usize,
    pub env_cough: usize,
    pub other: usize,
}

impl ClassCounts {
    pub fn of(windows: &[LabeledWindow]) -> Self {
        let mut c = Self::default();
        for w in windows {
            match w.label {
                WindowLabel::SubjectCough => c.subject_cough += 1,
                WindowLabel::EnvCough => c.env_cough += 1,
                WindowLabel::Other => c.other += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.subject_cough + self.env_cough + self.other
    }
}

/// Users of each split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_users: Vec<u32>,
    pub val_users: Vec<u32>,
    pub test_users: Vec<u32>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_users: (0..6).collect(), val_users: vec![6, 7], test_users: vec![8, 9] }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut seen = BTreeSet::new();
        for &u in self.train_users.iter().chain(&self.val_users).chain(&self.test_users) {
            if !seen.insert(u) {
                return Err(PipelineError::OverlappingUserSets(u));
            }
        }
        Ok(())
    }

    pub fn contains(&self, user: u32) -> bool {
        self.train_users.contains(&user) || self.val_users.contains(&user) || self.test_users.contains(&user)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<LabeledWindow>,
    pub val: Vec<LabeledWindow>,
    pub test: Vec<LabeledWindow>,
}

/// Routes each window to the split owning its user. Windows of users in no
/// split are dropped.
pub fn split_by_user(windows: Vec<LabeledWindow>, cfg: &SplitConfig) -> Result<Splits, PipelineError> {
    cfg.validate()?;
    let mut s = Splits::default();
    for w in windows {
        if cfg.train_users.contains(&w.user_id) {
            s.train.push(w);
        } else if cfg.val_users.contains(&w.user_id) {
            s.val.push(w);
        } else if cfg.test_users.contains(&w.user_id) {
            s.test.push(w);
        }
    }
    Ok(s)
}

/// Loads only the users named in `cfg` and splits them.
pub fn load_splits(manifest_path: &Path, rate_hz: u32, cfg: &SplitConfig) -> Result<Splits, PipelineError> {
    cfg.validate()?;
    let windows = load_windows(manifest_path, rate_hz, |u| cfg.contains(u))?;
    split_by_user(windows, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Weight each class by `n / (2 * n_class)` in the loss.
    pub class_weighting: bool,
    /// Windows drawn (without replacement) per epoch; all when unset.
    pub epoch_size: Option<usize>,
    /// Where to write per-epoch `ECN1` checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            early_stop_patience: 5,
            seed: 0,
            class_weighting: false,
            epoch_size: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1");
        }
        if self.epochs_max == 0 {
            return bad("epochs_max must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.epoch_size == Some(0) {
            return bad("epoch_size must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc1: f64,
    pub val_f1_1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_acc1,val_f1_1\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{:.6},{:.6},{:.6}", e.epoch, e.train_loss, e.val_acc1, e.val_f1_1);
        }
        s
    }
}

fn normalized_copy(windows: &[LabeledWindow]) -> Vec<LabeledWindow> {
    windows
        .par_iter()
        .map(|w| {
            let mut w = w.clone();
            if !w.window.is_normalized() {
                dsp::normalize_in_place(&mut w.window);
            }
            w
        })
        .collect()
}

/// Applies `plan` to the training windows and normalizes everything.
pub fn augment_training_set(
    train_set: &[LabeledWindow],
    plan: &AugmentPlan,
    noise_pool: &[DualChannelWindow],
) -> Result<Vec<LabeledWindow>, PipelineError> {
    plan.validate()?;
    let copies = plan.copies_per_clip;
    if copies == 0 {
        return Ok(normalized_copy(train_set));
    }
    let per: Vec<Vec<LabeledWindow>> = train_set
        .par_iter()
        .enumerate()
        .map(|(i, lw)| {
            let mut first = lw.clone();
            dsp::normalize_in_place(&mut first.window);
            let mut out = vec![first];
            for v in plan.variants(&lw.window, i as u64, noise_pool)? {
                out.push(LabeledWindow { window: v, ..lw.clone() });
            }
            Ok(out)
        })
        .collect::<Result<_, AugmentError>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Trains from `params0` (fan-in initialization from `cfg.seed` if `None`)
/// with early stopping on validation F1-1, and returns the parameters of the
/// best validation epoch.
pub fn train(
    train_set: &[LabeledWindow],
    val_set: &[LabeledWindow],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    plan: &AugmentPlan,
    noise_pool: &[DualChannelWindow],
) -> Result<(ModelParams, TrainHistory), PipelineError> {
    train_from(train_set, val_set, spec, cfg, plan, noise_pool, None)
}

pub fn train_from(
    train_set: &[LabeledWindow],
    val_set: &[LabeledWindow],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    plan: &AugmentPlan,
    noise_pool: &[DualChannelWindow],
    params0: Option<ModelParams>,
) -> Result<(ModelParams, TrainHistory), PipelineError> {
    cfg.validate()?;
    spec.validate_shapes()?;
    if val_set.is_empty() {
        return Err(PipelineError::EmptyValidationSet);
    }
    for w in train_set.iter().chain(val_set) {
        if w.window.sample_rate_hz() != spec.sample_rate_hz || w.window.len() != spec.input_len {
            return Err(PipelineError::RateMismatch { expected: spec.sample_rate_hz, got: w.window.sample_rate_hz() });
        }
    }
    let counts = ClassCounts::of(train_set);
    if counts.subject_cough == 0 || counts.subject_cough == counts.total() {
        return Err(PipelineError::SingleClassTrainingSet);
    }

    let data = augment_training_set(train_set, plan, noise_pool)?;
    let val = normalized_copy(val_set);

    let n = data.len() as f64;
    let n_pos = data.iter().filter(|w| w.label.class_index() == nn::SUBJECT).count() as f64;
    let class_weight = if cfg.class_weighting {
        [n / (2.0 * n_pos), n / (2.0 * (n - n_pos))]
    } else {
        [1.0, 1.0]
    };

    let mut params = params0.unwrap_or_else(|| Params::init(spec, cfg.seed));
    params.check(spec)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, spec);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0usize;

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs_max {
        let mut rng = augment::window_rng(cfg.seed ^ 0x7EA1_0000, epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let take = cfg.epoch_size.map_or(order.len(), |k| k.min(order.len()));

        let mut loss_sum = 0.0f64;
        let mut weight_sum = 0.0f64;
        for batch in order[..take].chunks(cfg.batch_size) {
            let parts: Vec<(ModelParams, f64, f64)> = batch
                .par_chunks(GRAD_CHUNK)
                .map_init(
                    || Workspace::<f32>::new(spec),
                    |ws, chunk| {
                        let mut g = ModelParams::zeros(spec);
                        let mut loss = 0.0f64;
                        let mut wsum = 0.0f64;
                        for &i in chunk {
                            let lw = &data[i];
                            let c = lw.label.class_index();
                            let wt = class_weight[c];
                            let l = ws
                                .backward(spec, &params, lw.window.as_slice(), c, wt as f32, &mut g)
                                .expect("shapes checked above");
                            loss += l as f64;
                            wsum += wt;
                        }
                        (g, loss, wsum)
                    },
                )
                .collect();
            let mut grad = ModelParams::zeros(spec);
            let mut batch_loss = 0.0;
            for (g, l, w) in &parts {
                grad.add_assign(g);
                batch_loss += l;
                weight_sum += w;
            }
            loss_sum += batch_loss;
            grad.scale(1.0 / batch.len() as f32);
            if !batch_loss.is_finite() || !grad.is_finite() {
                return Err(PipelineError::NonFiniteLoss { epoch });
            }
            opt.step(&mut params, &grad);
        }
        let train_loss = loss_sum / weight_sum.max(1e-12);
        if !train_loss.is_finite() || !params.is_finite() {
            return Err(PipelineError::NonFiniteLoss { epoch });
        }

        let probs = evalkit::predict(spec, &params, &val);
        let conf = Confusion::from_predictions(
            val.iter().map(|w| w.label == crate::pipeline::WindowLabel::SubjectCough),
            probs.iter().map(|&p| p >= evalkit::DEFAULT_THRESHOLD),
        );
        let rec = EpochRecord { epoch, train_loss, val_acc1: conf.accuracy(), val_f1_1: conf.f1() };
        if let Some(dir) = &cfg.checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.clone(), source })?;
            nn::save_model(spec, &params, dir.join(format!("model_epoch{epoch:03}.ecn1")))?;
        }
        let improved = best.as_ref().is_none_or(|(f, _)| rec.val_f1_1 > *f);
        if improved {
            best = Some((rec.val_f1_1, params.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.epochs.push(rec);
        if since_best >= cfg.early_stop_patience {
            history.stopped_early = true;
            break;
        }
    }
    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, history))
}
