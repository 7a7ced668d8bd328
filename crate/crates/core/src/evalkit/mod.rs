//! Window-level detection metrics, the channel ablation and the resource
//! table.
//!
//! Two pairs of scores are reported. Acc-1/F1-1 cover the whole test set
//! with subject coughs as the positive class and everything else, including
//! other people's coughs, as negative. Acc-2/F1-2 use only windows whose
//! ground truth is a cough of either kind, so they measure how well the
//! wearer is told apart from bystanders; an environmental cough predicted
//! as "other" is a correct rejection.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentPlan;
use crate::dsp::{self, DualChannelWindow};
use crate::nn::{self, Executor, ModelParams, ModelSpec, NnError, ResourceProfile};
use crate::pipeline::{self, LabeledWindow, PipelineError, TrainConfig, TrainHistory, WindowLabel};

pub const DEFAULT_THRESHOLD: f32 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// 2x2 counts with subject cough as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_predictions(truth: impl IntoIterator<Item = bool>, predicted: impl IntoIterator<Item = bool>) -> Self {
        let mut c = Self::default();
        for (t, p) in truth.into_iter().zip(predicted) {
            c.record(t, p);
        }
        c
    }

    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `(TP + TN) / total`; 0 on an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        }
    }

    /// `2TP / (2TP + FP + FN)`; 0 when there are no positives at all.
    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / d as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f32,
    pub n_windows: usize,
    pub confusion: Confusion,
    pub acc1: f64,
    pub f1_1: f64,
    pub confusion_cough_only: Confusion,
    pub acc2: f64,
    pub f1_2: f64,
    pub resource: ResourceProfile,
}

impl MetricsReport {
    pub fn from_scores(labels: &[WindowLabel], p_subject: &[f32], threshold: f32, resource: ResourceProfile) -> Self {
        let mut all = Confusion::default();
        let mut coughs = Confusion::default();
        for (&l, &p) in labels.iter().zip(p_subject) {
            let truth = l == WindowLabel::SubjectCough;
            let pred = p >= threshold;
            all.record(truth, pred);
            if l.is_cough() {
                coughs.record(truth, pred);
            }
        }
        Self {
            threshold,
            n_windows: labels.len(),
            confusion: all,
            acc1: all.accuracy(),
            f1_1: all.f1(),
            confusion_cough_only: coughs,
            acc2: coughs.accuracy(),
            f1_2: coughs.f1(),
            resource,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    /// Aligned text: the score pairs, the resource row and both confusion
    /// matrices.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let r = &self.resource;
        let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10}", "rate_khz", "acc1", "f1_1", "acc2", "f1_2", "mflops", "space_kb");
        let _ = writeln!(
            s,
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>10.2} {:>10.1}",
            r.sample_rate_hz as f64 / 1000.0,
            self.acc1,
            self.f1_1,
            self.acc2,
            self.f1_2,
            r.flops as f64 / 1e6,
            r.space_bytes as f64 / 1000.0
        );
        for (title, c) in [("all windows", &self.confusion), ("cough windows only", &self.confusion_cough_only)] {
            let _ = writeln!(s, "\nconfusion ({title}), rows = truth");
            let _ = writeln!(s, "{:<16} {:>10} {:>10}", "", "pred_subj", "pred_other");
            let _ = writeln!(s, "{:<16} {:>10} {:>10}", "subject_cough", c.tp, c.fn_);
            let _ = writeln!(s, "{:<16} {:>10} {:>10}", "other", c.fp, c.tn);
        }
        s
    }
}

/// Anything that scores windows with a subject-cough probability.
pub trait Predictor: Sync {
    fn predict(&self, windows: &[LabeledWindow]) -> Vec<f32>;
}

/// The trained network.
pub struct ModelPredictor<'a> {
    pub spec: &'a ModelSpec,
    pub params: &'a ModelParams,
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&self, windows: &[LabeledWindow]) -> Vec<f32> {
        predict(self.spec, self.params, windows)
    }
}

/// Reads the ground truth; scores 1.0 exactly on subject coughs.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&self, windows: &[LabeledWindow]) -> Vec<f32> {
        windows.iter().map(|w| if w.label == WindowLabel::SubjectCough { 1.0 } else { 0.0 }).collect()
    }
}

/// Same score for every window.
pub struct ConstantPredictor(pub f32);

impl Predictor for ConstantPredictor {
    fn predict(&self, windows: &[LabeledWindow]) -> Vec<f32> {
        vec![self.0; windows.len()]
    }
}

/// Subject-cough probability of every window; normalizes windows that are
/// not normalized yet.
pub fn predict(spec: &ModelSpec, params: &ModelParams, windows: &[LabeledWindow]) -> Vec<f32> {
    let ws: Vec<&DualChannelWindow> = windows.iter().map(|w| &w.window).collect();
    predict_windows(spec, params, &ws)
}

pub fn predict_windows(spec: &ModelSpec, params: &ModelParams, windows: &[&DualChannelWindow]) -> Vec<f32> {
    windows
        .par_iter()
        .map_init(
            || Executor::<f32>::new(spec),
            |ex, w| {
                let out = if w.is_normalized() {
                    ex.run(spec, params, w.as_slice())
                } else {
                    ex.run(spec, params, dsp::normalize(w).as_slice())
                };
                out.expect("window shape checked by caller")[nn::SUBJECT]
            },
        )
        .collect()
}

fn check_windows(spec: &ModelSpec, set: &[LabeledWindow]) -> Result<(), EvalError> {
    if set.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    for w in set {
        if w.window.len() != spec.input_len {
            return Err(NnError::ShapeMismatch { expected: spec.input_values(), got: 2 * w.window.len() }.into());
        }
    }
    Ok(())
}

pub fn evaluate(spec: &ModelSpec, params: &ModelParams, test_set: &[LabeledWindow]) -> Result<MetricsReport, EvalError> {
    evaluate_at(spec, params, test_set, DEFAULT_THRESHOLD)
}

pub fn evaluate_at(
    spec: &ModelSpec,
    params: &ModelParams,
    test_set: &[LabeledWindow],
    threshold: f32,
) -> Result<MetricsReport, EvalError> {
    check_windows(spec, test_set)?;
    params.check(spec)?;
    evaluate_with(&ModelPredictor { spec, params }, test_set, threshold, nn::profile(spec))
}

pub fn evaluate_with(
    predictor: &dyn Predictor,
    test_set: &[LabeledWindow],
    threshold: f32,
    resource: ResourceProfile,
) -> Result<MetricsReport, EvalError> {
    if test_set.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let probs = predictor.predict(test_set);
    let labels: Vec<WindowLabel> = test_set.iter().map(|w| w.label).collect();
    Ok(MetricsReport::from_scores(&labels, &probs, threshold, resource))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Dual,
    FeedForwardOnly,
    FeedbackOnly,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [Self::Dual, Self::FeedForwardOnly, Self::FeedbackOnly];

    /// The input the network sees: single-channel modes copy the chosen
    /// channel into both rows.
    pub fn apply(self, w: &DualChannelWindow) -> DualChannelWindow {
        match self {
            Self::Dual => w.clone(),
            Self::FeedForwardOnly => w.duplicate_channel(0),
            Self::FeedbackOnly => w.duplicate_channel(1),
        }
    }

    pub fn apply_set(self, set: &[LabeledWindow]) -> Vec<LabeledWindow> {
        set.iter().map(|w| LabeledWindow { window: self.apply(&w.window), ..w.clone() }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub mode: AblationMode,
    pub report: MetricsReport,
    pub history: TrainHistory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
}

impl AblationReport {
    pub fn get(&self, mode: AblationMode) -> Option<&MetricsReport> {
        self.runs.iter().find(|r| r.mode == mode).map(|r| &r.report)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<20} {:>8} {:>8} {:>8} {:>8}\n", "input", "acc1", "f1_1", "acc2", "f1_2");
        for r in &self.runs {
            let name = match r.mode {
                AblationMode::Dual => "dual",
                AblationMode::FeedForwardOnly => "feed_forward_only",
                AblationMode::FeedbackOnly => "feedback_only",
            };
            let m = &r.report;
            let _ = writeln!(s, "{:<20} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", name, m.acc1, m.f1_1, m.acc2, m.f1_2);
        }
        s
    }
}

/// Trains and evaluates one model per input mode with identical settings.
#[allow(clippy::too_many_arguments)]
pub fn ablation(
    train_set: &[LabeledWindow],
    val_set: &[LabeledWindow],
    test_set: &[LabeledWindow],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    plan: &AugmentPlan,
    noise_pool: &[DualChannelWindow],
    modes: &[AblationMode],
) -> Result<AblationReport, EvalError> {
    let mut runs = Vec::new();
    for &mode in modes {
        let pool: Vec<DualChannelWindow> = noise_pool.iter().map(|w| mode.apply(w)).collect();
        let (params, history) = pipeline::train(&mode.apply_set(train_set), &mode.apply_set(val_set), spec, cfg, plan, &pool)?;
        let report = evaluate(spec, &params, &mode.apply_set(test_set))?;
        runs.push(AblationRun { mode, report, history });
    }
    Ok(AblationReport { runs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceRow {
    pub sample_rate_hz: u32,
    pub flops: u64,
    pub params: usize,
    pub space_bytes: u64,
}

/// One profile per rate of the reference topology.
pub fn resource_table(rates: &[u32]) -> Result<Vec<ResourceRow>, EvalError> {
    rates
        .iter()
        .map(|&r| {
            let p = nn::profile(&nn::default_spec(r)?);
            Ok(ResourceRow { sample_rate_hz: r, flops: p.flops, params: p.params, space_bytes: p.space_bytes })
        })
        .collect()
}

/// `sample_rate_khz,mflops,space_kb,...` with kB = 1000 bytes.
pub fn resource_csv(rows: &[ResourceRow]) -> String {
    let mut s = String::from("sample_rate_khz,mflops,space_kb,flops,params,space_bytes\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.2},{:.1},{},{},{}",
            r.sample_rate_hz / 1000,
            r.flops as f64 / 1e6,
            r.space_bytes as f64 / 1000.0,
            r.flops,
            r.params,
            r.space_bytes
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_formulas() {
        let c = Confusion { tp: 90, fp: 10, fn_: 10, tn: 890 };
        assert!((c.accuracy() - 0.98).abs() < 1e-12);
        assert!((c.f1() - 0.90).abs() < 1e-12);
        assert_eq!(Confusion::default().f1(), 0.0);
    }

    #[test]
    fn cough_only_subset_ignores_other_windows() {
        let p = nn::profile(&nn::default_spec(8000).unwrap());
        let labels = [WindowLabel::SubjectCough, WindowLabel::EnvCough, WindowLabel::Other, WindowLabel::Other];
        let probs = [0.9, 0.2, 0.7, 0.1];
        let r = MetricsReport::from_scores(&labels, &probs, 0.5, p);
        assert_eq!(r.confusion_cough_only, Confusion { tp: 1, fp: 0, fn_: 0, tn: 1 });
        assert_eq!(r.confusion, Confusion { tp: 1, fp: 1, fn_: 0, tn: 2 });
        assert_eq!(r.acc2, 1.0);
        assert!(r.to_text().contains("pred_subj"));
    }

    #[test]
    fn csv_has_one_row_per_rate() {
        let rows = resource_table(&crate::SUPPORTED_RATES).unwrap();
        let csv = resource_csv(&rows);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().starts_with("8,13.24,352.4"));
    }
}
