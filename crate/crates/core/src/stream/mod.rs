//! Continuous detection: one decision every 0.5 s, positive windows merged
//! into events.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, DualChannelRecording, DualChannelWindow};
use crate::nn::{self, Executor, ModelParams, ModelSpec, NnError};
use crate::WINDOW_SECONDS;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("recording rate {got} Hz does not match the model rate {expected} Hz")]
    RateMismatch { expected: u32, got: u32 },
    #[error("window at {got_s} s arrived after the stream reached {expected_s} s")]
    OutOfOrderWindow { expected_s: f64, got_s: f64 },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("writing events: {0}")]
    Io(#[from] std::io::Error),
}

/// A run of positive windows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub start_s: f64,
    /// Exclusive; the end of the last positive window.
    pub end_s: f64,
    pub mean_confidence: f64,
    /// Positive windows in the event.
    pub window_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Run {
    first: u64,
    last: u64,
    sum: f64,
    count: usize,
}

/// Window-index state machine that turns probabilities into events.
///
/// Positive windows separated by at most `gap_tolerance` negative windows
/// belong to the same event. An event is emitted on the first window that
/// can no longer extend it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventMerger {
    threshold: f32,
    gap_tolerance: u64,
    next_index: u64,
    run: Option<Run>,
}

impl EventMerger {
    pub fn new(threshold: f32, gap_tolerance: usize) -> Self {
        Self { threshold, gap_tolerance: gap_tolerance as u64, next_index: 0, run: None }
    }

    /// Index the merger expects next.
    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    fn emit(r: Run) -> DetectionEvent {
        DetectionEvent {
            start_s: r.first as f64 * WINDOW_SECONDS,
            end_s: (r.last + 1) as f64 * WINDOW_SECONDS,
            mean_confidence: r.sum / r.count as f64,
            window_count: r.count,
        }
    }

    /// Feeds window `index` (>= [`next_index`](Self::next_index)); skipped
    /// indices count as negative.
    pub fn push(&mut self, index: u64, p_subject: f32) -> Option<DetectionEvent> {
        debug_assert!(index >= self.next_index);
        self.next_index = index + 1;
        let mut out = None;
        if let Some(r) = self.run {
            // negatives strictly between r.last and index
            let gap = index - r.last - 1;
            let positive = p_subject >= self.threshold;
            if gap > self.gap_tolerance || (!positive && gap >= self.gap_tolerance) {
                out = Some(Self::emit(r));
                self.run = None;
            }
        }
        if p_subject >= self.threshold {
            let p = p_subject as f64;
            match &mut self.run {
                Some(r) => {
                    r.last = index;
                    r.sum += p;
                    r.count += 1;
                }
                None => self.run = Some(Run { first: index, last: index, sum: p, count: 1 }),
            }
        }
        out
    }

    /// Emits any open event and returns to the initial state.
    pub fn flush(&mut self) -> Option<DetectionEvent> {
        let out = self.run.take().map(Self::emit);
        self.next_index = 0;
        out
    }
}

/// Events from a probability sequence, one value per consecutive window.
pub fn merge_probabilities(probs: &[f32], threshold: f32, gap_tolerance: usize) -> Vec<DetectionEvent> {
    let mut m = EventMerger::new(threshold, gap_tolerance);
    let mut out: Vec<DetectionEvent> = probs.iter().enumerate().filter_map(|(i, &p)| m.push(i as u64, p)).collect();
    out.extend(m.flush());
    out
}

/// Batch detection over a whole recording already at the model rate.
pub fn detect(spec: &ModelSpec, params: &ModelParams, rec: &DualChannelRecording, threshold: f32) -> Result<Vec<DetectionEvent>, StreamError> {
    detect_with_gap(spec, params, rec, threshold, 0)
}

pub fn detect_with_gap(
    spec: &ModelSpec,
    params: &ModelParams,
    rec: &DualChannelRecording,
    threshold: f32,
    gap_tolerance: usize,
) -> Result<Vec<DetectionEvent>, StreamError> {
    let probs = window_probabilities(spec, params, rec)?;
    Ok(merge_probabilities(&probs, threshold, gap_tolerance))
}

/// Subject-cough probability of each back-to-back window.
pub fn window_probabilities(spec: &ModelSpec, params: &ModelParams, rec: &DualChannelRecording) -> Result<Vec<f32>, StreamError> {
    if rec.sample_rate_hz() != spec.sample_rate_hz {
        return Err(StreamError::RateMismatch { expected: spec.sample_rate_hz, got: rec.sample_rate_hz() });
    }
    params.check(spec)?;
    let windows = dsp::slice_windows(rec);
    let refs: Vec<&DualChannelWindow> = windows.iter().collect();
    Ok(crate::evalkit::predict_windows(spec, params, &refs))
}

/// Serializable part of a [`StreamDetector`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamState {
    pub merger: EventMerger,
}

/// Incremental detector. Memory use is fixed by the model, not by how long
/// the stream runs.
pub struct StreamDetector<'a> {
    spec: &'a ModelSpec,
    params: &'a ModelParams,
    executor: Executor<f32>,
    scratch: Vec<f32>,
    state: StreamState,
}

impl<'a> StreamDetector<'a> {
    pub fn new(spec: &'a ModelSpec, params: &'a ModelParams, threshold: f32, gap_tolerance: usize) -> Self {
        Self::from_state(spec, params, StreamState { merger: EventMerger::new(threshold, gap_tolerance) })
    }

    pub fn from_state(spec: &'a ModelSpec, params: &'a ModelParams, state: StreamState) -> Self {
        Self { spec, params, executor: Executor::new(spec), scratch: vec![0.0; spec.input_values()], state }
    }

    pub fn state(&self) -> &StreamState {
        &self.state
    }

    /// Classifies one window. Windows must arrive in time order; their
    /// start times fix their index on the 0.5 s grid.
    pub fn step(&mut self, window: &DualChannelWindow) -> Result<Option<DetectionEvent>, StreamError> {
        if window.sample_rate_hz() != self.spec.sample_rate_hz {
            return Err(StreamError::RateMismatch { expected: self.spec.sample_rate_hz, got: window.sample_rate_hz() });
        }
        let index = (window.start_s() / WINDOW_SECONDS).round();
        let expected = self.state.merger.next_index();
        if index < expected as f64 {
            return Err(StreamError::OutOfOrderWindow { expected_s: expected as f64 * WINDOW_SECONDS, got_s: window.start_s() });
        }
        let input = if window.is_normalized() {
            window.as_slice()
        } else {
            self.scratch.copy_from_slice(window.as_slice());
            let n = window.len();
            for ch in self.scratch.chunks_mut(n) {
                dsp::standardize(ch);
            }
            &self.scratch
        };
        let p = self.executor.run(self.spec, self.params, input)?[nn::SUBJECT];
        Ok(self.state.merger.push(index as u64, p))
    }

    pub fn flush(&mut self) -> Option<DetectionEvent> {
        self.state.merger.flush()
    }

    /// Bytes held by the detector: activation buffers, input scratch and
    /// state.
    pub fn memory_footprint(&self) -> usize {
        self.executor.buffer_bytes() + self.scratch.len() * 4 + std::mem::size_of::<StreamState>()
    }
}

/// Score of one 0.5 s window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub start_s: f64,
    pub p_subject: f32,
}

/// Per-window scores of a recording, without merging.
pub fn window_scores(spec: &ModelSpec, params: &ModelParams, rec: &DualChannelRecording) -> Result<Vec<WindowScore>, StreamError> {
    let probs = window_probabilities(spec, params, rec)?;
    Ok(probs
        .into_iter()
        .enumerate()
        .map(|(i, p_subject)| WindowScore { start_s: i as f64 * WINDOW_SECONDS, p_subject })
        .collect())
}

/// One JSON object per line.
pub fn write_ndjson<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<(), StreamError> {
    for e in items {
        serde_json::to_writer(&mut out, e).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
