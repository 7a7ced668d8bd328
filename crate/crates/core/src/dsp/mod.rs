//! Audio ingestion, rate conversion, windowing and normalization.
//!
//! This is the deterministic signal path shared by training, evaluation and
//! streaming. Channel 0 is always the feed-forward microphone and channel 1
//! the feedback microphone.

mod fir;
mod wav;

pub use fir::{decimate, kaiser_lowpass, DecimationFilter};
pub use wav::{load_recording, write_recording, WavEncoding};

use std::path::PathBuf;

use thiserror::Error;

use crate::{SUPPORTED_RATES, WINDOW_SECONDS};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("expected 2 channels, file has {0}")]
    NotStereo(u16),
    #[error("unsupported sample encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("unsupported sample rate {0} Hz")]
    UnsupportedRate(u32),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("target rate {target} Hz is not an integer divisor of {source_rate} Hz")]
    NonIntegerFactor { source_rate: u32, target: u32 },
    #[error("channel lengths differ: ff={ff}, fb={fb}")]
    ChannelLengthMismatch { ff: usize, fb: usize },
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("window length {len} does not match {rate} Hz x 0.5 s")]
    WindowShape { len: usize, rate: u32 },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Time-aligned two-channel recording.
#[derive(Clone, Debug, PartialEq)]
pub struct DualChannelRecording {
    samples_ff: Vec<f32>,
    samples_fb: Vec<f32>,
    sample_rate_hz: u32,
    source_id: String,
}

impl DualChannelRecording {
    pub fn new(
        samples_ff: Vec<f32>,
        samples_fb: Vec<f32>,
        sample_rate_hz: u32,
        source_id: impl Into<String>,
    ) -> Result<Self, DspError> {
        if !SUPPORTED_RATES.contains(&sample_rate_hz) {
            return Err(DspError::UnsupportedRate(sample_rate_hz));
        }
        if samples_ff.len() != samples_fb.len() {
            return Err(DspError::ChannelLengthMismatch {
                ff: samples_ff.len(),
                fb: samples_fb.len(),
            });
        }
        if let Some(i) = samples_ff
            .iter()
            .chain(&samples_fb)
            .position(|s| !s.is_finite())
        {
            return Err(DspError::NonFiniteSample(i % samples_ff.len().max(1)));
        }
        Ok(Self {
            samples_ff,
            samples_fb,
            sample_rate_hz,
            source_id: source_id.into(),
        })
    }

    pub fn ff(&self) -> &[f32] {
        &self.samples_ff
    }

    pub fn fb(&self) -> &[f32] {
        &self.samples_fb
    }

    pub fn channel(&self, ch: usize) -> &[f32] {
        match ch {
            0 => &self.samples_ff,
            1 => &self.samples_fb,
            _ => panic!("channel index {ch} out of range"),
        }
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Number of frames (samples per channel).
    pub fn len(&self) -> usize {
        self.samples_ff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples_ff.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn into_channels(self) -> (Vec<f32>, Vec<f32>) {
        (self.samples_ff, self.samples_fb)
    }
}

/// Where a window came from.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowOrigin {
    pub source_id: String,
    pub start_s: f64,
}

/// A 0.5 s two-channel clip, the unit of classification.
///
/// Samples are stored channel-major: `data[..len]` is the feed-forward
/// channel and `data[len..]` the feedback channel.
#[derive(Clone, Debug, PartialEq)]
pub struct DualChannelWindow {
    data: Vec<f32>,
    sample_rate_hz: u32,
    origin: WindowOrigin,
    normalized: bool,
}

impl DualChannelWindow {
    /// Builds a window from two equal-length channels.
    ///
    /// The rate only has to be even here, so reduced test models can use
    /// tiny windows (e.g. 64 samples at a nominal 128 Hz).
    pub fn from_channels(
        ff: &[f32],
        fb: &[f32],
        sample_rate_hz: u32,
        origin: WindowOrigin,
    ) -> Result<Self, DspError> {
        if ff.len() != fb.len() {
            return Err(DspError::ChannelLengthMismatch {
                ff: ff.len(),
                fb: fb.len(),
            });
        }
        if sample_rate_hz == 0 || !sample_rate_hz.is_multiple_of(2) || ff.len() != window_len(sample_rate_hz)
        {
            return Err(DspError::WindowShape {
                len: ff.len(),
                rate: sample_rate_hz,
            });
        }
        let mut data = Vec::with_capacity(2 * ff.len());
        data.extend_from_slice(ff);
        data.extend_from_slice(fb);
        Ok(Self {
            data,
            sample_rate_hz,
            origin,
            normalized: false,
        })
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.data.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn origin(&self) -> &WindowOrigin {
        &self.origin
    }

    pub fn start_s(&self) -> f64 {
        self.origin.start_s
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn channel(&self, ch: usize) -> &[f32] {
        let l = self.len();
        &self.data[ch * l..(ch + 1) * l]
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [f32] {
        let l = self.len();
        self.normalized = false;
        &mut self.data[ch * l..(ch + 1) * l]
    }

    /// Both channels, channel-major, as consumed by the network.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        self.normalized = false;
        &mut self.data
    }

    pub(crate) fn set_normalized(&mut self, normalized: bool) {
        self.normalized = normalized;
    }

    /// Replaces both channels with a copy of one of them.
    pub fn duplicate_channel(&self, ch: usize) -> Self {
        let l = self.len();
        let src = self.channel(ch).to_vec();
        let mut out = self.clone();
        out.data[..l].copy_from_slice(&src);
        out.data[l..].copy_from_slice(&src);
        out
    }
}

/// Samples per channel in one 0.5 s window.
pub fn window_len(sample_rate_hz: u32) -> usize {
    (sample_rate_hz / 2) as usize
}

/// Back-to-back 0.5 s windows. A trailing remainder is dropped.
pub fn slice_windows(rec: &DualChannelRecording) -> Vec<DualChannelWindow> {
    slice_windows_with_hop(rec, WINDOW_SECONDS)
}

/// Like [`slice_windows`] with an explicit hop. `hop_s < 0.5` overlaps
/// windows.
///
/// # Panics
///
/// If the hop rounds to zero samples.
pub fn slice_windows_with_hop(rec: &DualChannelRecording, hop_s: f64) -> Vec<DualChannelWindow> {
    let rate = rec.sample_rate_hz();
    let len = window_len(rate);
    let hop = (hop_s * rate as f64).round() as usize;
    assert!(hop > 0, "hop must be at least one sample");
    let mut out = Vec::new();
    let mut start = 0usize;
    while start + len <= rec.len() {
        let origin = WindowOrigin {
            source_id: rec.source_id().to_owned(),
            start_s: start as f64 / rate as f64,
        };
        let w = DualChannelWindow::from_channels(
            &rec.ff()[start..start + len],
            &rec.fb()[start..start + len],
            rate,
            origin,
        )
        .expect("window length follows from the rate");
        out.push(w);
        start += hop;
    }
    out
}

/// Shifts each channel to zero mean and unit standard deviation.
///
/// A channel whose standard deviation is below 1e-8 becomes all zeros.
pub fn normalize(win: &DualChannelWindow) -> DualChannelWindow {
    let mut out = win.clone();
    normalize_in_place(&mut out);
    out
}

pub fn normalize_in_place(win: &mut DualChannelWindow) {
    for ch in 0..2 {
        standardize(win.channel_mut(ch));
    }
    win.set_normalized(true);
}

/// Zero mean, unit standard deviation in place; near-constant input becomes
/// all zeros.
pub fn standardize(x: &mut [f32]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd < 1e-8 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for v in x.iter_mut() {
        *v = ((*v as f64 - mean) / sd) as f32;
    }
}

/// Root-mean-square of a slice, accumulated in f64.
pub fn rms(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}
