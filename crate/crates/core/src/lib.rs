//! Subject-aware cough event detection from the dual-channel microphones of
//! hybrid-ANC earbuds.
//!
//! The feed-forward (outer) microphone is channel 0 and the feedback (in-ear)
//! microphone is channel 1 everywhere in this crate. A cough emitted by the
//! wearer reaches the in-ear microphone through the body and is at least as
//! loud there as outside; a cough from somebody else in the room is
//! attenuated by the ear-tip seal. The detector is a small raw-waveform CNN
//! that sees both channels of a 0.5 s window at once and learns that
//! relationship.
//!
//! Module map:
//!
//! - [`dsp`]: WAV I/O, anti-aliased decimation, windowing, normalization.
//! - [`augment`]: seeded three-stage training augmentation.
//! - [`synth`]: synthetic dual-channel dataset generator.
//! - [`nn`]: the network, its gradients, resource accounting and the
//!   `ECN1` model file format.
//! - [`pipeline`]: window labeling, user-level splits, training loop.
//! - [`evalkit`]: detection metrics, channel ablation, resource table.
//! - [`stream`]: continuous detection and event merging.
//! - [`cli`]: the `earcough` command-line front end.

pub mod augment;
pub mod cli;
pub mod dsp;
pub mod evalkit;
pub mod nn;
pub mod pipeline;
pub mod stream;
pub mod synth;

mod kernels;

pub use dsp::{DualChannelRecording, DualChannelWindow};
pub use evalkit::MetricsReport;
pub use nn::{ModelParams, ModelSpec, ResourceProfile};
pub use stream::DetectionEvent;

/// Sample rates the recording pipeline accepts.
pub const SUPPORTED_RATES: [u32; 4] = [8000, 16000, 24000, 48000];

/// Window length in seconds; one classification per window.
pub const WINDOW_SECONDS: f64 = 0.5;
