//! The detector network, written from scratch.
//!
//! A raw-waveform CNN: one 2-row convolution that consumes both microphone
//! channels, seven 1-D convolutions in four blocks, three dense layers and a
//! two-way softmax `(p_subject_cough, p_other)`. Everything is generic over
//! [`Scalar`] so the same code trains in `f32` and is gradient-checked in
//! `f64`.

mod engine;
mod format;
mod params;
mod profile;
mod spec;

use std::fmt::Debug;
use std::ops::{Div, Neg, Sub};
use std::path::PathBuf;

use thiserror::Error;

pub use engine::{backward, forward, Executor, Workspace};
pub use format::{load_model, model_from_bytes, model_to_bytes, save_model, MAGIC};
pub use params::{LayerParams, ModelParams, Params};
pub use profile::{profile, LayerProfile, ResourceProfile};
pub use spec::{default_spec, reduced_spec, ArchConfig, LayerKind, LayerSpec, ModelSpec};

/// Output index of the subject-cough class.
pub const SUBJECT: usize = 0;
/// Output index of everything else, environmental coughs included.
pub const OTHER: usize = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("unsupported sample rate {0} Hz")]
    UnsupportedRate(u32),
    #[error("input shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("class label {0} is not 0 or 1")]
    InvalidLabel(usize),
    #[error("not an ECN1 model file")]
    BadMagic,
    #[error("model file is truncated")]
    TruncatedFile,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("parameters contain non-finite values")]
    NonFinite,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Floating-point element type of the engine.
pub trait Scalar:
    crate::kernels::Lane
    + PartialOrd
    + Sub<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Debug
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        f32::exp(self)
    }
    fn ln(self) -> Self {
        f32::ln(self)
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}
