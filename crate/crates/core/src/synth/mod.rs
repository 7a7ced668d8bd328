//! Deterministic synthetic dual-channel dataset.
//!
//! Stands in for a real user study: ten activity groups per user and sound
//! environment, written as 48 kHz stereo WAVs with tab-separated annotation
//! files and a JSON manifest.
//!
//! The only property the detector is meant to learn from this data is the
//! inter-channel one. Sounds made by the wearer are rendered with
//! [`render_subject`]: the in-ear channel is louder and bass-boosted (body
//! conduction). Everything else goes through [`render_environment`]: the
//! in-ear channel is attenuated and low-passed (the ear-tip seal). The
//! numbers in [`ChannelModel`] are stand-ins, not measurements.

pub mod filters;
pub mod sources;

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, DualChannelRecording, WavEncoding};
use filters::{band_noise, db_to_amp, white_noise, Biquad};

pub use sources::synth_cough;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("I/O error on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] dsp::DspError),
    #[error("{path}:{line}: {msg}")]
    BadAnnotation {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("manifest: {0}")]
    BadManifest(String),
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
}

fn io_failure(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::IoFailure {
        path: path.to_owned(),
        source,
    }
}

/// Annotated event classes: the ten recorded activities plus environmental
/// coughs and background filler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventTaxonomy {
    SingleCoughSitting,
    ContinuousCoughSitting,
    BiteApple,
    SipWater,
    Laughing,
    Reading,
    HeadMovement,
    Walking,
    SingleCoughWalking,
    ContinuousCoughWalking,
    EnvironmentalCough,
    BackgroundNoise,
}

impl EventTaxonomy {
    pub const ALL: [EventTaxonomy; 12] = [
        Self::SingleCoughSitting,
        Self::ContinuousCoughSitting,
        Self::BiteApple,
        Self::SipWater,
        Self::Laughing,
        Self::Reading,
        Self::HeadMovement,
        Self::Walking,
        Self::SingleCoughWalking,
        Self::ContinuousCoughWalking,
        Self::EnvironmentalCough,
        Self::BackgroundNoise,
    ];

    /// The ten per-session recording groups, in collection order.
    pub const ACTIVITY_GROUPS: [EventTaxonomy; 10] = [
        Self::SingleCoughSitting,
        Self::ContinuousCoughSitting,
        Self::BiteApple,
        Self::SipWater,
        Self::Laughing,
        Self::Reading,
        Self::HeadMovement,
        Self::Walking,
        Self::SingleCoughWalking,
        Self::ContinuousCoughWalking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SingleCoughSitting => "single_cough_sitting",
            Self::ContinuousCoughSitting => "continuous_cough_sitting",
            Self::BiteApple => "bite_apple",
            Self::SipWater => "sip_water",
            Self::Laughing => "laughing",
            Self::Reading => "reading",
            Self::HeadMovement => "head_movement",
            Self::Walking => "walking",
            Self::SingleCoughWalking => "single_cough_walking",
            Self::ContinuousCoughWalking => "continuous_cough_walking",
            Self::EnvironmentalCough => "environmental_cough",
            Self::BackgroundNoise => "background_noise",
        }
    }

    /// A cough produced by the wearer.
    pub fn is_subject_cough(self) -> bool {
        matches!(
            self,
            Self::SingleCoughSitting
                | Self::ContinuousCoughSitting
                | Self::SingleCoughWalking
                | Self::ContinuousCoughWalking
        )
    }

    pub fn is_environmental_cough(self) -> bool {
        self == Self::EnvironmentalCough
    }

    pub fn posture(self) -> Posture {
        match self {
            Self::Walking | Self::SingleCoughWalking | Self::ContinuousCoughWalking => {
                Posture::Walking
            }
            _ => Posture::Sitting,
        }
    }
}

impl fmt::Display for EventTaxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventTaxonomy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown event label {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Quiet,
    Noisy,
    EnvCough,
}

impl Environment {
    pub const ALL: [Environment; 3] = [Self::Quiet, Self::Noisy, Self::EnvCough];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Quiet => "quiet",
            Self::Noisy => "noisy",
            Self::EnvCough => "env_cough",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Posture {
    Sitting,
    Walking,
}

/// One labeled time span inside a recording.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: EventTaxonomy,
}

impl AnnotatedSegment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn overlap_s(&self, start_s: f64, end_s: f64) -> f64 {
        (self.end_s.min(end_s) - self.start_s.max(start_s)).max(0.0)
    }
}

/// Writes `start<TAB>end<TAB>label` lines. Times use the shortest decimal
/// form that reads back to the same `f64`.
pub fn write_annotations(path: &Path, segments: &[AnnotatedSegment]) -> Result<(), SynthError> {
    let mut text = String::new();
    for s in segments {
        text.push_str(&format!("{}\t{}\t{}\n", s.start_s, s.end_s, s.label));
    }
    fs::write(path, text).map_err(io_failure(path))
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotatedSegment>, SynthError> {
    let text = fs::read_to_string(path).map_err(io_failure(path))?;
    parse_annotations(&text).map_err(|(line, msg)| SynthError::BadAnnotation {
        path: path.to_owned(),
        line,
        msg,
    })
}

pub fn parse_annotations(text: &str) -> Result<Vec<AnnotatedSegment>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err((line_no, format!("expected 3 fields, got {}", fields.len())));
        }
        let start_s: f64 = fields[0]
            .parse()
            .map_err(|e| (line_no, format!("start: {e}")))?;
        let end_s: f64 = fields[1].parse().map_err(|e| (line_no, format!("end: {e}")))?;
        let label: EventTaxonomy = fields[2].parse().map_err(|e| (line_no, e))?;
        if !(start_s >= 0.0 && end_s > start_s) {
            return Err((line_no, format!("bad interval [{start_s}, {end_s}]")));
        }
        out.push(AnnotatedSegment {
            start_s,
            end_s,
            label,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub wav_path: PathBuf,
    pub annotation_path: PathBuf,
    pub user_id: u32,
    pub environment: Environment,
    pub posture: Posture,
    pub group: EventTaxonomy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn user_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.entries.iter().map(|e| e.user_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest is plain data")
    }

    pub fn from_json(s: &str) -> Result<Self, SynthError> {
        let m: Self = serde_json::from_str(s).map_err(|e| SynthError::BadManifest(e.to_string()))?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(SynthError::BadManifest(format!(
                "unsupported format_version {}",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<(), SynthError> {
        fs::write(path, self.to_json() + "\n").map_err(io_failure(path))
    }

    pub fn read(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(io_failure(path))?;
        Self::from_json(&text)
    }
}

/// Inter-channel acoustic model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelModel {
    /// Broadband feedback-channel gain for the wearer's own sounds.
    pub subject_fb_gain_db: f64,
    /// Per-event jitter around `subject_fb_gain_db`, uniform in +-jitter.
    pub subject_fb_gain_jitter_db: f64,
    /// Corner of the body-conduction low shelf.
    pub subject_lowshelf_hz: f64,
    pub subject_lowshelf_db: f64,
    /// Passive isolation, measured as the level drop across the cough band.
    pub env_isolation_db: [f64; 2],
    pub env_lowpass_hz: f64,
    /// Inter-channel delay at 48 kHz; scaled for other rates.
    pub env_delay_samples: [u32; 2],
    /// Feed-forward level change with source distance.
    pub env_distance_db: [f64; 2],
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            subject_fb_gain_db: 6.0,
            subject_fb_gain_jitter_db: 1.0,
            subject_lowshelf_hz: 800.0,
            subject_lowshelf_db: 6.0,
            env_isolation_db: [15.0, 30.0],
            env_lowpass_hz: 1000.0,
            env_delay_samples: [0, 8],
            env_distance_db: [-10.0, 0.0],
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        let [lo, hi] = self.env_isolation_db;
        if lo < 10.0 || hi < lo {
            return Err(SynthError::InvalidConfig(format!(
                "env_isolation_db [{lo}, {hi}] must satisfy 10 <= lo <= hi"
            )));
        }
        if self.subject_fb_gain_db - self.subject_fb_gain_jitter_db.abs() < 0.0
            || self.subject_lowshelf_db < 0.0
        {
            return Err(SynthError::InvalidConfig(
                "subject feedback gains must be non-negative".into(),
            ));
        }
        if self.env_delay_samples[1] < self.env_delay_samples[0]
            || self.env_distance_db[1] < self.env_distance_db[0]
        {
            return Err(SynthError::InvalidConfig("empty range in channel model".into()));
        }
        Ok(())
    }
}

/// A two-channel signal before it becomes a recording.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSignal {
    pub ff: Vec<f32>,
    pub fb: Vec<f32>,
}

/// Renders a sound made by the wearer: channel 0 is the input, channel 1 is
/// the input with a body-conduction low shelf and a broadband gain. No
/// inter-channel delay.
pub fn render_subject<R: Rng + ?Sized>(
    mono: &[f32],
    model: &ChannelModel,
    rate_hz: u32,
    rng: &mut R,
) -> DualSignal {
    let jitter = model.subject_fb_gain_jitter_db.abs();
    let gain_db = model.subject_fb_gain_db + rng.gen_range(-jitter..=jitter);
    let shelf = Biquad::low_shelf(rate_hz as f64, model.subject_lowshelf_hz, model.subject_lowshelf_db);
    let g = db_to_amp(gain_db) as f32;
    let fb = shelf.process(mono).into_iter().map(|v| v * g).collect();
    DualSignal {
        ff: mono.to_vec(),
        fb,
    }
}

/// Cough band over which isolation is calibrated.
const ISOLATION_BAND_HZ: (f64, f64) = (350.0, 4000.0);

/// Renders a sound from somewhere in the room: channel 0 is the input at a
/// distance-dependent level, channel 1 is channel 0 attenuated by the seal,
/// low-passed and slightly delayed.
pub fn render_environment<R: Rng + ?Sized>(
    mono: &[f32],
    model: &ChannelModel,
    rate_hz: u32,
    rng: &mut R,
) -> DualSignal {
    let rate = rate_hz as f64;
    let [d_lo, d_hi] = model.env_distance_db;
    let dist = db_to_amp(rng.gen_range(d_lo..=d_hi)) as f32;
    let [i_lo, i_hi] = model.env_isolation_db;
    let iso_db = rng.gen_range(i_lo..=i_hi);
    let [dl_lo, dl_hi] = model.env_delay_samples;
    let delay48 = rng.gen_range(dl_lo..=dl_hi) as f64;
    let delay = (delay48 * rate / 48000.0).round() as usize;

    let ff: Vec<f32> = mono.iter().map(|v| v * dist).collect();
    let lp = Biquad::lowpass(rate, model.env_lowpass_hz.min(0.45 * rate), std::f64::consts::FRAC_1_SQRT_2);
    let hi = ISOLATION_BAND_HZ.1.min(0.5 * rate);
    let band_gain = lp.band_power_gain(rate, ISOLATION_BAND_HZ.0, hi);
    let g = (db_to_amp(-iso_db) / band_gain.sqrt()) as f32;
    let filtered = lp.process(&ff);
    let mut fb = vec![0.0f32; ff.len()];
    for (i, v) in filtered.iter().enumerate() {
        if i + delay < fb.len() {
            fb[i + delay] = v * g;
        }
    }
    DualSignal { ff, fb }
}

/// Levels in dBFS. Event ranges are peak levels on the feed-forward channel
/// before rendering; bed and floor ranges are RMS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Levels {
    pub subject_cough_peak_db: [f64; 2],
    pub env_cough_peak_db: [f64; 2],
    pub laugh_peak_db: [f64; 2],
    pub reading_peak_db: [f64; 2],
    pub apple_peak_db: [f64; 2],
    pub water_peak_db: [f64; 2],
    pub head_movement_peak_db: [f64; 2],
    pub walking_peak_db: [f64; 2],
    /// Footsteps under the walking-cough groups.
    pub walking_bed_peak_db: [f64; 2],
    pub quiet_bed_rms_db: [f64; 2],
    pub noisy_bed_rms_db: [f64; 2],
    /// Low-frequency body noise on the feedback channel only.
    pub body_floor_rms_db: [f64; 2],
    pub sensor_floor_rms_db: f64,
}

impl Default for Levels {
    fn default() -> Self {
        Self {
            subject_cough_peak_db: [-24.0, -6.0],
            env_cough_peak_db: [-14.0, -2.0],
            laugh_peak_db: [-26.0, -12.0],
            reading_peak_db: [-28.0, -14.0],
            apple_peak_db: [-26.0, -10.0],
            water_peak_db: [-30.0, -16.0],
            head_movement_peak_db: [-30.0, -18.0],
            walking_peak_db: [-26.0, -14.0],
            walking_bed_peak_db: [-50.0, -42.0],
            quiet_bed_rms_db: [-62.0, -56.0],
            noisy_bed_rms_db: [-46.0, -38.0],
            body_floor_rms_db: [-72.0, -60.0],
            sensor_floor_rms_db: -74.0,
        }
    }
}

/// Dataset generation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: u32,
    pub seed: u64,
    pub sample_rate_hz: u32,
    /// Multiplies the durations of the long activities (apple, reading, head
    /// movement, walking). 1.0 reproduces the per-event means of the
    /// collected data; the default keeps the dataset around 0.8 GB.
    pub activity_scale: f64,
    /// Mean rate of environmental coughs in the environmental-cough room.
    pub env_cough_rate_hz: f64,
    pub channel_model: ChannelModel,
    pub levels: Levels,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 10,
            seed: 0,
            sample_rate_hz: 48000,
            activity_scale: 0.25,
            env_cough_rate_hz: 2.0,
            channel_model: ChannelModel::default(),
            levels: Levels::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_users == 0 {
            return Err(SynthError::InvalidConfig("n_users must be positive".into()));
        }
        if !crate::SUPPORTED_RATES.contains(&self.sample_rate_hz) {
            return Err(SynthError::InvalidConfig(format!(
                "unsupported rate {}",
                self.sample_rate_hz
            )));
        }
        if !(self.activity_scale > 0.0 && self.activity_scale <= 4.0) {
            return Err(SynthError::InvalidConfig("activity_scale must be in (0, 4]".into()));
        }
        if !(self.env_cough_rate_hz >= 0.0) {
            return Err(SynthError::InvalidConfig("env_cough_rate_hz must be >= 0".into()));
        }
        self.channel_model.validate()
    }
}

/// Per-event duration statistics: (mean, sd) in seconds, from the
/// annotated collection, and the clamp applied after sampling.
fn duration_stats(label: EventTaxonomy) -> ((f64, f64), (f64, f64)) {
    match label {
        EventTaxonomy::SingleCoughSitting => ((0.384, 0.291), (0.1, 2.0)),
        EventTaxonomy::ContinuousCoughSitting => ((0.796, 0.228), (0.3, 2.0)),
        EventTaxonomy::BiteApple => ((10.264, 3.783), (1.0, 25.0)),
        EventTaxonomy::SipWater => ((0.601, 0.594), (0.25, 3.0)),
        EventTaxonomy::Laughing => ((1.823, 1.590), (0.4, 6.0)),
        EventTaxonomy::Reading => ((88.023, 10.510), (5.0, 150.0)),
        EventTaxonomy::HeadMovement => ((21.050, 6.762), (3.0, 60.0)),
        EventTaxonomy::Walking => ((34.560, 4.833), (3.0, 60.0)),
        EventTaxonomy::SingleCoughWalking => ((0.515, 0.250), (0.1, 2.0)),
        EventTaxonomy::ContinuousCoughWalking => ((0.682, 0.293), (0.3, 2.0)),
        EventTaxonomy::EnvironmentalCough => ((1.166, 0.323), (0.3, 2.0)),
        EventTaxonomy::BackgroundNoise => ((4.0, 1.0), (2.0, 6.0)),
    }
}

fn events_per_group(label: EventTaxonomy) -> usize {
    match label {
        EventTaxonomy::BiteApple | EventTaxonomy::SipWater => 5,
        EventTaxonomy::Laughing => 4,
        EventTaxonomy::Reading | EventTaxonomy::HeadMovement | EventTaxonomy::Walking => 1,
        _ => 10,
    }
}

fn is_long_activity(label: EventTaxonomy) -> bool {
    matches!(
        label,
        EventTaxonomy::BiteApple
            | EventTaxonomy::Reading
            | EventTaxonomy::HeadMovement
            | EventTaxonomy::Walking
    )
}

/// Draws an event duration. Short events use a log-normal with the
/// collected mean and standard deviation; long activities use a normal.
pub fn sample_duration<R: Rng + ?Sized>(label: EventTaxonomy, scale: f64, rng: &mut R) -> f64 {
    let ((mean, sd), (lo, hi)) = duration_stats(label);
    let d = if is_long_activity(label) {
        Normal::new(mean, sd).expect("valid normal").sample(rng)
    } else {
        let s2 = (1.0 + (sd / mean).powi(2)).ln();
        let mu = mean.ln() - s2 / 2.0;
        LogNormal::new(mu, s2.sqrt()).expect("valid lognormal").sample(rng)
    };
    let d = d.clamp(lo, hi);
    if is_long_activity(label) {
        (d * scale).max(1.0)
    } else {
        d
    }
}

fn level<R: Rng + ?Sized>([lo, hi]: [f64; 2], rng: &mut R) -> f32 {
    db_to_amp(rng.gen_range(lo..=hi)) as f32
}

fn peak(x: &[f32]) -> f32 {
    x.iter().fold(0.0f32, |a, v| a.max(v.abs()))
}

fn set_peak(x: &mut [f32], target: f32) {
    let p = peak(x);
    if p > 0.0 {
        let g = target / p;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn set_rms(x: &mut [f32], target: f32) {
    let r = dsp::rms(x) as f32;
    if r > 0.0 {
        let g = target / r;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn mix_into(dst: &mut DualSignal, start: usize, src: &DualSignal) {
    for (d, s) in dst.ff.iter_mut().skip(start).zip(&src.ff) {
        *d += s;
    }
    for (d, s) in dst.fb.iter_mut().skip(start).zip(&src.fb) {
        *d += s;
    }
}

/// Identifies one generated recording.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RecordingKey {
    pub user_id: u32,
    pub environment: Environment,
    pub group: EventTaxonomy,
}

impl RecordingKey {
    pub fn stem(&self) -> String {
        let g = EventTaxonomy::ACTIVITY_GROUPS
            .iter()
            .position(|&x| x == self.group)
            .unwrap_or(99);
        format!(
            "u{:02}_{}_g{:02}_{}",
            self.user_id,
            self.environment.as_str(),
            g,
            self.group
        )
    }

    fn stream(&self) -> u64 {
        let env = Environment::ALL
            .iter()
            .position(|&e| e == self.environment)
            .unwrap_or(0) as u64;
        let g = EventTaxonomy::ACTIVITY_GROUPS
            .iter()
            .position(|&x| x == self.group)
            .unwrap_or(0) as u64;
        ((self.user_id as u64) << 16) | (env << 8) | g
    }
}

/// Generator stream for one recording, independent of generation order.
pub fn recording_rng(seed: u64, key: &RecordingKey) -> ChaCha8Rng {
    crate::augment::window_rng(seed, key.stream())
}

fn subject_source<R: Rng + ?Sized>(label: EventTaxonomy, d: f64, rate: u32, rng: &mut R) -> Vec<f32> {
    match label {
        EventTaxonomy::SingleCoughSitting | EventTaxonomy::SingleCoughWalking => {
            sources::synth_cough(d, rate, rng)
        }
        EventTaxonomy::ContinuousCoughSitting | EventTaxonomy::ContinuousCoughWalking => {
            sources::synth_cough_run(d, rate, rng)
        }
        EventTaxonomy::BiteApple => sources::apple_bite(d, rate, rng),
        EventTaxonomy::SipWater => sources::water_sip(d, rate, rng),
        EventTaxonomy::Laughing => sources::laugh(d, rate, rng),
        EventTaxonomy::Reading => sources::reading(d, rate, rng),
        EventTaxonomy::HeadMovement => sources::head_movement(d, rate, rng),
        EventTaxonomy::Walking => sources::walking(d, rate, rng),
        EventTaxonomy::EnvironmentalCough | EventTaxonomy::BackgroundNoise => {
            unreachable!("not a subject activity")
        }
    }
}

fn subject_level(levels: &Levels, label: EventTaxonomy) -> [f64; 2] {
    match label {
        EventTaxonomy::BiteApple => levels.apple_peak_db,
        EventTaxonomy::SipWater => levels.water_peak_db,
        EventTaxonomy::Laughing => levels.laugh_peak_db,
        EventTaxonomy::Reading => levels.reading_peak_db,
        EventTaxonomy::HeadMovement => levels.head_movement_peak_db,
        EventTaxonomy::Walking => levels.walking_peak_db,
        _ => levels.subject_cough_peak_db,
    }
}

/// Renders one recording with its annotations, without touching disk.
pub fn render_recording(
    cfg: &SynthConfig,
    key: &RecordingKey,
) -> (DualChannelRecording, Vec<AnnotatedSegment>) {
    let rate = cfg.sample_rate_hz;
    let ratef = rate as f64;
    let mut rng = recording_rng(cfg.seed, key);
    let model = &cfg.channel_model;
    let levels = &cfg.levels;

    // timeline of the wearer's events
    let mut planned: Vec<(f64, f64)> = Vec::new();
    let mut t = rng.gen_range(0.5..1.0);
    for _ in 0..events_per_group(key.group) {
        let d = sample_duration(key.group, cfg.activity_scale, &mut rng);
        planned.push((t, d));
        t += d + rng.gen_range(0.6..1.4);
        // leave room for a bystander's cough between the wearer's coughs
        if key.environment == Environment::EnvCough && key.group.is_subject_cough() {
            t += 3.0;
        }
    }
    let total_s = t + rng.gen_range(0.0..0.4);
    let n = (total_s * ratef).round() as usize;
    let mut sig = DualSignal {
        ff: vec![0.0; n],
        fb: vec![0.0; n],
    };
    let mut annotations = Vec::new();

    // room bed
    match key.environment {
        Environment::Quiet | Environment::EnvCough => {
            let mut bed = sources::room_tone(n, rate, &mut rng);
            set_rms(&mut bed, level(levels.quiet_bed_rms_db, &mut rng));
            let r = render_environment(&bed, &ChannelModel { env_distance_db: [0.0, 0.0], ..model.clone() }, rate, &mut rng);
            mix_into(&mut sig, 0, &r);
        }
        Environment::Noisy => {
            let mut t = 0.0;
            while t < total_s {
                let d = sample_duration(EventTaxonomy::BackgroundNoise, 1.0, &mut rng).min(total_s - t);
                let len = (d * ratef).round() as usize;
                if len < 16 {
                    break;
                }
                let mut clip = sources::background_clip(d, rate, &mut rng);
                set_rms(&mut clip, level(levels.noisy_bed_rms_db, &mut rng));
                let fade = (0.05 * ratef) as usize;
                for i in 0..fade.min(len / 2) {
                    let g = i as f32 / fade as f32;
                    clip[i] *= g;
                    clip[len - 1 - i] *= g;
                }
                let r = render_environment(&clip, &ChannelModel { env_distance_db: [0.0, 0.0], ..model.clone() }, rate, &mut rng);
                mix_into(&mut sig, (t * ratef).round() as usize, &r);
                annotations.push(AnnotatedSegment {
                    start_s: t,
                    end_s: t + d,
                    label: EventTaxonomy::BackgroundNoise,
                });
                t += d;
            }
        }
    }

    // footsteps under the walking cough groups
    let walking_bed = matches!(
        key.group,
        EventTaxonomy::SingleCoughWalking | EventTaxonomy::ContinuousCoughWalking
    );
    if walking_bed {
        let mut steps = sources::walking(total_s, rate, &mut rng);
        steps.resize(n, 0.0);
        set_peak(&mut steps, level(levels.walking_bed_peak_db, &mut rng));
        let r = render_subject(&steps, model, rate, &mut rng);
        mix_into(&mut sig, 0, &r);
    }

    // environmental coughs, kept clear of the wearer's own sounds; footsteps
    // run under the whole walking-cough recordings, so those get none
    if key.environment == Environment::EnvCough && cfg.env_cough_rate_hz > 0.0 && !walking_bed {
        let guard = 0.3;
        let mut t = rng.gen_range(0.0..1.0 / cfg.env_cough_rate_hz);
        let mut last_end = f64::NEG_INFINITY;
        while t < total_s {
            let d = sample_duration(EventTaxonomy::EnvironmentalCough, 1.0, &mut rng);
            let mono_seed: u64 = rng.gen();
            let gap = -rng.gen::<f64>().max(1e-12).ln() / cfg.env_cough_rate_hz;
            let clear = t + d <= total_s
                && t >= last_end + 0.1
                && planned
                    .iter()
                    .all(|&(s, sd)| t + d + guard <= s || t >= s + sd + guard);
            if clear {
                let mut crng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(mono_seed);
                let mut mono = if d > 0.6 {
                    sources::synth_cough_run(d, rate, &mut crng)
                } else {
                    sources::synth_cough(d, rate, &mut crng)
                };
                set_peak(&mut mono, level(levels.env_cough_peak_db, &mut rng));
                let r = render_environment(&mono, model, rate, &mut rng);
                mix_into(&mut sig, (t * ratef).round() as usize, &r);
                annotations.push(AnnotatedSegment {
                    start_s: t,
                    end_s: t + d,
                    label: EventTaxonomy::EnvironmentalCough,
                });
                last_end = t + d;
                t += d;
            }
            t += gap;
        }
    }

    // the wearer's events
    for &(start, d) in &planned {
        let mut mono = subject_source(key.group, d, rate, &mut rng);
        set_peak(&mut mono, level(subject_level(levels, key.group), &mut rng));
        let r = render_subject(&mono, model, rate, &mut rng);
        mix_into(&mut sig, (start * ratef).round() as usize, &r);
        annotations.push(AnnotatedSegment {
            start_s: start,
            end_s: start + mono.len() as f64 / ratef,
            label: key.group,
        });
    }

    // body noise inside the ear canal and electrical floor on both mics
    let mut body = band_noise(n, ratef, 20.0, 300.0, -3.0, &mut rng);
    set_rms(&mut body, level(levels.body_floor_rms_db, &mut rng));
    let floor = db_to_amp(levels.sensor_floor_rms_db) as f32;
    let w0 = white_noise(n, &mut rng);
    let w1 = white_noise(n, &mut rng);
    for i in 0..n {
        sig.ff[i] += floor * w0[i];
        sig.fb[i] += body[i] + floor * w1[i];
    }

    annotations.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let rec = DualChannelRecording::new(sig.ff, sig.fb, rate, key.stem())
        .expect("generator output is finite and equal length");
    (rec, annotations)
}

/// All recording keys for a configuration, in manifest order.
pub fn recording_keys(cfg: &SynthConfig) -> Vec<RecordingKey> {
    let mut keys = Vec::new();
    for user_id in 0..cfg.n_users {
        for environment in Environment::ALL {
            for group in EventTaxonomy::ACTIVITY_GROUPS {
                keys.push(RecordingKey {
                    user_id,
                    environment,
                    group,
                });
            }
        }
    }
    keys
}

/// Renders every recording and writes `wav/`, `ann/` and the manifest under
/// `out_dir`.
pub fn generate_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest, SynthError> {
    cfg.validate()?;
    let wav_dir = out_dir.join("wav");
    let ann_dir = out_dir.join("ann");
    fs::create_dir_all(&wav_dir).map_err(io_failure(&wav_dir))?;
    fs::create_dir_all(&ann_dir).map_err(io_failure(&ann_dir))?;

    let keys = recording_keys(cfg);
    let entries = keys
        .par_iter()
        .map(|key| {
            let (rec, ann) = render_recording(cfg, key);
            let stem = key.stem();
            let wav_rel = PathBuf::from("wav").join(format!("{stem}.wav"));
            let ann_rel = PathBuf::from("ann").join(format!("{stem}.tsv"));
            dsp::write_recording(&rec, out_dir.join(&wav_rel), WavEncoding::Pcm16)?;
            write_annotations(&out_dir.join(&ann_rel), &ann)?;
            Ok(ManifestEntry {
                wav_path: wav_rel,
                annotation_path: ann_rel,
                user_id: key.user_id,
                environment: key.environment,
                posture: key.group.posture(),
                group: key.group,
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;

    let manifest = DatasetManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        seed: cfg.seed,
        sample_rate_hz: cfg.sample_rate_hz,
        entries,
    };
    let mpath = out_dir.join(MANIFEST_FILE);
    manifest.write(&mpath)?;
    let mut f = fs::File::create(out_dir.join("synth_config.toml")).map_err(io_failure(out_dir))?;
    f.write_all(toml::to_string(cfg).expect("plain config").as_bytes())
        .map_err(io_failure(out_dir))?;
    Ok(manifest)
}

/// A recording with `n_coughs` single subject coughs spread evenly over
/// `duration_s` in a quiet room, plus its annotations. Used for streaming
/// demos and tests.
pub fn cough_track(
    cfg: &SynthConfig,
    duration_s: f64,
    n_coughs: usize,
    seed: u64,
) -> (DualChannelRecording, Vec<AnnotatedSegment>) {
    let rate = cfg.sample_rate_hz;
    let ratef = rate as f64;
    let mut rng = crate::augment::window_rng(seed, 0xC0FFEE);
    let n = (duration_s * ratef).round() as usize;
    let model = &cfg.channel_model;
    let mut bed = sources::room_tone(n, rate, &mut rng);
    set_rms(&mut bed, level(cfg.levels.quiet_bed_rms_db, &mut rng));
    let mut sig = render_environment(&bed, &ChannelModel { env_distance_db: [0.0, 0.0], ..model.clone() }, rate, &mut rng);
    let slot = duration_s / n_coughs.max(1) as f64;
    let mut ann = Vec::new();
    for k in 0..n_coughs {
        let d = sample_duration(EventTaxonomy::SingleCoughSitting, 1.0, &mut rng).min(0.8);
        let start = k as f64 * slot + rng.gen_range(0.25..(slot - d - 0.25).max(0.3));
        let mut mono = sources::synth_cough(d, rate, &mut rng);
        set_peak(&mut mono, level(cfg.levels.subject_cough_peak_db, &mut rng));
        let r = render_subject(&mono, model, rate, &mut rng);
        mix_into(&mut sig, (start * ratef).round() as usize, &r);
        ann.push(AnnotatedSegment {
            start_s: start,
            end_s: start + mono.len() as f64 / ratef,
            label: EventTaxonomy::SingleCoughSitting,
        });
    }
    let mut body = band_noise(n, ratef, 20.0, 300.0, -3.0, &mut rng);
    set_rms(&mut body, level(cfg.levels.body_floor_rms_db, &mut rng));
    for (d, b) in sig.fb.iter_mut().zip(&body) {
        *d += b;
    }
    sig.ff.truncate(n);
    sig.fb.truncate(n);
    let rec = DualChannelRecording::new(sig.ff, sig.fb, rate, format!("cough_track_{seed}"))
        .expect("finite");
    (rec, ann)
}

/// A pool of background windows for augmentation, rendered through the
/// environmental channel model at `rate_hz`.
pub fn noise_pool(cfg: &SynthConfig, rate_hz: u32, count: usize, seed: u64) -> Vec<dsp::DualChannelWindow> {
    (0..count)
        .map(|i| {
            let mut rng = crate::augment::window_rng(seed, 0x0B6 << 20 | i as u64);
            let clip = sources::background_clip(crate::WINDOW_SECONDS, rate_hz, &mut rng);
            let r = render_environment(&clip, &cfg.channel_model, rate_hz, &mut rng);
            dsp::DualChannelWindow::from_channels(
                &r.ff,
                &r.fb,
                rate_hz,
                dsp::WindowOrigin {
                    source_id: format!("noise_{i}"),
                    start_s: 0.0,
                },
            )
            .expect("one window of samples")
        })
        .collect()
}
