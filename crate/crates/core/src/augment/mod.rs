//! Seeded training-set augmentation.
//!
//! Three stages run in a fixed order: standard transforms (gain, time shift,
//! pitch shift, speed, random masking), noise (white Gaussian noise and
//! background mixing) and formatting (per-channel normalization). Every
//! transform treats both channels identically wherever a shared parameter is
//! involved, so the inter-channel relationship the detector relies on is
//! preserved.

mod resample;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::path::Path;

use crate::dsp::{self, DualChannelWindow};

pub use resample::{resample_centered, Interpolation};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("time shift of {0} s exceeds the 0.25 s limit")]
    ShiftTooLarge(f64),
    #[error("mask fraction {0} outside [0, 0.10]")]
    FractionOutOfRange(f64),
    #[error("{param} = {value} is outside the supported range")]
    OutOfRange { param: &'static str, value: f64 },
    #[error("white noise needs a non-silent input channel")]
    SilentInput,
    #[error("noise window shape {noise:?} does not match signal shape {signal:?}")]
    ShapeMismatch {
        signal: (usize, u32),
        noise: (usize, u32),
    },
    #[error("background mixing is enabled but the noise pool is empty")]
    EmptyNoisePool,
    #[error("invalid augmentation plan: {0}")]
    InvalidPlan(String),
    #[error("plan file: {0}")]
    PlanFile(String),
    #[error("noise pool: {0}")]
    NoisePool(String),
}

/// Augmentation parameters. Each copy draws one value uniformly from every
/// range. A stage whose range is degenerate at its identity value (gain 0,
/// speed 1, ...) is effectively off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPlan {
    pub gain_db_range: [f64; 2],
    pub shift_range_s: [f64; 2],
    pub pitch_semitone_range: [f64; 2],
    pub speed_factor_range: [f64; 2],
    pub mask_fraction_range: [f64; 2],
    pub white_noise: bool,
    pub white_noise_snr_db_range: [f64; 2],
    pub background: bool,
    pub background_snr_db_range: [f64; 2],
    pub copies_per_clip: usize,
    pub seed: u64,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        Self {
            gain_db_range: [-6.0, 6.0],
            shift_range_s: [-0.1, 0.1],
            pitch_semitone_range: [-2.0, 2.0],
            speed_factor_range: [0.9, 1.1],
            mask_fraction_range: [0.0, 0.10],
            white_noise: true,
            white_noise_snr_db_range: [5.0, 30.0],
            background: true,
            background_snr_db_range: [0.0, 20.0],
            copies_per_clip: 1,
            seed: 0,
        }
    }
}

impl AugmentPlan {
    /// A plan that copies nothing.
    pub fn none() -> Self {
        Self {
            copies_per_clip: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let ranges: [(&str, [f64; 2], f64, f64); 7] = [
            ("gain_db_range", self.gain_db_range, -60.0, 60.0),
            ("shift_range_s", self.shift_range_s, -0.25, 0.25),
            ("pitch_semitone_range", self.pitch_semitone_range, -4.0, 4.0),
            ("speed_factor_range", self.speed_factor_range, 0.5, 2.0),
            ("mask_fraction_range", self.mask_fraction_range, 0.0, 0.10),
            ("white_noise_snr_db_range", self.white_noise_snr_db_range, -20.0, 120.0),
            ("background_snr_db_range", self.background_snr_db_range, -20.0, 120.0),
        ];
        for (name, [lo, hi], min, max) in ranges {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(AugmentError::InvalidPlan(format!("{name}: [{lo}, {hi}]")));
            }
            if lo < min || hi > max {
                return Err(AugmentError::InvalidPlan(format!(
                    "{name}: [{lo}, {hi}] outside [{min}, {max}]"
                )));
            }
        }
        Ok(())
    }

    /// Parses the `key = value` text form.
    pub fn from_config_str(s: &str) -> Result<Self, AugmentError> {
        let plan: Self = toml::from_str(s).map_err(|e| AugmentError::PlanFile(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("plan fields are plain values")
    }

    /// The augmented copies of one window, not including the original.
    ///
    /// The result depends only on the plan, the window and `index`, never
    /// on evaluation order.
    pub fn variants(
        &self,
        win: &DualChannelWindow,
        index: u64,
        noise_pool: &[DualChannelWindow],
    ) -> Result<Vec<DualChannelWindow>, AugmentError> {
        if self.copies_per_clip == 0 {
            return Ok(Vec::new());
        }
        if self.background && noise_pool.is_empty() {
            return Err(AugmentError::EmptyNoisePool);
        }
        let mut rng = window_rng(self.seed, index);
        (0..self.copies_per_clip)
            .map(|_| self.one_variant(win, &mut rng, noise_pool))
            .collect()
    }

    fn one_variant(
        &self,
        win: &DualChannelWindow,
        rng: &mut ChaCha8Rng,
        noise_pool: &[DualChannelWindow],
    ) -> Result<DualChannelWindow, AugmentError> {
        // all draws happen up front so the stream layout is fixed
        let db = draw(rng, self.gain_db_range);
        let shift = draw(rng, self.shift_range_s);
        let semis = draw(rng, self.pitch_semitone_range);
        let factor = draw(rng, self.speed_factor_range);
        let frac = draw(rng, self.mask_fraction_range);
        let white_snr = draw(rng, self.white_noise_snr_db_range);
        let bg_snr = draw(rng, self.background_snr_db_range);
        let bg_index = if noise_pool.is_empty() {
            0
        } else {
            rng.gen_range(0..noise_pool.len())
        };
        let mask_seed: u64 = rng.gen();
        let noise_seed: u64 = rng.gen();

        // standard
        let mut w = gain(win, db);
        w = time_shift(&w, shift)?;
        w = pitch_shift(&w, semis)?;
        w = speed(&w, factor)?;
        w = random_mask(&w, frac, &mut ChaCha8Rng::seed_from_u64(mask_seed))?;
        // noise
        if self.white_noise {
            w = add_white_noise_lenient(&w, white_snr, &mut ChaCha8Rng::seed_from_u64(noise_seed));
        }
        if self.background {
            w = mix_background(&w, &noise_pool[bg_index], bg_snr)?;
        }
        // formatting: windows already carry the model rate, so only
        // normalization is left
        dsp::normalize_in_place(&mut w);
        Ok(w)
    }
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        // still consume a value so the stream layout does not depend on ranges
        let _: f64 = rng.gen();
        lo
    } else {
        lo + (hi - lo) * rng.gen::<f64>()
    }
}

/// Per-window generator: the plan seed picks the key, the window index picks
/// the ChaCha stream.
pub fn window_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Background windows cut from every `.wav` file in `dir` (by file name),
/// decimated to `rate_hz`. Files must be two-channel.
pub fn load_noise_pool(dir: &Path, rate_hz: u32) -> Result<Vec<DualChannelWindow>, AugmentError> {
    let err = |e: &dyn std::fmt::Display| AugmentError::NoisePool(format!("{}: {e}", dir.display()));
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| err(&e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    let mut pool = Vec::new();
    for f in &files {
        let rec = dsp::load_recording(f).map_err(|e| err(&e))?;
        let rec = dsp::decimate(&rec, rate_hz).map_err(|e| err(&e))?;
        pool.extend(dsp::slice_windows(&rec));
    }
    if pool.is_empty() {
        return Err(AugmentError::EmptyNoisePool);
    }
    Ok(pool)
}

/// Emits each window followed by its augmented copies.
pub fn apply_plan(
    windows: &[DualChannelWindow],
    plan: &AugmentPlan,
    noise_pool: &[DualChannelWindow],
) -> Result<Vec<DualChannelWindow>, AugmentError> {
    plan.validate()?;
    if plan.copies_per_clip == 0 {
        return Ok(windows.to_vec());
    }
    let per_window: Vec<Vec<DualChannelWindow>> = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut out = vec![w.clone()];
            out.extend(plan.variants(w, i as u64, noise_pool)?);
            Ok(out)
        })
        .collect::<Result<_, AugmentError>>()?;
    Ok(per_window.into_iter().flatten().collect())
}

/// Scales both channels by `10^(db/20)`.
pub fn gain(win: &DualChannelWindow, db: f64) -> DualChannelWindow {
    let mut out = win.clone();
    if db != 0.0 {
        let g = 10f64.powf(db / 20.0) as f32;
        out.data_mut().iter_mut().for_each(|v| *v *= g);
    }
    out
}

/// Circularly rotates both channels by `round(shift_s * rate)` samples.
pub fn time_shift(win: &DualChannelWindow, shift_s: f64) -> Result<DualChannelWindow, AugmentError> {
    if !(shift_s.abs() <= 0.25) {
        return Err(AugmentError::ShiftTooLarge(shift_s));
    }
    let n = (shift_s * win.sample_rate_hz() as f64).round() as i64;
    Ok(rotate(win, n))
}

/// Circular rotation by a sample count; sample `i` moves to `(i + n) mod L`.
pub fn rotate(win: &DualChannelWindow, n: i64) -> DualChannelWindow {
    let mut out = win.clone();
    let l = win.len() as i64;
    if l == 0 {
        return out;
    }
    let k = n.rem_euclid(l) as usize;
    if k != 0 {
        for ch in 0..2 {
            out.channel_mut(ch).rotate_right(k);
        }
    }
    out
}

/// Scales pitch by `2^(semitones/12)` with band-limited resampling, keeping
/// the window length. Content is compressed or stretched about the window
/// centre; samples that fall outside are cropped, gaps are zero.
pub fn pitch_shift(win: &DualChannelWindow, semitones: f64) -> Result<DualChannelWindow, AugmentError> {
    if !(semitones.abs() <= 4.0) {
        return Err(AugmentError::OutOfRange {
            param: "semitones",
            value: semitones,
        });
    }
    Ok(resample_window(win, 2f64.powf(semitones / 12.0), Interpolation::Sinc))
}

/// Rescales the time axis by `factor` with linear interpolation, keeping the
/// window length. Both channels share one interpolation grid.
pub fn speed(win: &DualChannelWindow, factor: f64) -> Result<DualChannelWindow, AugmentError> {
    if !(0.5..=2.0).contains(&factor) {
        return Err(AugmentError::OutOfRange {
            param: "speed factor",
            value: factor,
        });
    }
    Ok(resample_window(win, factor, Interpolation::Linear))
}

fn resample_window(win: &DualChannelWindow, ratio: f64, interp: Interpolation) -> DualChannelWindow {
    let mut out = win.clone();
    if ratio == 1.0 {
        return out;
    }
    for ch in 0..2 {
        let y = resample_centered(win.channel(ch), ratio, interp);
        out.channel_mut(ch).copy_from_slice(&y);
    }
    out
}

/// Zeroes exactly `round(fraction * L)` distinct samples in each channel.
pub fn random_mask<R: Rng + ?Sized>(
    win: &DualChannelWindow,
    fraction: f64,
    rng: &mut R,
) -> Result<DualChannelWindow, AugmentError> {
    if !(0.0..=0.10).contains(&fraction) {
        return Err(AugmentError::FractionOutOfRange(fraction));
    }
    let mut out = win.clone();
    let l = win.len();
    let count = (fraction * l as f64).round() as usize;
    if count == 0 {
        return Ok(out);
    }
    for ch in 0..2 {
        let picks = index::sample(rng, l, count);
        let x = out.channel_mut(ch);
        for i in picks.iter() {
            x[i] = 0.0;
        }
    }
    Ok(out)
}

/// Adds Gaussian noise to each channel at the requested per-channel SNR.
///
/// The noise is rescaled by its realized RMS, so the SNR is exact up to
/// rounding. An infinite SNR is a no-op.
pub fn add_white_noise<R: Rng + ?Sized>(
    win: &DualChannelWindow,
    snr_db: f64,
    rng: &mut R,
) -> Result<DualChannelWindow, AugmentError> {
    if snr_db == f64::INFINITY {
        return Ok(win.clone());
    }
    if (0..2).any(|ch| dsp::rms(win.channel(ch)) == 0.0) {
        return Err(AugmentError::SilentInput);
    }
    Ok(add_white_noise_lenient(win, snr_db, rng))
}

/// Same as [`add_white_noise`] but leaves silent channels untouched.
fn add_white_noise_lenient<R: Rng + ?Sized>(
    win: &DualChannelWindow,
    snr_db: f64,
    rng: &mut R,
) -> DualChannelWindow {
    let mut out = win.clone();
    if snr_db == f64::INFINITY {
        return out;
    }
    let l = win.len();
    for ch in 0..2 {
        let noise: Vec<f64> = (0..l).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let signal_rms = dsp::rms(win.channel(ch));
        if signal_rms == 0.0 {
            continue;
        }
        let noise_rms = (noise.iter().map(|v| v * v).sum::<f64>() / l as f64).sqrt();
        let scale = signal_rms / 10f64.powf(snr_db / 20.0) / noise_rms;
        for (x, n) in out.channel_mut(ch).iter_mut().zip(&noise) {
            *x = (*x as f64 + n * scale) as f32;
        }
    }
    out
}

/// Adds a background clip to both channels. The scale is set so that the
/// channel-0 SNR equals `snr_db`; the same scale applies to channel 1, which
/// keeps the clip's own inter-channel level difference.
pub fn mix_background(
    win: &DualChannelWindow,
    noise: &DualChannelWindow,
    snr_db: f64,
) -> Result<DualChannelWindow, AugmentError> {
    if noise.len() != win.len() || noise.sample_rate_hz() != win.sample_rate_hz() {
        return Err(AugmentError::ShapeMismatch {
            signal: (win.len(), win.sample_rate_hz()),
            noise: (noise.len(), noise.sample_rate_hz()),
        });
    }
    let mut out = win.clone();
    let noise_rms = dsp::rms(noise.channel(0));
    let signal_rms = dsp::rms(win.channel(0));
    if noise_rms == 0.0 || signal_rms == 0.0 {
        return Ok(out);
    }
    let scale = (signal_rms / (noise_rms * 10f64.powf(snr_db / 20.0))) as f32;
    for (x, n) in out.data_mut().iter_mut().zip(noise.as_slice()) {
        *x += scale * n;
    }
    Ok(out)
}
