//! Kaiser-windowed sinc low-pass design and integer-factor decimation.

use std::f64::consts::PI;

use super::{DspError, DualChannelRecording};
use crate::kernels;

/// Attenuation the decimation filter is designed for. The guaranteed
/// stopband floor is 60 dB; the extra 5 dB covers Kaiser's estimate error
/// and f32 tap rounding.
const DESIGN_ATTENUATION_DB: f64 = 65.0;

/// Cutoff as a fraction of the output rate.
const CUTOFF_FRACTION: f64 = 0.45;

/// Designs a linear-phase low-pass FIR.
///
/// `cutoff` and `transition` are in cycles per sample. The returned taps are
/// symmetric, odd in number and sum to one.
pub fn kaiser_lowpass(cutoff: f64, transition: f64, attenuation_db: f64) -> Vec<f64> {
    assert!(cutoff > 0.0 && cutoff < 0.5, "cutoff must be in (0, 0.5)");
    assert!(transition > 0.0, "transition width must be positive");
    let beta = kaiser_beta(attenuation_db);
    let mut n = ((attenuation_db - 8.0) / (2.285 * 2.0 * PI * transition)).ceil() as usize + 1;
    if n.is_multiple_of(2) {
        n += 1;
    }
    let m = (n - 1) as f64 / 2.0;
    let i0_beta = bessel_i0(beta);
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 - m;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let r = t / m;
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            sinc * w
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|h| *h /= dc);
    taps
}

fn kaiser_beta(a: f64) -> f64 {
    if a > 50.0 {
        0.1102 * (a - 8.7)
    } else if a >= 21.0 {
        0.5842 * (a - 21.0).powf(0.4) + 0.07886 * (a - 21.0)
    } else {
        0.0
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Anti-alias filter plus downsampler for one integer factor.
#[derive(Clone, Debug)]
pub struct DecimationFilter {
    factor: usize,
    /// Taps in reverse order so each output is a plain dot product.
    reversed: Vec<f32>,
}

impl DecimationFilter {
    pub fn new(source_rate: u32, target_rate: u32) -> Result<Self, DspError> {
        if target_rate == 0 || target_rate > source_rate || !source_rate.is_multiple_of(target_rate) {
            return Err(DspError::NonIntegerFactor {
                source_rate,
                target: target_rate,
            });
        }
        let factor = (source_rate / target_rate) as usize;
        if factor == 1 {
            return Ok(Self {
                factor,
                reversed: vec![1.0],
            });
        }
        let ratio = target_rate as f64 / source_rate as f64;
        let cutoff = CUTOFF_FRACTION * ratio;
        // stopband edge lands on the output Nyquist frequency
        let transition = 2.0 * (0.5 - CUTOFF_FRACTION) * ratio;
        let taps = kaiser_lowpass(cutoff, transition, DESIGN_ATTENUATION_DB);
        Ok(Self {
            factor,
            reversed: taps.iter().rev().map(|&h| h as f32).collect(),
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn num_taps(&self) -> usize {
        self.reversed.len()
    }

    /// Filters and keeps every `factor`-th sample. The filter's group delay
    /// is removed, so output sample `m` is aligned with input `m * factor`.
    pub fn apply(&self, x: &[f32]) -> Vec<f32> {
        if self.factor == 1 {
            return x.to_vec();
        }
        let n = x.len();
        let taps = self.reversed.len();
        let delay = taps / 2;
        let out_len = n / self.factor;
        let mut out = Vec::with_capacity(out_len);
        for m in 0..out_len {
            let center = m * self.factor;
            // taps cover x[center - delay ..= center + delay]
            let lo = center as isize - delay as isize;
            let x_start = lo.max(0) as usize;
            let x_end = (center + delay + 1).min(n);
            let h_start = (x_start as isize - lo) as usize;
            let h = &self.reversed[h_start..h_start + (x_end - x_start)];
            out.push(kernels::dot(h, &x[x_start..x_end]));
        }
        out
    }
}

/// Low-pass filters and downsamples both channels to `target_rate_hz`.
///
/// A factor of one returns an exact copy.
pub fn decimate(
    rec: &DualChannelRecording,
    target_rate_hz: u32,
) -> Result<DualChannelRecording, DspError> {
    let filter = DecimationFilter::new(rec.sample_rate_hz(), target_rate_hz)?;
    DualChannelRecording::new(
        filter.apply(rec.ff()),
        filter.apply(rec.fb()),
        target_rate_hz,
        rec.source_id(),
    )
}
