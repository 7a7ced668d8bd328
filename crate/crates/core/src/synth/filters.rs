//! IIR sections and spectrally shaped noise used by the generator.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Direct-form-I biquad with RBJ cookbook coefficient formulas.
#[derive(Clone, Copy, Debug)]
pub struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    pub fn lowpass(rate: f64, cutoff_hz: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / rate;
        let alpha = w0.sin() / (2.0 * q);
        let c = w0.cos();
        Self::normalized(
            (1.0 - c) / 2.0,
            1.0 - c,
            (1.0 - c) / 2.0,
            1.0 + alpha,
            -2.0 * c,
            1.0 - alpha,
        )
    }

    pub fn highpass(rate: f64, cutoff_hz: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / rate;
        let alpha = w0.sin() / (2.0 * q);
        let c = w0.cos();
        Self::normalized(
            (1.0 + c) / 2.0,
            -(1.0 + c),
            (1.0 + c) / 2.0,
            1.0 + alpha,
            -2.0 * c,
            1.0 - alpha,
        )
    }

    pub fn bandpass(rate: f64, center_hz: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * center_hz / rate;
        let alpha = w0.sin() / (2.0 * q);
        let c = w0.cos();
        Self::normalized(alpha, 0.0, -alpha, 1.0 + alpha, -2.0 * c, 1.0 - alpha)
    }

    /// Low shelf with shelf slope 1; `gain_db` applies below `corner_hz`.
    pub fn low_shelf(rate: f64, corner_hz: f64, gain_db: f64) -> Self {
        let a = 10f64.powf(gain_db / 40.0);
        let w0 = 2.0 * PI * corner_hz / rate;
        let c = w0.cos();
        // S = 1
        let alpha = w0.sin() / 2.0 * 2f64.sqrt();
        let sa = 2.0 * a.sqrt() * alpha;
        Self::normalized(
            a * ((a + 1.0) - (a - 1.0) * c + sa),
            2.0 * a * ((a - 1.0) - (a + 1.0) * c),
            a * ((a + 1.0) - (a - 1.0) * c - sa),
            (a + 1.0) + (a - 1.0) * c + sa,
            -2.0 * ((a - 1.0) + (a + 1.0) * c),
            (a + 1.0) + (a - 1.0) * c - sa,
        )
    }

    fn normalized(b0: f64, b1: f64, b2: f64, a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            b0: b0 / a0,
            b1: b1 / a0,
            b2: b2 / a0,
            a1: a1 / a0,
            a2: a2 / a0,
        }
    }

    pub fn process(&self, x: &[f32]) -> Vec<f32> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0f64, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&xv| {
                let xv = xv as f64;
                let y = self.b0 * xv + self.b1 * x1 + self.b2 * x2 - self.a1 * y1 - self.a2 * y2;
                x2 = x1;
                x1 = xv;
                y2 = y1;
                y1 = y;
                y as f32
            })
            .collect()
    }

    /// Power gain |H|^2 at `f_hz`.
    pub fn power_gain(&self, rate: f64, f_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / rate;
        let z1 = Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = Complex::new(self.b0, 0.0) + z1 * self.b1 + z2 * self.b2;
        let den = Complex::new(1.0, 0.0) + z1 * self.a1 + z2 * self.a2;
        (num / den).norm_sqr()
    }

    /// Mean power gain over a band, sampled uniformly in frequency.
    pub fn band_power_gain(&self, rate: f64, lo_hz: f64, hi_hz: f64) -> f64 {
        let n = 256;
        (0..n)
            .map(|i| self.power_gain(rate, lo_hz + (hi_hz - lo_hz) * (i as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64
    }
}

/// Gaussian noise whose spectrum is zero outside `[lo_hz, hi_hz]` and
/// tilted by `tilt_db_per_oct` inside (relative to `lo_hz`). Output RMS is 1.
pub fn band_noise<R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    lo_hz: f64,
    hi_hz: f64,
    tilt_db_per_oct: f64,
    rng: &mut R,
) -> Vec<f32> {
    if len == 0 {
        return Vec::new();
    }
    let nfft = len.next_power_of_two().max(64);
    let mut spec = vec![Complex::new(0.0f64, 0.0); nfft];
    let df = rate / nfft as f64;
    for (k, bin) in spec.iter_mut().enumerate().take(nfft / 2).skip(1) {
        let f = k as f64 * df;
        if f < lo_hz || f > hi_hz {
            continue;
        }
        let amp = 10f64.powf(tilt_db_per_oct * (f / lo_hz).log2() / 20.0);
        *bin = Complex::new(
            rng.sample::<f64, _>(StandardNormal) * amp,
            rng.sample::<f64, _>(StandardNormal) * amp,
        );
    }
    // Hermitian mirror for a real signal
    for k in 1..nfft / 2 {
        spec[nfft - k] = spec[k].conj();
    }
    FftPlanner::new().plan_fft_inverse(nfft).process(&mut spec);
    let mut out: Vec<f32> = spec[..len].iter().map(|c| c.re as f32).collect();
    let r = crate::dsp::rms(&out);
    if r > 0.0 {
        out.iter_mut().for_each(|v| *v = (*v as f64 / r) as f32);
    }
    out
}

pub fn white_noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f32> {
    (0..len).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()
}

pub fn db_to_amp(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_shelf_boosts_lows_and_never_cuts() {
        let s = Biquad::low_shelf(48000.0, 800.0, 6.0);
        let g_low = 10.0 * s.power_gain(48000.0, 50.0).log10();
        let g_high = 10.0 * s.power_gain(48000.0, 10000.0).log10();
        assert!((g_low - 6.0).abs() < 0.1);
        assert!(g_high.abs() < 0.1);
        let mut f = 10.0;
        while f < 23000.0 {
            assert!(s.power_gain(48000.0, f) >= 1.0 - 1e-9);
            f *= 1.1;
        }
    }

    #[test]
    fn lowpass_is_minus_three_db_at_cutoff() {
        let lp = Biquad::lowpass(48000.0, 1000.0, std::f64::consts::FRAC_1_SQRT_2);
        assert!((10.0 * lp.power_gain(48000.0, 1000.0).log10() + 3.01).abs() < 0.05);
    }
}
