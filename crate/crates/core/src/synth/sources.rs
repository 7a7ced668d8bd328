//! Mono sound sources for the synthetic user study.
//!
//! None of these aim at acoustic realism. They are noise processes with the
//! temporal and spectral traits that make each activity distinguishable from
//! a cough yet easy to confuse with one: bursty, voice-band, or impulsive.

use std::f64::consts::PI;

use rand::Rng;

use super::filters::{band_noise, white_noise, Biquad};

/// Lower edge of the cough band used by the generator; leaves a margin
/// above 350 Hz for envelope smearing.
const COUGH_LO_HZ: f64 = 380.0;
const COUGH_HI_HZ: (f64, f64) = (1500.0, 3900.0);
/// Spectral tilt range in dB per octave.
const COUGH_TILT_DB: (f64, f64) = (-4.0, 0.0);

fn nyquist_cap(rate: f64, hz: f64) -> f64 {
    hz.min(0.49 * rate)
}

fn raised_cosine_rise(t: f64, width: f64) -> f64 {
    if t >= width {
        1.0
    } else {
        0.5 * (1.0 - (PI * t / width).cos())
    }
}

fn hann_at(t: f64, start: f64, len: f64) -> f64 {
    if t < start || t > start + len || len <= 0.0 {
        0.0
    } else {
        0.5 * (1.0 - (2.0 * PI * (t - start) / len).cos())
    }
}

fn scale_to_peak(x: &mut [f32], peak: f64) {
    let m = x.iter().fold(0.0f32, |a, v| a.max(v.abs())) as f64;
    if m > 0.0 {
        let g = (peak / m) as f32;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn add_at(dst: &mut [f32], offset: usize, src: &[f32], gain: f32) {
    for (d, s) in dst.iter_mut().skip(offset).zip(src) {
        *d += gain * s;
    }
}

/// Amplitude envelope of one cough: a sharp attack, an exponentially
/// decaying explosive phase and a weaker voiced phase, all proportional to
/// the duration. Returns (explosive, voiced) gains at time `t`.
pub fn cough_envelope(t: f64, duration_s: f64) -> (f64, f64) {
    let attack = (0.1 * duration_s).min(0.02);
    let tau = 0.12 * duration_s;
    let explosive = if t < attack {
        raised_cosine_rise(t, attack)
    } else {
        (-(t - attack) / tau).exp()
    };
    let voiced = 0.35 * hann_at(t, 0.25 * duration_s, 0.70 * duration_s);
    let fade = 0.05 * duration_s;
    let tail = ((duration_s - t) / fade).clamp(0.0, 1.0);
    (explosive * tail, voiced * tail)
}

/// One cough burst of `duration_s` seconds, band-limited to the cough band
/// with a random upper edge and spectral tilt. Peak amplitude is drawn from
/// `[0.3, 0.9]`.
pub fn synth_cough<R: Rng + ?Sized>(duration_s: f64, rate_hz: u32, rng: &mut R) -> Vec<f32> {
    let duration_s = duration_s.clamp(0.1, 2.0);
    let rate = rate_hz as f64;
    let n = (duration_s * rate).round() as usize;
    let hi = nyquist_cap(rate, rng.gen_range(COUGH_HI_HZ.0..COUGH_HI_HZ.1));
    let tilt = rng.gen_range(COUGH_TILT_DB.0..COUGH_TILT_DB.1);
    let explosive = band_noise(n, rate, COUGH_LO_HZ, hi, tilt, rng);
    let voiced = band_noise(n, rate, COUGH_LO_HZ, hi.min(2000.0), tilt - 3.0, rng);
    // the envelope closes exactly on the last sample
    let span = (n.max(2) - 1) as f64 / rate;
    let mut out: Vec<f32> = (0..n)
        .map(|i| {
            let (e, v) = cough_envelope(i as f64 / rate, span);
            (explosive[i] as f64 * e + voiced[i] as f64 * v) as f32
        })
        .collect();
    scale_to_peak(&mut out, rng.gen_range(0.3..0.9));
    out
}

/// A run of 2 to 4 coughs filling `duration_s`.
pub fn synth_cough_run<R: Rng + ?Sized>(duration_s: f64, rate_hz: u32, rng: &mut R) -> Vec<f32> {
    let rate = rate_hz as f64;
    let n = (duration_s * rate).round() as usize;
    let parts = ((duration_s / 0.22).floor() as usize).clamp(2, 4);
    let mut weights: Vec<f64> = (0..parts).map(|_| rng.gen_range(0.7..1.3)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w *= duration_s / total);
    let mut out = vec![0.0f32; n];
    let mut t = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let d = w.max(0.1);
        let c = synth_cough(d, rate_hz, rng);
        let start = (t * rate).round() as usize;
        let gain = if i == 0 { 1.0 } else { rng.gen_range(0.6..1.0) };
        add_at(&mut out, start, &c, gain);
        t += w;
    }
    out.truncate(n);
    scale_to_peak(&mut out, rng.gen_range(0.3..0.9));
    out
}

fn click<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Vec<f32> {
    let n = (rng.gen_range(0.002..0.010) * rate) as usize;
    let lo = nyquist_cap(rate, 1000.0);
    let hi = nyquist_cap(rate, 9000.0);
    let mut x = band_noise(n.max(8), rate, lo, hi, 0.0, rng);
    let len = x.len() as f64;
    for (i, v) in x.iter_mut().enumerate() {
        *v *= (-(i as f64) / (0.3 * len)).exp() as f32;
    }
    x
}

/// Biting an apple and chewing it.
pub fn apple_bite<R: Rng + ?Sized>(duration_s: f64, rate_hz: u32, rng: &mut R) -> Vec<f32> {
    let rate = rate_hz as f64;
    let n = (duration_s * rate).round() as usize;
    let mut out = vec![0.0f32; n];
    // the bite: a dense crunch
    for _ in 0..rng.gen_range(12..30) {
        let start = (rng.gen_range(0.0..0.3f64.min(duration_s)) * rate) as usize;
        let c = click(rate, rng);
        add_at(&mut out, start, &c, rng.gen_range(0.3..1.0));
    }
    // chewing
    let mut t = 0.4;
    while t + 0.2 < duration_s {
        for _ in 0..rng.gen_range(3..8) {
            let start = ((t + rng.gen_range(0.0..0.12)) * rate) as usize;
            let c = click(rate, rng);
            add_at(&mut out, start, &c, rng.gen_range(0.05..0.3));
        }
        let thump_len = (0.08 * rate) as usize;
        let thump = band_noise(thump_len, rate, 40.0, 200.0, 0.0, rng);
        let start = (t * rate) as usize;
        for (i, v) in thump.iter().enumerate() {
            if let Some(d) = out.get_mut(start + i) {
                *d += 0.15 * v * hann_at(i as f64, 0.0, thump_len as f64) as f32;
            }
        }
        t += rng.gen_range(0.55..0.85);
    }
    scale_to_peak(&mut out, 1.0);
    out
}

/// A sip: a short slurp followed by one or two gulps.
pub fn water_sip<R: Rng + ?Sized>(duration_s: f64, rate_hz: u32, rng: &mut R) -> Vec<f32> {
    let rate = rate_hz as f64;
    let n = (duration_s * rate).round() as usize;
    let mut out = vec![0.0f32; n];
    let slurp_len = ((0.25 * duration_s) * rate) as usize;
    let slurp = band_noise(
        slurp_len,
        rate,
        nyquist_cap(rate, 1500.0),
        nyquist_cap(rate, 6000.0),
        -2.0,
        rng,
    );
    for (i, v) in slurp.iter().enumerate() {
        out[i] += 0.25 * v * hann_at(i as f64, 0.0, slurp_len as f64) as f32;
    }
    let gulps = rng.gen_range(1..=2);
    for g in 0..gulps {
        let len = (rng.gen_range(0.08..0.15) * rate) as usize;
        let start = ((0.3 + 0.3 * g as f64) * duration_s * rate) as usize;
        let gulp = band_noise(len, rate, 150.0, 600.0, -3.0, rng);
        for (i, v) in gulp.iter().enumerate() {
            if let Some(d) = out.get_mut(start + i) {
                *d += v * hann_at(i as f64, 0.0, len as f64) as f32;
            }
        }
    }
    scale_to_peak(&mut out, 1.0);
    out
}

/// Harmonic voice source with a linear pitch glide and -6 dB/octave
/// harmonic roll-off, truncated below `hi_hz`.
fn voiced<R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    f0_start: f64,
    f0_end: f64,
    hi_hz: f64,
    rng: &mut R,
) -> Vec<f32> {
    let max_h = ((nyquist_cap(rate, hi_hz)) / f0_start.max(f0_end)).floor().max(1.0) as usize;
    let phases: Vec<f64> = (0..max_h).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let mut phase0 = 0.0f64;
    (0..len)
        .map(|i| {
            let frac = i as f64 / len.max(1) as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            phase0 += 2.0 * PI * f0 / rate;
            let mut s = 0.0;
            for (h, p) in phases.iter().enumerate() {
                let k = (h + 1) as f64;
                s += (k * phase0 + p).sin() / k;
            }
            s as f32
        })
        .collect()
}

/// Laughter: bursts of breathy voiced "ha" syllables.
pub fn laugh<R: Rng + ?Sized>(duration_s: f64, rate_hz: u32, rng: &mut R) -> Vec<f32> {
    let rate = rate_hz as f64;
    let n = (duration_s * rate).round() as usize;
    let mut out = vec![0.0f32; n];
    let mut t = 0.0;
    let f0 = rng.gen_range(180.0..320.0);
    while t + 0.1 < duration_s {
        let syl = rng.gen_range(0.09..0.15);
        let len = (syl * rate) as usize;
        let v = voiced(len, rate, f0 * rng.gen_range(1.0..1.2), f0 * 0.9, 3000.0, rng);
        let breath = band_noise(len, rate, 500.0, nyquist_cap(rate, 3000.0), -2.0, rng);
        let amp = 1.0 - 0.5 * t / duration_s;
        let start = (t * rate) as usize;
        for i in 0..len {
            if let Some(d) = out.get_mut(start + i) {
                let e = hann_at(i as f64, 0.0, len as f64);
                *d += (amp * e) as f32 * (0.7 * v[i] + 0.4 * breath[i]);
            }
        }
        t += syl + rng.gen_range(0.06..0.12);
    }
    scale_to_peak(&mut out, 1.0);
    out
}

/// Read speech: voiced syllables through two formant resonators, with
/// phrase pauses.
pub fn reading<R: Rng + ?Sized>(duration_s: f64, rate_hz: u32, rng: &mut R) -> Vec<f32> {
    let rate = rate_hz as f64;
    let n = (duration_s * rate).round() as usize;
    let mut out = vec![0.0f32; n];
    let base_f0 = rng.gen_range(100.0..200.0);
    let mut t = 0.1;
    let mut next_pause = rng.gen_range(2.0..4.0);
    while t + 0.15 < duration_s {
        if t > next_pause {
            t += rng.gen_range(0.3..0.6);
            next_pause = t + rng.gen_range(2.0..4.0);
            continue;
        }
        let syl = rng.gen_range(0.12..0.25);
        let len = (syl * rate) as usize;
        let f0 = base_f0 * rng.gen_range(0.85..1.2);
        let src = voiced(len, rate, f0, f0 * rng.gen_range(0.9..1.1), 3500.0, rng);
        let f1 = Biquad::bandpass(rate, rng.gen_range(300.0..800.0), 3.0).process(&src);
        let f2 = Biquad::bandpass(rate, nyquist_cap(rate, rng.gen_range(900.0..2200.0)), 4.0)
            .process(&src);
        let start = (t * rate) as usize;
        for i in 0..len {
            if let Some(d) = out.get_mut(start + i) {
                let e = hann_at(i as f64, 0.0, len as f64) as f32;
                *d += e * (f1[i] + 0.6 * f2[i]);
            }
        }
        t += syl + rng.gen_range(0.02..0.08);
    }
    scale_to_peak(&mut out, 1.0);
    out
}

fn slow_modulation<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let f = rng.gen_range(0.5..2.0);
    let p = rng.gen_range(0.0..2.0 * PI);
    (0..n)
        .map(|i| 0.55 + 0.45 * (2.0 * PI * f * i as f64 / rate + p).sin())
        .collect()
}

/// Head movement: body-conducted low rumble plus ear-tip friction rustle.
pub fn head_movement<R: Rng + ?Sized>(duration_s: f64, rate_hz: u32, rng: &mut R) -> Vec<f32> {
    let rate = rate_hz as f64;
    let n = (duration_s * rate).round() as usize;
    let rumble = band_noise(n, rate, 20.0, 150.0, 0.0, rng);
    let m = slow_modulation(n, rate, rng);
    let mut out: Vec<f32> = rumble
        .iter()
        .zip(&m)
        .map(|(r, g)| (*r as f64 * g) as f32)
        .collect();
    let mut t = rng.gen_range(0.2..1.0);
    while t + 0.3 < duration_s {
        let len = (rng.gen_range(0.1..0.3) * rate) as usize;
        let rustle = band_noise(len, rate, 200.0, nyquist_cap(rate, 2000.0), -3.0, rng);
        let start = (t * rate) as usize;
        for (i, v) in rustle.iter().enumerate() {
            if let Some(d) = out.get_mut(start + i) {
                *d += 0.25 * v * hann_at(i as f64, 0.0, len as f64) as f32;
            }
        }
        t += rng.gen_range(0.8..2.5);
    }
    scale_to_peak(&mut out, 1.0);
    out
}

/// Footsteps: low decaying thuds at a steady cadence with a faint heel
/// click.
pub fn walking<R: Rng + ?Sized>(duration_s: f64, rate_hz: u32, rng: &mut R) -> Vec<f32> {
    let rate = rate_hz as f64;
    let n = (duration_s * rate).round() as usize;
    let mut out = vec![0.0f32; n];
    let cadence = rng.gen_range(0.5..0.6);
    let mut t = rng.gen_range(0.0..cadence);
    while t < duration_s {
        let f = rng.gen_range(40.0..90.0);
        let len = (0.15 * rate) as usize;
        let start = (t * rate) as usize;
        let amp = rng.gen_range(0.7..1.0);
        for i in 0..len {
            if let Some(d) = out.get_mut(start + i) {
                let tt = i as f64 / rate;
                *d += (amp * (2.0 * PI * f * tt).sin() * (-tt / 0.03).exp()) as f32;
            }
        }
        let c = click(rate, rng);
        add_at(&mut out, start, &c, 0.05);
        t += cadence * rng.gen_range(0.95..1.05);
    }
    scale_to_peak(&mut out, 1.0);
    out
}

/// Quiet-room bed: smooth low-level noise with a falling spectrum.
pub fn room_tone<R: Rng + ?Sized>(len: usize, rate_hz: u32, rng: &mut R) -> Vec<f32> {
    let rate = rate_hz as f64;
    band_noise(len, rate, 40.0, nyquist_cap(rate, 8000.0), -3.0, rng)
}

/// One clip of loud indoor background sound (music, chatter, traffic,
/// birdsong or clatter). RMS is 1.
pub fn background_clip<R: Rng + ?Sized>(duration_s: f64, rate_hz: u32, rng: &mut R) -> Vec<f32> {
    let rate = rate_hz as f64;
    let n = (duration_s * rate).round() as usize;
    let mut out = match rng.gen_range(0..5) {
        0 => {
            // music: a few harmonic notes changing every few hundred ms
            let mut x = vec![0.0f32; n];
            let mut t = 0.0;
            while t < duration_s {
                let d = rng.gen_range(0.25..0.8);
                let len = (d * rate) as usize;
                let f0 = 110.0 * 2f64.powf(rng.gen_range(0..36) as f64 / 12.0);
                let v = voiced(len, rate, f0, f0, 4000.0, rng);
                let start = (t * rate) as usize;
                for i in 0..len {
                    if let Some(dst) = x.get_mut(start + i) {
                        let e = (-(i as f64) / (0.5 * len as f64)).exp() as f32;
                        *dst += e * v[i];
                    }
                }
                t += d;
            }
            x
        }
        1 => reading(duration_s, rate_hz, rng),
        2 => {
            let r = band_noise(n, rate, 40.0, 800.0, -2.0, rng);
            let m = slow_modulation(n, rate, rng);
            r.iter().zip(&m).map(|(a, b)| (*a as f64 * b) as f32).collect()
        }
        3 => {
            let mut x: Vec<f32> = white_noise(n, rng).iter().map(|v| 0.02 * v).collect();
            let mut t = rng.gen_range(0.0..0.5);
            while t + 0.2 < duration_s {
                let len = (rng.gen_range(0.05..0.15) * rate) as usize;
                let f_a = nyquist_cap(rate, rng.gen_range(2000.0..6000.0));
                let f_b = nyquist_cap(rate, f_a * rng.gen_range(0.7..1.3));
                let start = (t * rate) as usize;
                let mut phase = 0.0;
                for i in 0..len {
                    let f = f_a + (f_b - f_a) * i as f64 / len as f64;
                    phase += 2.0 * PI * f / rate;
                    if let Some(d) = x.get_mut(start + i) {
                        *d += (phase.sin() * hann_at(i as f64, 0.0, len as f64)) as f32;
                    }
                }
                t += rng.gen_range(0.15..0.6);
            }
            x
        }
        _ => {
            let mut x: Vec<f32> = white_noise(n, rng).iter().map(|v| 0.01 * v).collect();
            let mut t = 0.0;
            while t < duration_s {
                let c = click(rate, rng);
                add_at(&mut x, (t * rate) as usize, &c, rng.gen_range(0.2..1.0));
                t += rng.gen_range(0.05..0.5);
            }
            x
        }
    };
    out.resize(n, 0.0);
    let r = crate::dsp::rms(&out);
    if r > 0.0 {
        out.iter_mut().for_each(|v| *v = (*v as f64 / r) as f32);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cough_peak_and_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [0.1, 0.384, 1.0, 2.0] {
            let c = synth_cough(d, 48000, &mut rng);
            assert_eq!(c.len(), (d * 48000.0).round() as usize);
            let peak = c.iter().fold(0.0f32, |a, v| a.max(v.abs()));
            assert!((0.3..=0.9).contains(&peak));
            assert_eq!(*c.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn envelope_attack_is_sharp() {
        // peak reached within 20 ms for any duration
        for d in [0.1, 0.5, 2.0] {
            let attack = (0.1f64 * d).min(0.02);
            let (e, _) = cough_envelope(attack, d);
            assert!(e > 0.99, "duration {d}: {e}");
        }
    }

    #[test]
    fn sources_have_requested_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = 8000;
        assert_eq!(apple_bite(2.0, r, &mut rng).len(), 16000);
        assert_eq!(water_sip(0.6, r, &mut rng).len(), 4800);
        assert_eq!(laugh(1.5, r, &mut rng).len(), 12000);
        assert_eq!(reading(3.0, r, &mut rng).len(), 24000);
        assert_eq!(head_movement(2.0, r, &mut rng).len(), 16000);
        assert_eq!(walking(2.0, r, &mut rng).len(), 16000);
        assert_eq!(synth_cough_run(0.8, r, &mut rng).len(), 6400);
        for _ in 0..5 {
            let b = background_clip(1.0, r, &mut rng);
            assert!((crate::dsp::rms(&b) - 1.0).abs() < 1e-3);
        }
    }
}
