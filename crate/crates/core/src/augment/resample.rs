use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
    /// Hann-windowed sinc, low-passed to the output Nyquist when
    /// compressing.
    Sinc,
}

/// Zero crossings of the sinc kernel on each side.
const SINC_HALF_WIDTH: f64 = 16.0;

/// Reads `x` at positions `c + (n - c) * ratio` for `n` in `0..len`, where
/// `c` is the middle of the buffer. Positions outside the input are zero.
/// `ratio > 1` compresses time (raises pitch).
pub fn resample_centered(x: &[f32], ratio: f64, interp: Interpolation) -> Vec<f32> {
    let len = x.len();
    if len == 0 {
        return Vec::new();
    }
    let c = (len - 1) as f64 / 2.0;
    let last = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let pos = c + (n as f64 - c) * ratio;
            if pos < 0.0 || pos > last {
                return 0.0;
            }
            match interp {
                Interpolation::Linear => linear_at(x, pos),
                Interpolation::Sinc => sinc_at(x, pos, (1.0 / ratio).min(1.0)),
            }
        })
        .collect()
}

fn linear_at(x: &[f32], pos: f64) -> f32 {
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= x.len() {
        return x[x.len() - 1];
    }
    (x[i] as f64 * (1.0 - frac) + x[i + 1] as f64 * frac) as f32
}

fn sinc_at(x: &[f32], pos: f64, cutoff: f64) -> f32 {
    let reach = SINC_HALF_WIDTH / cutoff;
    let lo = ((pos - reach).ceil().max(0.0)) as usize;
    let hi = ((pos + reach).floor() as usize).min(x.len() - 1);
    let mut acc = 0.0;
    for (k, &xv) in x.iter().enumerate().take(hi + 1).skip(lo) {
        let t = k as f64 - pos;
        let arg = cutoff * t;
        let s = if arg.abs() < 1e-12 {
            1.0
        } else {
            (PI * arg).sin() / (PI * arg)
        };
        let w = 0.5 * (1.0 + (PI * t / reach).cos());
        acc += xv as f64 * cutoff * s * w;
    }
    acc as f32
}
