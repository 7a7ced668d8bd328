//! Runs one synthetic cough window through each augmentation stage and the
//! full default plan.
//!
//! cargo run --release --example augment_tour

use earcough::augment::{self, AugmentPlan};
use earcough::dsp::{self, DualChannelWindow};
use earcough::synth::{self, SynthConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn describe(name: &str, w: &DualChannelWindow) {
    let peak = |x: &[f32]| x.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    println!(
        "{name:<24} ff rms {:>8.5} peak {:>7.4}   fb rms {:>8.5} peak {:>7.4}",
        dsp::rms(w.channel(0)),
        peak(w.channel(0)),
        dsp::rms(w.channel(1)),
        peak(w.channel(1))
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SynthConfig::default();
    let (rec, ann) = synth::cough_track(&cfg, 5.0, 1, 1);
    let rec = dsp::decimate(&rec, 8000)?;
    let start = (ann[0].start_s / 0.5).floor() as usize;
    let win = dsp::slice_windows(&rec).swap_remove(start);
    let pool = synth::noise_pool(&cfg, 8000, 8, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    describe("original", &win);
    describe("gain +6 dB", &augment::gain(&win, 6.0));
    describe("time shift 0.1 s", &augment::time_shift(&win, 0.1)?);
    describe("pitch +2 semitones", &augment::pitch_shift(&win, 2.0)?);
    describe("speed 1.1", &augment::speed(&win, 1.1)?);
    describe("mask 10%", &augment::random_mask(&win, 0.10, &mut rng)?);
    describe("white noise 10 dB", &augment::add_white_noise(&win, 10.0, &mut rng)?);
    describe("background 5 dB", &augment::mix_background(&win, &pool[0], 5.0)?);

    let plan = AugmentPlan { copies_per_clip: 3, ..AugmentPlan::default() };
    println!("\ndefault plan, 3 copies (normalized):");
    for (i, v) in plan.variants(&win, 0, &pool)?.iter().enumerate() {
        describe(&format!("copy {i}"), v);
    }
    println!("\nplan as TOML:\n{}", plan.to_config_string());
    Ok(())
}
