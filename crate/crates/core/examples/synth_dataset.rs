//! Generates a small synthetic dataset and summarizes what was written.
//!
//! cargo run --release --example synth_dataset -- [out_dir] [users]

use std::collections::BTreeMap;
use std::path::PathBuf;

use earcough::pipeline::{self, ClassCounts};
use earcough::synth::{self, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synth_out".into()));
    let users: u32 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);

    let cfg = SynthConfig { n_users: users, activity_scale: 0.05, ..SynthConfig::default() };
    let manifest = synth::generate_dataset(&cfg, &out)?;
    println!("{} recordings for {} users in {}", manifest.entries.len(), users, out.display());

    let mut per_label: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for e in &manifest.entries {
        for seg in synth::read_annotations(&out.join(&e.annotation_path))? {
            let slot = per_label.entry(seg.label.to_string()).or_default();
            slot.0 += 1;
            slot.1 += seg.duration_s();
        }
    }
    println!("{:<26} {:>6} {:>10}", "label", "count", "mean_s");
    for (label, (n, total)) in per_label {
        println!("{label:<26} {n:>6} {:>10.3}", total / n as f64);
    }

    let windows = pipeline::load_windows(&out.join(synth::MANIFEST_FILE), 8000, |_| true)?;
    let c = ClassCounts::of(&windows);
    println!("\n0.5 s windows at 8 kHz: {} subject cough, {} environmental cough, {} other", c.subject_cough, c.env_cough, c.other);
    Ok(())
}
