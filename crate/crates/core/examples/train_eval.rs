//! Synthesizes a small cohort, trains the 8 kHz model, evaluates it on the
//! held-out user and saves it.
//!
//! cargo run --release --example train_eval -- [model_out]

use earcough::augment::AugmentPlan;
use earcough::evalkit;
use earcough::nn;
use earcough::pipeline::{self, ClassCounts, SplitConfig, TrainConfig};
use earcough::synth::{self, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model_out = std::env::args().nth(1).unwrap_or_else(|| "earcough_8k.ecn".into());
    let dir = tempfile::tempdir()?;
    let cfg = SynthConfig { n_users: 3, activity_scale: 0.1, ..SynthConfig::default() };
    synth::generate_dataset(&cfg, dir.path())?;

    let split = SplitConfig { train_users: vec![0], val_users: vec![1], test_users: vec![2] };
    let s = pipeline::load_splits(&dir.path().join(synth::MANIFEST_FILE), 8000, &split)?;
    for (name, set) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
        println!("{name:<5} {:?}", ClassCounts::of(set));
    }

    let spec = nn::default_spec(8000)?;
    let train_cfg = TrainConfig { epochs_max: 8, early_stop_patience: 3, class_weighting: true, ..TrainConfig::default() };
    let plan = AugmentPlan::default();
    let pool = synth::noise_pool(&cfg, 8000, 64, plan.seed);
    let (params, history) = pipeline::train(&s.train, &s.val, &spec, &train_cfg, &plan, &pool)?;
    print!("\n{}", history.to_csv());

    let report = evalkit::evaluate(&spec, &params, &s.test)?;
    println!("\n{}", report.to_text());
    nn::save_model(&spec, &params, &model_out)?;
    println!("saved {model_out}");
    Ok(())
}
