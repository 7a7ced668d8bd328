//! Trains dual-channel, feed-forward-only and feedback-only models on the
//! same data and compares how well each separates the wearer's coughs from
//! other people's.
//!
//! cargo run --release --example ablation

use earcough::augment::AugmentPlan;
use earcough::evalkit::{self, AblationMode};
use earcough::nn;
use earcough::pipeline::{self, SplitConfig, TrainConfig};
use earcough::synth::{self, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = SynthConfig { n_users: 3, activity_scale: 0.1, ..SynthConfig::default() };
    synth::generate_dataset(&cfg, dir.path())?;
    let split = SplitConfig { train_users: vec![0], val_users: vec![1], test_users: vec![2] };
    let s = pipeline::load_splits(&dir.path().join(synth::MANIFEST_FILE), 8000, &split)?;

    let spec = nn::default_spec(8000)?;
    let train_cfg = TrainConfig { epochs_max: 6, early_stop_patience: 3, class_weighting: true, ..TrainConfig::default() };
    let plan = AugmentPlan::none();
    let report = evalkit::ablation(&s.train, &s.val, &s.test, &spec, &train_cfg, &plan, &[], &AblationMode::ALL)?;
    print!("{}", report.to_text());
    Ok(())
}
