use earcough::augment::AugmentPlan;
use earcough::dsp::{DualChannelWindow, WindowOrigin};
use earcough::evalkit;
use earcough::nn;
use earcough::pipeline::{self, LabeledWindow, OptimizerKind, PipelineError, TrainConfig, WindowLabel};
use earcough::synth::Environment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Subject windows carry a noisy tone burst on the feedback channel, other
/// windows on the feed-forward channel; the remaining channel is silent.
fn toy_set(n: usize, seed: u64) -> Vec<LabeledWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let subject = i % 2 == 0;
            let noise = |rng: &mut ChaCha8Rng| (0..64).map(|_| rng.gen_range(-0.05f32..0.05)).collect::<Vec<_>>();
            let mut burst = noise(&mut rng);
            let at = rng.gen_range(0..40);
            let f = rng.gen_range(0.2f32..0.8);
            for t in 0..20 {
                burst[at + t] += (f * t as f32).sin() * (1.0 - t as f32 / 20.0);
            }
            let quiet = vec![0.0f32; 64];
            let (ff, fb) = if subject { (quiet, burst) } else { (burst, quiet) };
            let origin = WindowOrigin { source_id: format!("toy{i}"), start_s: 0.0 };
            LabeledWindow {
                window: DualChannelWindow::from_channels(&ff, &fb, 128, origin).unwrap(),
                label: if subject { WindowLabel::SubjectCough } else { WindowLabel::Other },
                user_id: 0,
                environment: Environment::Quiet,
            }
        })
        .collect()
}

#[test]
fn learns_channel_coded_toy_task() {
    let spec = nn::reduced_spec(64).unwrap();
    let train = toy_set(512, 1);
    let val = toy_set(128, 2);
    let test = toy_set(256, 3);
    let cfg = TrainConfig { epochs_max: 30, learning_rate: 3e-3, early_stop_patience: 30, ..TrainConfig::default() };
    let (params, hist) = pipeline::train(&train, &val, &spec, &cfg, &AugmentPlan::none(), &[]).unwrap();
    let report = evalkit::evaluate(&spec, &params, &test).unwrap();
    println!("toy: acc1 {:.4} after {} epochs (best {})", report.acc1, hist.epochs.len(), hist.best_epoch);
    assert!(report.acc1 >= 0.99, "acc1 {}", report.acc1);
    assert!(hist.epochs.len() <= 30);
}

#[test]
fn zero_learning_rate_stops_after_patience() {
    let spec = nn::reduced_spec(64).unwrap();
    let train = toy_set(64, 4);
    let val = toy_set(32, 5);
    let cfg = TrainConfig { epochs_max: 20, learning_rate: 0.0, early_stop_patience: 1, ..TrainConfig::default() };
    let (params, hist) = pipeline::train(&train, &val, &spec, &cfg, &AugmentPlan::none(), &[]).unwrap();
    assert_eq!(hist.epochs.len(), 2);
    assert!(hist.stopped_early);
    assert_eq!(hist.best_epoch, 1);
    assert_eq!(params, nn::ModelParams::init(&spec, cfg.seed));
}

#[test]
fn history_csv_has_one_row_per_epoch() {
    let spec = nn::reduced_spec(64).unwrap();
    let cfg = TrainConfig { epochs_max: 3, early_stop_patience: 10, ..TrainConfig::default() };
    let (_, hist) = pipeline::train(&toy_set(64, 6), &toy_set(32, 7), &spec, &cfg, &AugmentPlan::none(), &[]).unwrap();
    let csv = hist.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_acc1,val_f1_1");
    assert_eq!(lines.len(), 1 + hist.epochs.len());
    assert_eq!(hist.epochs.len(), 3);
}

#[test]
fn training_is_deterministic() {
    let spec = nn::reduced_spec(64).unwrap();
    let train = toy_set(200, 8);
    let val = toy_set(40, 9);
    let pool: Vec<DualChannelWindow> = toy_set(4, 10).into_iter().map(|w| w.window).collect();
    let plan = AugmentPlan { seed: 3, ..AugmentPlan::default() };
    for optimizer in [OptimizerKind::Adam, OptimizerKind::Momentum, OptimizerKind::Sgd] {
        let cfg = TrainConfig {
            epochs_max: 3,
            batch_size: 20,
            optimizer,
            class_weighting: true,
            epoch_size: Some(150),
            seed: 11,
            ..TrainConfig::default()
        };
        let a = pipeline::train(&train, &val, &spec, &cfg, &plan, &pool).unwrap();
        let b = pipeline::train(&train, &val, &spec, &cfg, &plan, &pool).unwrap();
        assert_eq!(a, b, "{optimizer:?}");
    }
}

#[test]
fn rejects_degenerate_inputs() {
    let spec = nn::reduced_spec(64).unwrap();
    let mut one_class = toy_set(20, 12);
    one_class.retain(|w| w.label == WindowLabel::Other);
    let val = toy_set(10, 13);
    let cfg = TrainConfig::default();
    let plan = AugmentPlan::none();
    assert!(matches!(
        pipeline::train(&one_class, &val, &spec, &cfg, &plan, &[]),
        Err(PipelineError::SingleClassTrainingSet)
    ));
    assert!(matches!(
        pipeline::train(&toy_set(20, 14), &[], &spec, &cfg, &plan, &[]),
        Err(PipelineError::EmptyValidationSet)
    ));
    let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
    assert!(matches!(pipeline::train(&toy_set(20, 14), &val, &spec, &bad, &plan, &[]), Err(PipelineError::InvalidConfig(_))));
}

#[test]
fn thread_count_does_not_change_results() {
    let spec = nn::reduced_spec(64).unwrap();
    let train = toy_set(160, 15);
    let val = toy_set(40, 16);
    let cfg = TrainConfig { epochs_max: 2, batch_size: 40, ..TrainConfig::default() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| pipeline::train(&train, &val, &spec, &cfg, &AugmentPlan::none(), &[]).unwrap())
    };
    assert_eq!(run(1), run(4));
}
