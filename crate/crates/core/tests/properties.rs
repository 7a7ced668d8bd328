use earcough::augment::{self, AugmentPlan};
use earcough::dsp::{self, DualChannelWindow, WindowOrigin};
use earcough::evalkit::MetricsReport;
use earcough::nn::{self, ModelParams, NnError, ResourceProfile};
use earcough::pipeline::{label_for, split_by_user, LabeledWindow, SplitConfig, WindowLabel};
use earcough::stream::{merge_probabilities, DetectionEvent, EventMerger};
use earcough::synth::{self, AnnotatedSegment, Environment, EventTaxonomy};
use proptest::prelude::*;

fn window(ff: &[f32], fb: &[f32], rate: u32, start_s: f64) -> DualChannelWindow {
    let origin = WindowOrigin { source_id: "prop".into(), start_s };
    DualChannelWindow::from_channels(ff, fb, rate, origin).unwrap()
}

fn samples(n: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, n)
}

fn no_resource() -> ResourceProfile {
    nn::profile(&nn::reduced_spec(64).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalize_is_idempotent(ff in samples(32), fb in samples(32), scale in 1e-3f32..100.0) {
        let ff: Vec<f32> = ff.iter().map(|v| v * scale).collect();
        let w = window(&ff, &fb, 64, 0.0);
        let once = dsp::normalize(&w);
        let twice = dsp::normalize(&once);
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).abs() < 1e-4, "{} vs {}", a, b);
        }
        for ch in 0..2 {
            let x = once.channel(ch);
            let mean = x.iter().map(|&v| v as f64).sum::<f64>() / x.len() as f64;
            prop_assert!(mean.abs() < 1e-5);
        }
    }

    #[test]
    fn label_rule_matches_millisecond_count(
        win_ms in 0u32..20_000,
        segs in prop::collection::vec((0u32..21_000, 1u32..800, 0usize..12), 0..6),
    ) {
        let ann: Vec<AnnotatedSegment> = segs
            .iter()
            .map(|&(s, d, l)| AnnotatedSegment {
                start_s: s as f64 / 1000.0,
                end_s: (s + d) as f64 / 1000.0,
                label: EventTaxonomy::ALL[l],
            })
            .collect();
        // oracle: count whole milliseconds of the window inside each segment
        let covered = |a: &AnnotatedSegment| {
            (win_ms..win_ms + 500)
                .filter(|&ms| {
                    let t = ms as f64 / 1000.0;
                    (a.start_s * 1000.0).round() as u32 <= ms && ms < (a.end_s * 1000.0).round() as u32 && t >= 0.0
                })
                .count()
        };
        let subject = ann.iter().any(|a| a.label.is_subject_cough() && covered(a) >= 120);
        let env = ann.iter().any(|a| a.label.is_environmental_cough() && covered(a) >= 120);
        let want = if subject {
            WindowLabel::SubjectCough
        } else if env {
            WindowLabel::EnvCough
        } else {
            WindowLabel::Other
        };
        let s = win_ms as f64 / 1000.0;
        prop_assert_eq!(label_for(s, s + 0.5, &ann), want);
    }

    #[test]
    fn merging_matches_run_grouping(
        probs in prop::collection::vec(0.0f32..1.0, 0..60),
        threshold in 0.05f32..0.95,
        tol in 0usize..4,
    ) {
        // oracle: group positive indices whose spacing leaves at most `tol` negatives
        let pos: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] >= threshold).collect();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &i in &pos {
            match groups.last_mut() {
                Some(g) if i - g[g.len() - 1] - 1 <= tol => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        let want: Vec<DetectionEvent> = groups
            .iter()
            .map(|g| DetectionEvent {
                start_s: g[0] as f64 * 0.5,
                end_s: (g[g.len() - 1] + 1) as f64 * 0.5,
                mean_confidence: g.iter().map(|&i| probs[i] as f64).sum::<f64>() / g.len() as f64,
                window_count: g.len(),
            })
            .collect();
        let got = merge_probabilities(&probs, threshold, tol);
        prop_assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            prop_assert_eq!((a.start_s, a.end_s, a.window_count), (b.start_s, b.end_s, b.window_count));
            prop_assert!((a.mean_confidence - b.mean_confidence).abs() < 1e-9);
        }

        // incremental feeding with an interruption gives the same events
        let cut = probs.len() / 2;
        let mut m = EventMerger::new(threshold, tol);
        let mut inc: Vec<DetectionEvent> = Vec::new();
        for (i, &p) in probs[..cut].iter().enumerate() {
            inc.extend(m.push(i as u64, p));
        }
        let saved: EventMerger = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        let mut m = saved;
        for (i, &p) in probs.iter().enumerate().skip(cut) {
            inc.extend(m.push(i as u64, p));
        }
        inc.extend(m.flush());
        prop_assert_eq!(inc, got);
    }

    #[test]
    fn raising_threshold_never_adds_positive_windows(
        probs in prop::collection::vec(0.0f32..1.0, 0..60),
        t1 in 0.0f32..1.0,
        dt in 0.0f32..0.5,
        tol in 0usize..3,
    ) {
        let count = |t| merge_probabilities(&probs, t, tol).iter().map(|e| e.window_count).sum::<usize>();
        prop_assert!(count(t1 + dt) <= count(t1));
    }

    #[test]
    fn splits_partition_by_user(
        users in prop::collection::vec(0u32..12, 0..60),
        assign in prop::collection::vec(0u8..4, 12),
    ) {
        let mut cfg = SplitConfig { train_users: vec![], val_users: vec![], test_users: vec![] };
        for (u, &a) in assign.iter().enumerate() {
            match a {
                0 => cfg.train_users.push(u as u32),
                1 => cfg.val_users.push(u as u32),
                2 => cfg.test_users.push(u as u32),
                _ => {}
            }
        }
        let z = [0.0f32; 4];
        let windows: Vec<LabeledWindow> = users
            .iter()
            .enumerate()
            .map(|(i, &u)| LabeledWindow {
                window: window(&z, &z, 8, i as f64 * 0.5),
                label: WindowLabel::Other,
                user_id: u,
                environment: Environment::Quiet,
            })
            .collect();
        let s = split_by_user(windows.clone(), &cfg).unwrap();
        for (set, members) in [(&s.train, &cfg.train_users), (&s.val, &cfg.val_users), (&s.test, &cfg.test_users)] {
            prop_assert!(set.iter().all(|w| members.contains(&w.user_id)));
            let expect: Vec<&LabeledWindow> = windows.iter().filter(|w| members.contains(&w.user_id)).collect();
            prop_assert_eq!(set.iter().collect::<Vec<_>>(), expect);
        }
        prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), users.iter().filter(|&&u| cfg.contains(u)).count());
    }

    #[test]
    fn overlapping_split_is_rejected(u in 0u32..10) {
        let cfg = SplitConfig { train_users: vec![u], val_users: vec![], test_users: vec![u] };
        prop_assert!(split_by_user(Vec::new(), &cfg).is_err());
    }

    #[test]
    fn f1_ignores_true_negatives(
        base in prop::collection::vec((0usize..3, 0.0f32..1.0), 1..50),
        extra in 1usize..50,
    ) {
        let lab = [WindowLabel::SubjectCough, WindowLabel::EnvCough, WindowLabel::Other];
        let labels: Vec<WindowLabel> = base.iter().map(|&(l, _)| lab[l]).collect();
        let scores: Vec<f32> = base.iter().map(|&(_, p)| p).collect();
        let r0 = MetricsReport::from_scores(&labels, &scores, 0.5, no_resource());
        let mut l2 = labels.clone();
        let mut s2 = scores.clone();
        l2.extend(std::iter::repeat_n(WindowLabel::Other, extra));
        s2.extend(std::iter::repeat_n(0.1, extra));
        let r1 = MetricsReport::from_scores(&l2, &s2, 0.5, no_resource());
        prop_assert_eq!(r0.f1_1, r1.f1_1);
        prop_assert_eq!(r0.acc2, r1.acc2);
        if r0.acc1 < 1.0 {
            prop_assert!(r1.acc1 > r0.acc1);
        }
    }

    #[test]
    fn cough_only_metrics_ignore_other_windows(
        base in prop::collection::vec((0usize..2, 0.0f32..1.0), 1..40),
        others in prop::collection::vec(0.0f32..1.0, 1..40),
    ) {
        let lab = [WindowLabel::SubjectCough, WindowLabel::EnvCough];
        let labels: Vec<WindowLabel> = base.iter().map(|&(l, _)| lab[l]).collect();
        let scores: Vec<f32> = base.iter().map(|&(_, p)| p).collect();
        let r0 = MetricsReport::from_scores(&labels, &scores, 0.5, no_resource());
        let mut l2 = labels.clone();
        let mut s2 = scores.clone();
        l2.extend(std::iter::repeat_n(WindowLabel::Other, others.len()));
        s2.extend(&others);
        let r1 = MetricsReport::from_scores(&l2, &s2, 0.5, no_resource());
        prop_assert_eq!(r0.acc2, r1.acc2);
        prop_assert_eq!(r0.f1_2, r1.f1_2);
        prop_assert_eq!(r0.confusion_cough_only, r1.confusion_cough_only);
    }

    #[test]
    fn annotations_round_trip(segs in prop::collection::vec((0.0f64..1e4, 1e-6f64..100.0, 0usize..12), 0..20)) {
        let ann: Vec<AnnotatedSegment> = segs
            .iter()
            .map(|&(s, d, l)| AnnotatedSegment { start_s: s, end_s: s + d, label: EventTaxonomy::ALL[l] })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.tsv");
        synth::write_annotations(&path, &ann).unwrap();
        prop_assert_eq!(synth::read_annotations(&path).unwrap(), ann);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn model_file_round_trips_and_detects_corruption(seed in any::<u64>(), pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let spec = nn::reduced_spec(64).unwrap();
        let params = ModelParams::init(&spec, seed);
        let bytes = nn::model_to_bytes(&spec, &params).unwrap();
        let (spec2, params2) = nn::model_from_bytes(&bytes).unwrap();
        prop_assert_eq!(&spec2, &spec);
        prop_assert_eq!(params2.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        params.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>());

        let mut bad = bytes.clone();
        bad[pos.index(bytes.len())] ^= 1 << bit;
        prop_assert!(nn::model_from_bytes(&bad).is_err());

        let cut = pos.index(bytes.len());
        prop_assert!(nn::model_from_bytes(&bytes[..cut]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        prop_assert!(nn::model_from_bytes(&long).is_err());
        if cut < 4 {
            prop_assert!(matches!(nn::model_from_bytes(&bytes[..cut]), Err(NnError::TruncatedFile)));
        }
    }

    #[test]
    fn augmentation_is_a_function_of_seed_and_index(
        ff in samples(32),
        fb in samples(32),
        seed in any::<u64>(),
        index in any::<u64>(),
    ) {
        let w = window(&ff, &fb, 64, 0.0);
        let pool = vec![window(&fb, &ff, 64, 0.0)];
        let plan = AugmentPlan { seed, copies_per_clip: 2, ..AugmentPlan::default() };
        let a = plan.variants(&w, index, &pool).unwrap();
        let b = plan.variants(&w, index, &pool).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), 2);
        prop_assert!(a.iter().all(|v| v.is_normalized() && v.as_slice().iter().all(|x| x.is_finite())));

        // the batch path puts variants right after their original, independent of order
        let many = vec![w.clone(), dsp::normalize(&w), w.clone()];
        let out = augment::apply_plan(&many, &plan, &pool).unwrap();
        prop_assert_eq!(out.len(), 9);
        for (i, orig) in many.iter().enumerate() {
            prop_assert_eq!(&out[3 * i], orig);
            let v = plan.variants(orig, i as u64, &pool).unwrap();
            prop_assert_eq!(&out[3 * i + 1..3 * i + 3], v.as_slice());
        }
    }
}
