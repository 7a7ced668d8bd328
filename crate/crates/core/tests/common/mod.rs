//! Shared by the test targets.
#![allow(dead_code)]

use earcough::nn::{self, LayerKind, LayerSpec, ModelSpec, Params, Workspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-3;
const EPS_NARROW: f64 = 1e-6;
pub const TOL: f64 = 1e-4;
/// Relative error is `|a - n| / max(|a|, |n|, FLOOR)`; below the floor the
/// difference is judged on an absolute scale.
const FLOOR: f64 = 1e-3;

/// Everything that makes the loss piecewise: rectifier on/off pattern and
/// pooling winners.
fn kink_signature(ws: &Workspace<f64>, spec: &ModelSpec) -> (Vec<bool>, Vec<u32>) {
    let mut on = Vec::new();
    let mut arg = Vec::new();
    for (i, l) in spec.layers.iter().enumerate() {
        if l.relu {
            on.extend(ws.activation(i + 1).iter().map(|&v| v > 0.0));
        }
        if l.kind == LayerKind::MaxPool {
            arg.extend_from_slice(ws.pool_argmax(i));
        }
    }
    (on, arg)
}

pub struct Report {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
}

pub fn check(spec: &ModelSpec, seed: u64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::<f64>::init(spec, seed);
    for a in params.arrays_mut() {
        for v in a.iter_mut() {
            // non-zero biases so rectifiers sit away from their kink
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    let x: Vec<f64> = (0..spec.input_values()).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let label = rng.gen_range(0..2);

    let mut ws = Workspace::<f64>::new(spec);
    let mut grads = Params::<f64>::zeros(spec);
    ws.backward(spec, &params, &x, label, 1.0, &mut grads).unwrap();
    let analytic = grads.to_flat();
    let base_sig = kink_signature(&ws, spec);

    let mut flat = params.to_flat();
    let mut rep = Report { max_rel: 0.0, checked: 0, skipped: 0 };
    let loss_at = |flat: &[f64], ws: &mut Workspace<f64>| {
        let mut p = params.clone();
        p.set_flat(flat);
        let probs = ws.forward(spec, &p, &x).unwrap();
        (-probs[label].ln(), kink_signature(ws, spec))
    };
    for i in 0..flat.len() {
        let orig = flat[i];
        // a kink inside the wide step gets a second try with a narrow one
        let mut numeric = None;
        for eps in [EPS, EPS_NARROW] {
            flat[i] = orig + eps;
            let (lp, sp) = loss_at(&flat, &mut ws);
            flat[i] = orig - eps;
            let (lm, sm) = loss_at(&flat, &mut ws);
            flat[i] = orig;
            if sp == base_sig && sm == base_sig {
                numeric = Some((lp - lm) / (2.0 * eps));
                break;
            }
        }
        let Some(numeric) = numeric else {
            rep.skipped += 1;
            continue;
        };
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
        rep.max_rel = rep.max_rel.max(rel);
        rep.checked += 1;
    }
    rep
}

pub fn assert_grad_ok(name: &str, spec: &ModelSpec) {
    for seed in 0..10 {
        let r = check(spec, seed);
        let total = r.checked + r.skipped;
        assert!(r.max_rel < TOL, "{name} seed {seed}: max relative error {:.3e}", r.max_rel);
        println!("{name} seed {seed}: checked {} skipped {} max rel {:.2e}", r.checked, r.skipped, r.max_rel);
        assert!(r.skipped * 50 <= total, "{name} seed {seed}: {} of {total} coordinates crossed a kink", r.skipped);
    }
}

pub fn tiny(layers: Vec<LayerSpec>, input_len: usize) -> ModelSpec {
    let s = ModelSpec { sample_rate_hz: 2 * input_len as u32, input_len, layers };
    s.validate_shapes().unwrap();
    s
}

/// One small network per layer type, each ending in the softmax read-out,
/// plus the full reduced model.
pub fn layer_cases() -> Vec<(&'static str, ModelSpec)> {
    let linear = |mut l: LayerSpec| {
        l.relu = false;
        l
    };
    vec![
        ("softmax", tiny(vec![LayerSpec::dense(32, 2, false)], 16)),
        ("dense", tiny(vec![LayerSpec::dense(32, 6, true), LayerSpec::dense(6, 2, false)], 16)),
        ("conv2d", tiny(vec![LayerSpec::conv2d(2, 3, 5, 2), LayerSpec::dense(3 * 8, 2, false)], 16)),
        ("conv1d", tiny(vec![LayerSpec::conv1d(2, 3, 5), LayerSpec::dense(3 * 16, 2, false)], 16)),
        (
            "maxpool",
            tiny(vec![linear(LayerSpec::conv1d(2, 3, 3)), LayerSpec::max_pool(3, 4), LayerSpec::dense(3 * 4, 2, false)], 16),
        ),
        (
            "gap",
            tiny(vec![linear(LayerSpec::conv1d(2, 4, 3)), LayerSpec::global_avg_pool(4), LayerSpec::dense(4, 2, false)], 16),
        ),
        ("reduced model", nn::reduced_spec(64).expect("reduced spec")),
    ]
}
