//! Backpropagation against central finite differences, and the forward pass
//! against a direct loop-by-definition evaluation.

mod common;

use common::{assert_grad_ok, layer_cases};
use earcough::nn::{self, LayerKind, LayerSpec, ModelSpec, Params, Workspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn every_layer_type_and_the_reduced_model() {
    for (name, spec) in layer_cases() {
        assert_grad_ok(name, &spec);
    }
}

#[test]
fn zero_parameter_symmetry_point() {
    let spec = nn::reduced_spec(64).unwrap();
    let params = Params::<f64>::zeros(&spec);
    let x: Vec<f64> = (0..128).map(|i| (i as f64 * 0.3).sin()).collect();
    for label in 0..2 {
        let mut ws = Workspace::<f64>::new(&spec);
        let mut g = Params::<f64>::zeros(&spec);
        let loss = ws.backward(&spec, &params, &x, label, 1.0, &mut g).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        let last = &g.layers.last().unwrap().bias;
        let sign = if label == 0 { -1.0 } else { 1.0 };
        assert_eq!(last, &vec![0.5 * sign, -0.5 * sign]);
    }
}

// Forward oracle: every layer written straight from its definition.

fn naive_forward(spec: &ModelSpec, p: &Params<f64>, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    let mut ch = 2usize;
    let mut len = spec.input_len;
    for (l, lp) in spec.layers.iter().zip(&p.layers) {
        let (next, nch, nlen) = match l.kind {
            LayerKind::Conv2d | LayerKind::Conv1d => {
                let out_len = len.div_ceil(l.stride);
                let total_pad = ((out_len - 1) * l.stride + l.kernel).saturating_sub(len);
                let left = (total_pad / 2) as i64;
                let mut y = vec![0.0; l.out_channels * out_len];
                for o in 0..l.out_channels {
                    for t in 0..out_len {
                        let mut acc = lp.bias[o];
                        for c in 0..ch {
                            for j in 0..l.kernel {
                                let q = (t * l.stride) as i64 + j as i64 - left;
                                if q >= 0 && (q as usize) < len {
                                    acc += lp.weight[(o * ch + c) * l.kernel + j] * cur[c * len + q as usize];
                                }
                            }
                        }
                        y[o * out_len + t] = acc;
                    }
                }
                (y, l.out_channels, out_len)
            }
            LayerKind::MaxPool => {
                let out_len = len / l.kernel;
                let mut y = vec![f64::NEG_INFINITY; ch * out_len];
                for c in 0..ch {
                    for t in 0..out_len {
                        for j in 0..l.kernel {
                            y[c * out_len + t] = y[c * out_len + t].max(cur[c * len + t * l.kernel + j]);
                        }
                    }
                }
                (y, ch, out_len)
            }
            LayerKind::GlobalAvgPool => {
                let y = (0..ch).map(|c| cur[c * len..(c + 1) * len].iter().sum::<f64>() / len as f64).collect();
                (y, ch, 1)
            }
            LayerKind::Dense => {
                let n = cur.len();
                let y = (0..l.out_channels)
                    .map(|o| lp.bias[o] + (0..n).map(|i| lp.weight[o * n + i] * cur[i]).sum::<f64>())
                    .collect();
                (y, l.out_channels, 1)
            }
        };
        cur = next;
        if l.relu {
            cur.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        ch = nch;
        len = nlen;
    }
    let m = cur.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = cur.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[test]
fn forward_matches_definition() {
    for (spec, seeds) in [(nn::reduced_spec(64).unwrap(), 0..5u64), (nn::default_spec(8000).unwrap(), 0..2u64)] {
        for seed in seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut p = Params::<f64>::init(&spec, seed);
            for a in p.arrays_mut() {
                a.iter_mut().for_each(|v| *v += rng.gen_range(-0.05..0.05));
            }
            let x: Vec<f64> = (0..spec.input_values()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let want = naive_forward(&spec, &p, &x);
            let got = Workspace::<f64>::new(&spec).forward(&spec, &p, &x).unwrap().to_vec();
            for (a, b) in want.iter().zip(&got) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn translation_by_one_pool_period() {
    // first block of the reference topology: stride 2 then pool 4, so an
    // 8-sample input shift moves the pooled output by one step
    let layers = vec![LayerSpec::conv2d(2, 4, 9, 2), LayerSpec::conv1d(4, 4, 9), LayerSpec::max_pool(4, 4)];
    let spec = ModelSpec { sample_rate_hz: 512, input_len: 256, layers };
    spec.validate_shapes().unwrap();
    let p = Params::<f32>::init(&spec, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f32> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut shifted = vec![0.0f32; 512];
    for c in 0..2 {
        for t in 8..256 {
            shifted[c * 256 + t] = x[c * 256 + t - 8];
        }
    }
    let mut ws = Workspace::<f32>::new(&spec);
    ws.forward(&spec, &p, &x).unwrap_or(&[]);
    let a = ws.activation(3).to_vec();
    ws.forward(&spec, &p, &shifted).unwrap_or(&[]);
    let b = ws.activation(3).to_vec();
    let n = 32;
    for c in 0..4 {
        // interior, clear of both padded edges
        for t in 3..n - 4 {
            assert_eq!(a[c * n + t], b[c * n + t + 1], "channel {c} step {t}");
        }
    }
}
