use serde::{Deserialize, Serialize};

use super::{LayerKind, ModelSpec};

/// Per-layer accounting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub kind: LayerKind,
    pub out_channels: usize,
    pub out_len: usize,
    pub params: usize,
    pub macs: u64,
}

/// Compute and storage cost of one single-window inference.
///
/// `flops` counts two per multiply-accumulate in convolution and dense
/// layers; pooling, rectifiers and softmax are free. Storage assumes 32-bit
/// values and a double-buffered executor that holds the input plus the two
/// largest consecutive layer outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceProfile {
    pub sample_rate_hz: u32,
    pub flops: u64,
    pub params: usize,
    pub param_bytes: u64,
    pub input_bytes: u64,
    pub peak_activation_bytes: u64,
    pub space_bytes: u64,
    pub layers: Vec<LayerProfile>,
}

const BYTES: u64 = 4;

pub fn profile(spec: &ModelSpec) -> ResourceProfile {
    let shapes = spec.shapes();
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (l, &(c, n)) in spec.layers.iter().zip(&shapes[1..]) {
        let macs = match l.kind {
            LayerKind::Conv2d | LayerKind::Conv1d => (c * n * l.in_channels * l.kernel) as u64,
            LayerKind::Dense => (l.in_channels * l.out_channels) as u64,
            LayerKind::MaxPool | LayerKind::GlobalAvgPool => 0,
        };
        layers.push(LayerProfile {
            kind: l.kind,
            out_channels: c,
            out_len: n,
            params: l.weight_len() + l.bias_len(),
            macs,
        });
    }
    let params = spec.num_params();
    let flops = 2 * layers.iter().map(|l| l.macs).sum::<u64>();
    let param_bytes = params as u64 * BYTES;
    let input_bytes = spec.input_values() as u64 * BYTES;
    let outs: Vec<u64> = shapes[1..].iter().map(|(c, n)| (c * n) as u64 * BYTES).collect();
    let pair = outs.windows(2).map(|w| w[0] + w[1]).max().unwrap_or_else(|| outs.iter().sum());
    let peak_activation_bytes = input_bytes + pair;
    ResourceProfile {
        sample_rate_hz: spec.sample_rate_hz,
        flops,
        params,
        param_bytes,
        input_bytes,
        peak_activation_bytes,
        space_bytes: param_bytes + peak_activation_bytes,
        layers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{default_spec, LayerSpec};

    #[test]
    fn lone_dense_layer() {
        let spec = ModelSpec {
            sample_rate_hz: 64,
            input_len: 32,
            layers: vec![LayerSpec::dense(64, 32, false)],
        };
        assert_eq!(profile(&spec).flops, 4096);
    }

    #[test]
    fn space_at_8k() {
        let p = profile(&default_spec(8000).unwrap());
        assert_eq!(p.param_bytes, 128_392);
        assert_eq!(p.space_bytes, 352_392);
        assert!(p.space_bytes >= p.param_bytes);
    }
}
