use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Kernel `in_channels x kernel` over a 2-row input; equivalent to a 1-D
    /// convolution with `in_channels` input channels.
    Conv2d,
    Conv1d,
    MaxPool,
    GlobalAvgPool,
    Dense,
}

impl LayerKind {
    pub fn has_params(self) -> bool {
        matches!(self, Self::Conv2d | Self::Conv1d | Self::Dense)
    }

    pub fn is_conv(self) -> bool {
        matches!(self, Self::Conv2d | Self::Conv1d)
    }
}

/// One layer. For pooling, `kernel` is the pool width and the channel
/// counts are equal. For dense layers the channel counts are feature counts
/// and `kernel`/`stride` are 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub relu: bool,
}

impl LayerSpec {
    pub fn conv2d(in_rows: usize, out: usize, kernel: usize, stride: usize) -> Self {
        Self { kind: LayerKind::Conv2d, in_channels: in_rows, out_channels: out, kernel, stride, relu: true }
    }

    pub fn conv1d(inp: usize, out: usize, kernel: usize) -> Self {
        Self { kind: LayerKind::Conv1d, in_channels: inp, out_channels: out, kernel, stride: 1, relu: true }
    }

    pub fn max_pool(channels: usize, width: usize) -> Self {
        Self { kind: LayerKind::MaxPool, in_channels: channels, out_channels: channels, kernel: width, stride: width, relu: false }
    }

    pub fn global_avg_pool(channels: usize) -> Self {
        Self { kind: LayerKind::GlobalAvgPool, in_channels: channels, out_channels: channels, kernel: 1, stride: 1, relu: false }
    }

    pub fn dense(inp: usize, out: usize, relu: bool) -> Self {
        Self { kind: LayerKind::Dense, in_channels: inp, out_channels: out, kernel: 1, stride: 1, relu }
    }

    pub fn weight_len(&self) -> usize {
        match self.kind {
            LayerKind::Conv2d | LayerKind::Conv1d => self.out_channels * self.in_channels * self.kernel,
            LayerKind::Dense => self.out_channels * self.in_channels,
            _ => 0,
        }
    }

    pub fn bias_len(&self) -> usize {
        if self.kind.has_params() {
            self.out_channels
        } else {
            0
        }
    }

    /// Output length for an input of `len` samples per channel.
    pub fn out_len(&self, len: usize) -> usize {
        match self.kind {
            LayerKind::Conv2d | LayerKind::Conv1d => len.div_ceil(self.stride),
            LayerKind::MaxPool => len / self.kernel,
            LayerKind::GlobalAvgPool | LayerKind::Dense => 1,
        }
    }

    /// Left zero-padding of a "same" convolution.
    pub(crate) fn pad_left(&self, len: usize) -> usize {
        let out = self.out_len(len);
        ((out - 1) * self.stride + self.kernel).saturating_sub(len) / 2
    }
}

/// Channel widths and kernel sizes of the reference topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub kernel: usize,
    pub first_stride: usize,
    pub block_channels: [usize; 4],
    pub pool_width: usize,
    pub fc_hidden: [usize; 2],
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { kernel: 9, first_stride: 2, block_channels: [12, 16, 24, 32], pool_width: 4, fc_hidden: [32, 16] }
    }
}

/// A network topology for one input rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub sample_rate_hz: u32,
    /// Samples per channel.
    pub input_len: usize,
    pub layers: Vec<LayerSpec>,
}

/// Reference topology for one of the supported rates.
pub fn default_spec(sample_rate_hz: u32) -> Result<ModelSpec, NnError> {
    if !crate::SUPPORTED_RATES.contains(&sample_rate_hz) {
        return Err(NnError::UnsupportedRate(sample_rate_hz));
    }
    ModelSpec::from_arch(sample_rate_hz, crate::dsp::window_len(sample_rate_hz), &ArchConfig::default())
}

/// A small network with the reference block structure for `input_len`
/// samples per channel (nominal rate `2 * input_len`). Used for gradient
/// checks and toy problems.
pub fn reduced_spec(input_len: usize) -> Result<ModelSpec, NnError> {
    let arch = ArchConfig { kernel: 5, first_stride: 2, block_channels: [4, 6, 6, 8], pool_width: 2, fc_hidden: [8, 6] };
    ModelSpec::from_arch(2 * input_len as u32, input_len, &arch)
}

impl ModelSpec {
    pub fn from_arch(sample_rate_hz: u32, input_len: usize, a: &ArchConfig) -> Result<Self, NnError> {
        let [c1, c2, c3, c4] = a.block_channels;
        let [h1, h2] = a.fc_hidden;
        let layers = vec![
            LayerSpec::conv2d(2, c1, a.kernel, a.first_stride),
            LayerSpec::conv1d(c1, c1, a.kernel),
            LayerSpec::max_pool(c1, a.pool_width),
            LayerSpec::conv1d(c1, c2, a.kernel),
            LayerSpec::conv1d(c2, c2, a.kernel),
            LayerSpec::max_pool(c2, a.pool_width),
            LayerSpec::conv1d(c2, c3, a.kernel),
            LayerSpec::conv1d(c3, c3, a.kernel),
            LayerSpec::max_pool(c3, a.pool_width),
            LayerSpec::conv1d(c3, c4, a.kernel),
            LayerSpec::conv1d(c4, c4, a.kernel),
            LayerSpec::global_avg_pool(c4),
            LayerSpec::dense(c4, h1, true),
            LayerSpec::dense(h1, h2, true),
            LayerSpec::dense(h2, 2, false),
        ];
        let spec = Self { sample_rate_hz, input_len, layers };
        spec.validate()?;
        Ok(spec)
    }

    /// `(channels, length)` of the input and of every layer output.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = (2usize, self.input_len);
        out.push(cur);
        for l in &self.layers {
            cur = (l.out_channels, l.out_len(cur.1));
            out.push(cur);
        }
        out
    }

    pub fn input_values(&self) -> usize {
        2 * self.input_len
    }

    pub fn output_len(&self) -> usize {
        let (c, l) = *self.shapes().last().expect("input shape");
        c * l
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight_len() + l.bias_len()).sum()
    }

    /// Checks that consecutive layers fit together and every tensor is
    /// non-empty. Any layer sequence that passes can be run by the engine.
    pub fn validate_shapes(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidSpec(m));
        if self.input_len == 0 {
            return bad("empty input".into());
        }
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        let mut ch = 2usize;
        let mut len = self.input_len;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_channels == 0 || l.out_channels == 0 || l.kernel == 0 || l.stride == 0 {
                return bad(format!("layer {i} has a zero dimension"));
            }
            let expect_in = if l.kind == LayerKind::Dense { ch * len } else { ch };
            if l.in_channels != expect_in {
                return bad(format!("layer {i} expects {} inputs, previous layer gives {expect_in}", l.in_channels));
            }
            match l.kind {
                LayerKind::MaxPool | LayerKind::GlobalAvgPool if l.in_channels != l.out_channels => {
                    return bad(format!("pooling layer {i} changes the channel count"));
                }
                LayerKind::MaxPool if l.stride != l.kernel => {
                    return bad(format!("pooling layer {i} must have stride equal to width"));
                }
                _ => {}
            }
            len = l.out_len(len);
            ch = l.out_channels;
            if len == 0 {
                return bad(format!("layer {i} output is empty"));
            }
        }
        Ok(())
    }

    /// Full structural check: four convolution blocks, then three dense
    /// layers ending in a two-way read-out; the first layer is the only
    /// 2-D convolution and spans both input rows.
    pub fn validate(&self) -> Result<(), NnError> {
        use LayerKind::*;
        self.validate_shapes()?;
        let pattern = [
            Conv2d, Conv1d, MaxPool, Conv1d, Conv1d, MaxPool, Conv1d, Conv1d, MaxPool, Conv1d, Conv1d, GlobalAvgPool,
            Dense, Dense, Dense,
        ];
        let kinds: Vec<LayerKind> = self.layers.iter().map(|l| l.kind).collect();
        if kinds != pattern {
            return Err(NnError::InvalidSpec("layer sequence is not 4 conv blocks + 3 dense".into()));
        }
        if self.layers[0].in_channels != 2 {
            return Err(NnError::InvalidSpec("first convolution must span both channels".into()));
        }
        let last = self.layers.last().expect("non-empty");
        if last.out_channels != 2 || last.relu {
            return Err(NnError::InvalidSpec("read-out must be 2 linear outputs".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let want = l.kind.has_params() && i + 1 != self.layers.len();
            if l.relu != want {
                return Err(NnError::InvalidSpec(format!("layer {i}: rectifier placement")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_shapes_at_8k() {
        let s = default_spec(8000).unwrap();
        let shapes = s.shapes();
        assert_eq!(shapes[0], (2, 4000));
        assert_eq!(shapes[1], (12, 2000));
        assert_eq!(shapes[3], (12, 500));
        assert_eq!(shapes[6], (16, 125));
        assert_eq!(shapes[9], (24, 31));
        assert_eq!(shapes[12], (32, 1));
        assert_eq!(*shapes.last().unwrap(), (2, 1));
        assert_eq!(s.num_params(), 32_098);
    }

    #[test]
    fn same_padding_offsets() {
        let l = LayerSpec::conv2d(2, 4, 9, 2);
        assert_eq!(l.out_len(4000), 2000);
        assert_eq!(l.pad_left(4000), 3);
        assert_eq!(LayerSpec::conv1d(4, 4, 9).pad_left(100), 4);
    }

    #[test]
    fn rejects_unsupported_rates_and_broken_topologies() {
        assert!(matches!(default_spec(11025), Err(NnError::UnsupportedRate(11025))));
        let mut s = default_spec(8000).unwrap();
        s.layers.swap(0, 1);
        assert!(s.validate().is_err());
        let mut s = default_spec(8000).unwrap();
        s.layers[14].out_channels = 3;
        assert!(s.validate().is_err());
        assert!(reduced_spec(64).is_ok());
        assert!(reduced_spec(8).is_err());
    }
}
