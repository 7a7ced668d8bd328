//! `ECN1` model files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ECN1"
//! 4       4     sample rate (u32)
//! 8       4     samples per channel (u32)
//! 12      4     layer count n (u32)
//! 16      20n   layer table: kind u8, relu u8, reserved u16,
//!               in, out, kernel, stride (u32 each)
//! ..      4m    m f32 values: weight then bias of each parameterized layer
//! end-4   4     CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{LayerKind, LayerSpec, ModelParams, ModelSpec, NnError, Params};

pub const MAGIC: &[u8; 4] = b"ECN1";
const HEADER: usize = 16;
const LAYER_ENTRY: usize = 20;

fn kind_code(k: LayerKind) -> u8 {
    match k {
        LayerKind::Conv2d => 1,
        LayerKind::Conv1d => 2,
        LayerKind::MaxPool => 3,
        LayerKind::GlobalAvgPool => 4,
        LayerKind::Dense => 5,
    }
}

fn kind_from(code: u8) -> Option<LayerKind> {
    Some(match code {
        1 => LayerKind::Conv2d,
        2 => LayerKind::Conv1d,
        3 => LayerKind::MaxPool,
        4 => LayerKind::GlobalAvgPool,
        5 => LayerKind::Dense,
        _ => return None,
    })
}

pub fn model_to_bytes(spec: &ModelSpec, params: &ModelParams) -> Result<Vec<u8>, NnError> {
    spec.validate_shapes()?;
    params.check(spec)?;
    let mut out = Vec::with_capacity(HEADER + LAYER_ENTRY * spec.layers.len() + 4 * params.num_params() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&spec.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(spec.input_len as u32).to_le_bytes());
    out.extend_from_slice(&(spec.layers.len() as u32).to_le_bytes());
    for l in &spec.layers {
        out.push(kind_code(l.kind));
        out.push(l.relu as u8);
        out.extend_from_slice(&[0, 0]);
        for v in [l.in_channels, l.out_channels, l.kernel, l.stride] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
    }
    for a in params.arrays() {
        for v in a {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().expect("4 bytes"))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<(ModelSpec, ModelParams), NnError> {
    if bytes.len() < MAGIC.len() {
        return Err(NnError::TruncatedFile);
    }
    if &bytes[..4] != MAGIC {
        return Err(NnError::BadMagic);
    }
    if bytes.len() < HEADER {
        return Err(NnError::TruncatedFile);
    }
    let sample_rate_hz = u32_at(bytes, 4);
    let input_len = u32_at(bytes, 8) as usize;
    let n_layers = u32_at(bytes, 12) as usize;
    let table_end = n_layers
        .checked_mul(LAYER_ENTRY)
        .and_then(|t| t.checked_add(HEADER))
        .ok_or(NnError::TruncatedFile)?;
    if bytes.len() < table_end {
        return Err(NnError::TruncatedFile);
    }
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let o = HEADER + i * LAYER_ENTRY;
        let kind = kind_from(bytes[o]).ok_or_else(|| NnError::InvalidSpec(format!("unknown layer kind {}", bytes[o])))?;
        layers.push(LayerSpec {
            kind,
            relu: bytes[o + 1] != 0,
            in_channels: u32_at(bytes, o + 4) as usize,
            out_channels: u32_at(bytes, o + 8) as usize,
            kernel: u32_at(bytes, o + 12) as usize,
            stride: u32_at(bytes, o + 16) as usize,
        });
    }
    let spec = ModelSpec { sample_rate_hz, input_len, layers };
    // the table is untrusted until the checksum passes, so its sizes may be absurd
    let expected = spec
        .layers
        .iter()
        .try_fold(0usize, |acc, l| {
            let weights = match l.kind {
                LayerKind::Conv2d | LayerKind::Conv1d => l.out_channels.checked_mul(l.in_channels)?.checked_mul(l.kernel)?,
                LayerKind::Dense => l.out_channels.checked_mul(l.in_channels)?,
                LayerKind::MaxPool | LayerKind::GlobalAvgPool => 0,
            };
            let bias = if l.kind.has_params() { l.out_channels } else { 0 };
            acc.checked_add(weights)?.checked_add(bias)
        })
        .and_then(|n| n.checked_mul(4)?.checked_add(table_end)?.checked_add(4))
        .ok_or(NnError::TruncatedFile)?;
    if bytes.len() < expected {
        return Err(NnError::TruncatedFile);
    }
    if bytes.len() > expected {
        return Err(NnError::InvalidSpec(format!("{} trailing bytes", bytes.len() - expected)));
    }
    let stored = u32_at(bytes, expected - 4);
    let computed = crc32fast::hash(&bytes[..expected - 4]);
    if stored != computed {
        return Err(NnError::CrcMismatch { stored, computed });
    }
    spec.validate_shapes()?;
    let mut params = Params::zeros(&spec);
    let mut off = table_end;
    for a in params.arrays_mut() {
        for v in a.iter_mut() {
            *v = f32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"));
            off += 4;
        }
    }
    if !params.is_finite() {
        return Err(NnError::NonFinite);
    }
    Ok((spec, params))
}

pub fn save_model(spec: &ModelSpec, params: &ModelParams, path: impl AsRef<Path>) -> Result<(), NnError> {
    let path = path.as_ref();
    let bytes = model_to_bytes(spec, params)?;
    fs::write(path, bytes).map_err(|source| NnError::Io { path: path.to_owned(), source })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelSpec, ModelParams), NnError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| NnError::Io { path: path.to_owned(), source })?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{default_spec, reduced_spec};

    fn with_crc(mut b: Vec<u8>) -> Vec<u8> {
        let n = b.len() - 4;
        let crc = crc32fast::hash(&b[..n]);
        b[n..].copy_from_slice(&crc.to_le_bytes());
        b
    }

    #[test]
    fn hostile_layer_tables_are_rejected() {
        let spec = reduced_spec(64).unwrap();
        let bytes = model_to_bytes(&spec, &ModelParams::init(&spec, 0)).unwrap();
        // dense layer claiming u32::MAX inputs and outputs
        let mut huge = bytes.clone();
        let o = 16 + 20 * (spec.layers.len() - 1);
        huge[o + 4..o + 12].copy_from_slice(&[0xff; 8]);
        assert!(matches!(model_from_bytes(&huge), Err(NnError::TruncatedFile)));
        // zero stride behind a valid checksum
        let mut zero = bytes;
        zero[16 + 16..16 + 20].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(model_from_bytes(&with_crc(zero)), Err(NnError::InvalidSpec(_))));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = default_spec(16000).unwrap();
        let p = ModelParams::init(&spec, 5);
        let bytes = model_to_bytes(&spec, &p).unwrap();
        assert_eq!(bytes.len(), 16 + 20 * 15 + 4 * 32_098 + 4);
        let (s2, p2) = model_from_bytes(&bytes).unwrap();
        assert_eq!(s2, spec);
        let bits = |p: &ModelParams| p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&p2));
    }

    #[test]
    fn corruption_is_classified() {
        let spec = reduced_spec(64).unwrap();
        let p = ModelParams::init(&spec, 1);
        let bytes = model_to_bytes(&spec, &p).unwrap();

        let mut flipped = bytes.clone();
        let i = bytes.len() - 40;
        flipped[i] ^= 0x01;
        assert!(matches!(model_from_bytes(&flipped), Err(NnError::CrcMismatch { .. })));

        assert!(matches!(model_from_bytes(&bytes[..10]), Err(NnError::TruncatedFile)));
        assert!(matches!(model_from_bytes(&bytes[..bytes.len() - 1]), Err(NnError::TruncatedFile)));
        assert!(matches!(model_from_bytes(&bytes[..2]), Err(NnError::TruncatedFile)));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(model_from_bytes(&bad), Err(NnError::BadMagic)));
    }
}
