//! RIFF/WAVE reading and writing for dual-channel recordings.
//!
//! Channel 0 in the file is the feed-forward microphone, channel 1 the
//! feedback microphone. 16-bit integer samples map to `[-1, 1)` by division
//! by 32768; 32-bit IEEE float samples are taken as-is.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{DspError, DualChannelRecording};
use crate::SUPPORTED_RATES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

fn io_err(path: &Path, source: std::io::Error) -> DspError {
    DspError::Io {
        path: path.to_owned(),
        source,
    }
}

fn map_hound(path: &Path, e: hound::Error) -> DspError {
    match e {
        hound::Error::IoError(io) => io_err(path, io),
        hound::Error::Unsupported => DspError::UnsupportedEncoding("unsupported WAV variant".into()),
        other => DspError::MalformedHeader(other.to_string()),
    }
}

pub fn load_recording(path: impl AsRef<Path>) -> Result<DualChannelRecording, DspError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = WavReader::new(std::io::BufReader::new(file)).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 2 {
        return Err(DspError::NotStereo(spec.channels));
    }
    if !SUPPORTED_RATES.contains(&spec.sample_rate) {
        return Err(DspError::UnsupportedRate(spec.sample_rate));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(DspError::UnsupportedEncoding(format!(
                "{bits}-bit {fmt:?}"
            )))
        }
    };
    if !interleaved.len().is_multiple_of(2) {
        return Err(DspError::MalformedHeader("odd sample count in data chunk".into()));
    }
    let frames = interleaved.len() / 2;
    let mut ff = Vec::with_capacity(frames);
    let mut fb = Vec::with_capacity(frames);
    for pair in interleaved.chunks_exact(2) {
        ff.push(pair[0]);
        fb.push(pair[1]);
    }
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    DualChannelRecording::new(ff, fb, spec.sample_rate, source_id)
}

/// Writes a recording as a 2-channel WAV. 16-bit output rounds to the
/// nearest step and saturates at full scale.
pub fn write_recording(
    rec: &DualChannelRecording,
    path: impl AsRef<Path>,
    encoding: WavEncoding,
) -> Result<(), DspError> {
    let path = path.as_ref();
    let (bits, fmt) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 2,
        sample_rate: rec.sample_rate_hz(),
        bits_per_sample: bits,
        sample_format: fmt,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for (&a, &b) in rec.ff().iter().zip(rec.fb()) {
        match encoding {
            WavEncoding::Pcm16 => {
                w.write_sample(quantize16(a)).map_err(|e| map_hound(path, e))?;
                w.write_sample(quantize16(b)).map_err(|e| map_hound(path, e))?;
            }
            WavEncoding::Float32 => {
                w.write_sample(a).map_err(|e| map_hound(path, e))?;
                w.write_sample(b).map_err(|e| map_hound(path, e))?;
            }
        }
    }
    w.finalize().map_err(|e| map_hound(path, e))
}

fn quantize16(x: f32) -> i16 {
    (x as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, channels: u16, rate: u32, frames: usize, value: i16) {
        let spec = WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for _ in 0..frames * channels as usize {
            w.write_sample(value).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn stereo_16bit_loads_with_both_channels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw(&p, 2, 48000, 1234, 100);
        let rec = load_recording(&p).unwrap();
        assert_eq!(rec.len(), 1234);
        assert_eq!(rec.fb().len(), 1234);
        assert_eq!(rec.sample_rate_hz(), 48000);
        assert_eq!(rec.source_id(), "a");
    }

    #[test]
    fn full_scale_negative_maps_to_minus_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("neg.wav");
        write_raw(&p, 2, 8000, 50, i16::MIN);
        let rec = load_recording(&p).unwrap();
        let expected = -32768.0f32 / 32768.0;
        assert!(rec.ff().iter().chain(rec.fb()).all(|&s| s == expected));
        assert_eq!(expected, -1.0);
    }

    #[test]
    fn rejects_mono_rate_and_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let mono = dir.path().join("mono.wav");
        write_raw(&mono, 1, 48000, 10, 0);
        assert!(matches!(load_recording(&mono), Err(DspError::NotStereo(1))));

        let odd_rate = dir.path().join("rate.wav");
        write_raw(&odd_rate, 2, 44100, 10, 0);
        assert!(matches!(
            load_recording(&odd_rate),
            Err(DspError::UnsupportedRate(44100))
        ));

        let p24 = dir.path().join("24.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 48000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p24, spec).unwrap();
        for _ in 0..20 {
            w.write_sample(0i32).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(
            load_recording(&p24),
            Err(DspError::UnsupportedEncoding(_))
        ));
    }

    #[test]
    fn garbage_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.wav");
        std::fs::write(&p, b"RIFF\x10\x00\x00\x00JUNKJUNKJUNK").unwrap();
        assert!(matches!(
            load_recording(&p),
            Err(DspError::MalformedHeader(_))
        ));
    }

    #[test]
    fn float_round_trip_is_exact_and_pcm16_is_close() {
        let dir = tempfile::tempdir().unwrap();
        let ff: Vec<f32> = (0..800).map(|i| (i as f32 * 0.05).sin() * 0.8).collect();
        let fb: Vec<f32> = (0..800).map(|i| (i as f32 * 0.03).cos() * 0.3).collect();
        let rec = DualChannelRecording::new(ff, fb, 16000, "rt").unwrap();
        let pf = dir.path().join("rt.wav");
        write_recording(&rec, &pf, WavEncoding::Float32).unwrap();
        assert_eq!(load_recording(&pf).unwrap(), rec);
        write_recording(&rec, &pf, WavEncoding::Pcm16).unwrap();
        let back = load_recording(&pf).unwrap();
        for (a, b) in back.ff().iter().zip(rec.ff()) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-7);
        }
    }
}
