//! WAV input and output.
//!
//! Reads 16-bit integer or 32-bit float PCM, averaging channels down to mono.
//! Writes mono 32-bit float, so any waveform whose samples are exactly
//! representable as `f32` survives a write/read round trip unchanged.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32_768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("unsupported sample format {fmt:?} at {bits} bits"),
            })
        }
    };
    let mono: Vec<f64> = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(mono, spec.sample_rate).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in w.samples() {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact_for_f32_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let samples: Vec<f64> = (0..500).map(|i| ((i as f32) * 0.001).sin() as f64).collect();
        let w = Waveform::new(samples, 22_050).unwrap();
        write_wav(&path, &w).unwrap();
        assert_eq!(read_wav(&path).unwrap(), w);
    }

    #[test]
    fn stereo_int16_is_downmixed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut wr = WavWriter::create(&path, spec).unwrap();
        for (l, r) in [(16_384i16, 0i16), (-8192, 8192)] {
            wr.write_sample(l).unwrap();
            wr.write_sample(r).unwrap();
        }
        wr.finalize().unwrap();
        let w = read_wav(&path).unwrap();
        assert_eq!(w.samples(), &[0.25, 0.0]);
        assert_eq!(w.sample_rate_hz(), 8000);
    }
}
