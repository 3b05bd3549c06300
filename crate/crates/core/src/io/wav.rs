//! Multichannel WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Writes channels as one interleaved 32-bit float file.
pub fn write_wav(path: &Path, channels: &[Vec<f64>], sample_rate: f64) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::Argument("no channels to write".into()));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::Argument("channels differ in length".into()));
    }
    let rate = sample_rate.round();
    if !(rate >= 1.0 && rate <= u32::MAX as f64) || (rate - sample_rate).abs() > 1e-9 {
        return Err(Error::Argument(format!("sample rate {sample_rate} is not a positive integer")));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: rate as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for n in 0..len {
        for c in channels {
            w.write_sample(c[n] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}

/// Reads a 16-bit PCM or 32-bit float file; returns channels and sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<Vec<f64>>, f64)> {
    let mut r = WavReader::open(path)?;
    let spec = r.spec();
    let n_ch = spec.channels as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => r.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, 16) => r
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (f, b) => return Err(Error::Argument(format!("unsupported WAV format {f:?} {b}-bit"))),
    };
    let frames = samples.len() / n_ch;
    let channels = (0..n_ch)
        .map(|c| (0..frames).map(|n| samples[n * n_ch + c]).collect())
        .collect();
    Ok((channels, spec.sample_rate as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let chans = vec![vec![0.5, -0.25, 0.125], vec![1.0, 0.0, -1.0]];
        write_wav(&p, &chans, 8000.0).unwrap();
        let (back, fs) = read_wav(&p).unwrap();
        assert_eq!(fs, 8000.0);
        assert_eq!(back, chans);
        assert!(write_wav(&p, &chans, 8000.5).is_err());
    }

    #[test]
    fn reads_pcm16() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(16384i16).unwrap();
        w.write_sample(-32768i16).unwrap();
        w.finalize().unwrap();
        let (back, _) = read_wav(&p).unwrap();
        assert_eq!(back, vec![vec![0.5, -1.0]]);
    }
}
