//! 16-bit PCM mono WAV input/output at 16 kHz. Anything else is rejected
//! with a clear error rather than resampled.

use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16000;

/// Read a mono 16-bit 16 kHz WAV into [-1, 1] samples.
pub fn read_mono_16k(path: &Path) -> Result<Vec<f32>> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::WavFormat(format!(
            "{}: expected mono, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::WavFormat(format!(
            "{}: expected {} Hz, got {} Hz",
            path.display(),
            SAMPLE_RATE,
            spec.sample_rate
        )));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::WavFormat(format!(
            "{}: expected 16-bit integer PCM, got {}-bit {:?}",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let mut out = Vec::new();
    for s in reader.into_samples::<i16>() {
        out.push(s? as f32 / 32768.0);
    }
    Ok(out)
}

/// Write [-1, 1] samples as mono 16-bit 16 kHz PCM, saturating out-of-range
/// values.
pub fn write_mono_16k(path: &Path, samples: &[f32]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        let v = (s * 32768.0).round_ties_even().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_quantized_samples() {
        let dir = std::env::temp_dir().join("tdk_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.wav");
        let samples: Vec<f32> = (0..1600)
            .map(|i| ((i as f32 / 50.0).sin() * 0.5 * 32768.0).round() / 32768.0)
            .collect();
        write_mono_16k(&path, &samples).unwrap();
        let back = read_mono_16k(&path).unwrap();
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            assert!((a - b).abs() < 1.0 / 32768.0);
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn rejects_wrong_rate() {
        let dir = std::env::temp_dir().join("tdk_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rate.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_mono_16k(&path), Err(Error::WavFormat(_))));
        std::fs::remove_file(&path).ok();
    }
}
