//! STFT front-end and inverse-STFT/overlap-add back-end around the neural
//! model: 25 ms Hann-windowed frames at a 6.25 ms hop, 512-point FFT,
//! 257 magnitude/phase bins, and a streaming weighted-overlap-add
//! synthesizer with perfect reconstruction in the interior.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One model inference per hop, so the real-time deadline is
/// hop / sample_rate = 6.25 ms.
pub const REALTIME_DEADLINE_S: f64 = 100.0 / 16000.0;

/// Analysis/synthesis configuration. The defaults are the production
/// values: 16 kHz audio, 400-sample (25 ms) frames, 100-sample hop,
/// 512-point FFT, 257 bins.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub n_bins: usize,
    #[serde(skip)]
    pub window: Vec<f32>,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig::new(16000, 400, 512)
    }
}

impl StftConfig {
    pub fn new(sample_rate: u32, frame_len: usize, fft_size: usize) -> StftConfig {
        let hop = frame_len / 4;
        assert_eq!(frame_len % 4, 0, "hop must be frame_len / 4");
        assert!(fft_size >= frame_len);
        let window = periodic_hann(frame_len);
        StftConfig {
            sample_rate,
            frame_len,
            hop,
            fft_size,
            n_bins: fft_size / 2 + 1,
            window,
        }
    }

    /// Constant-overlap-add gain of the squared Hann window at 75% overlap:
    /// sum_m w^2[n - m*hop] = 1.5 for every interior sample.
    pub fn cola_gain(&self) -> f32 {
        (self.frame_len as f32 / self.hop as f32) * 0.375
    }

    /// Synthesis latency in samples of the streaming back-end.
    pub fn latency_samples(&self) -> usize {
        self.frame_len - self.hop
    }
}

fn periodic_hann(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| {
            let phase = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            (0.5 - 0.5 * phase.cos()) as f32
        })
        .collect()
}

/// Magnitudes and phases of one analysis frame.
#[derive(Clone, Debug)]
pub struct FrameFeatures {
    pub magnitudes: Vec<f32>,
    pub phases: Vec<f32>,
}

/// Forward STFT of a single frame: Hann window, zero-pad to fft_size,
/// real FFT, magnitude and phase per bin.
///
/// The FFT runs in f64 so that the round trip stays well inside the 1e-6
/// reconstruction budget after f32 storage of the features.
pub struct StftAnalyzer {
    cfg: StftConfig,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl StftAnalyzer {
    pub fn new(cfg: StftConfig) -> StftAnalyzer {
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        let buf = vec![Complex::default(); cfg.fft_size];
        StftAnalyzer { cfg, fft, buf }
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn stft_frame(&mut self, audio_window: &[f32]) -> Result<FrameFeatures> {
        if audio_window.len() != self.cfg.frame_len {
            return Err(Error::DimMismatch {
                context: "stft_frame".into(),
                expected: self.cfg.frame_len,
                actual: audio_window.len(),
            });
        }
        for (i, slot) in self.buf.iter_mut().enumerate() {
            let v = if i < self.cfg.frame_len {
                audio_window[i] as f64 * self.cfg.window[i] as f64
            } else {
                0.0
            };
            *slot = Complex::new(v, 0.0);
        }
        self.fft.process(&mut self.buf);
        let mut magnitudes = Vec::with_capacity(self.cfg.n_bins);
        let mut phases = Vec::with_capacity(self.cfg.n_bins);
        for bin in self.buf.iter().take(self.cfg.n_bins) {
            magnitudes.push(bin.norm() as f32);
            phases.push(bin.arg() as f32);
        }
        Ok(FrameFeatures { magnitudes, phases })
    }
}

/// Multiply the magnitudes by per-bin gains in [0, 1]; phases unchanged.
/// A gain outside [0, 1] indicates a pipeline bug upstream (the model's
/// output is Sigmoid-bounded) and is rejected.
pub fn apply_mask(f: &FrameFeatures, gains: &[f32]) -> Result<FrameFeatures> {
    if gains.len() != f.magnitudes.len() {
        return Err(Error::DimMismatch {
            context: "apply_mask".into(),
            expected: f.magnitudes.len(),
            actual: gains.len(),
        });
    }
    for (i, &g) in gains.iter().enumerate() {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::GainOutOfRange { index: i, value: g });
        }
    }
    Ok(FrameFeatures {
        magnitudes: f
            .magnitudes
            .iter()
            .zip(gains)
            .map(|(m, g)| m * g)
            .collect(),
        phases: f.phases.clone(),
    })
}

/// Streaming inverse STFT with Hann synthesis window and weighted
/// overlap-add. Each pushed frame emits `hop` finished samples; the
/// emission latency is `frame_len - hop` samples. The synthesizer owns an
/// overlap buffer and is single-owner; distinct streams are independent.
pub struct StreamSynthesizer {
    cfg: StftConfig,
    ifft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    overlap: Vec<f64>,
    inv_gain: f64,
}

impl StreamSynthesizer {
    pub fn new(cfg: StftConfig) -> StreamSynthesizer {
        let ifft = FftPlanner::new().plan_fft_inverse(cfg.fft_size);
        let buf = vec![Complex::default(); cfg.fft_size];
        let overlap = vec![0.0; cfg.frame_len];
        let inv_gain = 1.0 / cfg.cola_gain() as f64;
        StreamSynthesizer {
            cfg,
            ifft,
            buf,
            overlap,
            inv_gain,
        }
    }

    /// Add one frame and emit the next `hop` finished samples.
    pub fn push_frame(&mut self, f: &FrameFeatures) -> Result<Vec<f32>> {
        if f.magnitudes.len() != self.cfg.n_bins {
            return Err(Error::DimMismatch {
                context: "push_frame".into(),
                expected: self.cfg.n_bins,
                actual: f.magnitudes.len(),
            });
        }
        let n = self.cfg.fft_size;
        // Rebuild the conjugate-symmetric spectrum from bins 0..=n/2.
        for k in 0..self.cfg.n_bins {
            let (mag, ph) = (f.magnitudes[k] as f64, f.phases[k] as f64);
            self.buf[k] = Complex::from_polar(mag, ph);
        }
        for k in self.cfg.n_bins..n {
            self.buf[k] = self.buf[n - k].conj();
        }
        self.ifft.process(&mut self.buf);
        let scale = 1.0 / n as f64;
        for i in 0..self.cfg.frame_len {
            self.overlap[i] += self.buf[i].re * scale * self.cfg.window[i] as f64;
        }
        Ok(self.emit())
    }

    fn emit(&mut self) -> Vec<f32> {
        let hop = self.cfg.hop;
        let out = self.overlap[..hop]
            .iter()
            .map(|&v| (v * self.inv_gain) as f32)
            .collect();
        self.overlap.copy_within(hop.., 0);
        let tail = self.overlap.len() - hop;
        self.overlap[tail..].fill(0.0);
        out
    }

    /// Drain the remaining `frame_len - hop` samples at end of stream.
    pub fn finish(mut self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.cfg.latency_samples());
        let hops = self.cfg.frame_len / self.cfg.hop - 1;
        for _ in 0..hops {
            out.extend(self.emit());
        }
        out
    }
}

/// Split a signal into analysis windows at hop spacing, zero-padding the
/// final partial frame.
pub fn frames(signal: &[f32], cfg: &StftConfig) -> Vec<Vec<f32>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < signal.len() {
        let end = (start + cfg.frame_len).min(signal.len());
        let mut frame = signal[start..end].to_vec();
        frame.resize(cfg.frame_len, 0.0);
        out.push(frame);
        start += cfg.hop;
    }
    out
}
