//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frames start at `k · hop − (frame_len − hop)` so every input sample sees the
//! same steady-state window overlap. Synthesis divides by the summed squared
//! window, which gives perfect reconstruction whenever that sum is positive.

use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, CMat, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hann,
    Rectangular,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: Window,
    pub sample_rate: f64,
}

impl StftConfig {
    pub fn new(frame_len: usize, hop: usize, fft_size: usize, window: Window, sample_rate: f64) -> Result<Self> {
        let cfg = Self {
            frame_len,
            hop,
            fft_size,
            window,
            sample_rate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.hop && self.hop <= self.frame_len && self.frame_len <= self.fft_size) {
            return Err(Error::Argument(format!(
                "need 0 < hop ({}) <= frame_len ({}) <= fft_size ({})",
                self.hop, self.frame_len, self.fft_size
            )));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Argument(format!("sample rate must be positive, got {}", self.sample_rate)));
        }
        Ok(())
    }

    /// Frames of `frame_ms` milliseconds with the given fractional overlap and a
    /// power-of-two FFT size.
    pub fn from_durations(sample_rate: f64, frame_ms: f64, overlap: f64, window: Window) -> Result<Self> {
        let frame_len = (sample_rate * frame_ms / 1000.0).round() as usize;
        let hop = ((frame_len as f64) * (1.0 - overlap)).round().max(1.0) as usize;
        Self::new(frame_len, hop, frame_len.max(1).next_power_of_two(), window, sample_rate)
    }

    /// 256 ms Hann frames with 25% overlap.
    pub fn pipeline_default(sample_rate: f64) -> Result<Self> {
        Self::from_durations(sample_rate, 256.0, 0.25, Window::Hann)
    }

    /// 128 ms Hann frames with 50% overlap.
    pub fn orthogonality_default(sample_rate: f64) -> Result<Self> {
        Self::from_durations(sample_rate, 128.0, 0.5, Window::Hann)
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn bin_freq(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.fft_size as f64
    }

    pub fn bin_freqs(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|k| self.bin_freq(k)).collect()
    }

    /// Index of the bin nearest to `freq_hz`.
    pub fn nearest_bin(&self, freq_hz: f64) -> usize {
        let k = (freq_hz * self.fft_size as f64 / self.sample_rate).round();
        (k.max(0.0) as usize).min(self.n_bins() - 1)
    }

    /// Periodic analysis window of `frame_len` samples.
    pub fn window_samples(&self) -> Vec<f64> {
        let n = self.frame_len;
        match self.window {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }

    /// Summed squared window over one hop period in steady state.
    pub fn overlap_profile(&self) -> Vec<f64> {
        let w = self.window_samples();
        let mut acc = vec![0.0; self.hop];
        for (i, wi) in w.iter().enumerate() {
            acc[i % self.hop] += wi * wi;
        }
        acc
    }

    /// True when weighted overlap-add can invert the analysis at every sample.
    pub fn is_cola(&self) -> bool {
        let p = self.overlap_profile();
        let max = p.iter().cloned().fold(0.0, f64::max);
        max > 0.0 && p.iter().all(|v| *v > 1e-8 * max)
    }

    fn front_pad(&self) -> usize {
        self.frame_len - self.hop
    }

    /// Number of frames needed to cover `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        let total = len + self.front_pad();
        if total <= self.frame_len {
            1
        } else {
            (total - self.frame_len).div_ceil(self.hop) + 1
        }
    }
}

/// Complex STFT coefficients, one `bins × frames` matrix per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectroTemporalTensor {
    channels: Vec<CMat>,
    config: StftConfig,
    signal_len: usize,
    /// Set when the input was shorter than one frame and zero-padded.
    pub padded_short: bool,
}

impl SpectroTemporalTensor {
    pub fn new(channels: Vec<CMat>, config: StftConfig, signal_len: usize) -> Result<Self> {
        config.validate()?;
        let frames = config.frame_count(signal_len);
        for (c, m) in channels.iter().enumerate() {
            if m.nrows() != config.n_bins() || m.ncols() != frames {
                return Err(Error::Argument(format!(
                    "channel {c} has shape {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    config.n_bins(),
                    frames
                )));
            }
        }
        Ok(Self {
            channels,
            config,
            signal_len,
            padded_short: false,
        })
    }

    pub fn zeros(n_channels: usize, config: StftConfig, signal_len: usize) -> Result<Self> {
        let frames = config.frame_count(signal_len);
        Self::new(vec![CMat::zeros(config.n_bins(), frames); n_channels], config, signal_len)
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_bins(&self) -> usize {
        self.config.n_bins()
    }

    pub fn n_frames(&self) -> usize {
        self.config.frame_count(self.signal_len)
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn channel(&self, c: usize) -> &CMat {
        &self.channels[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut CMat {
        &mut self.channels[c]
    }

    pub fn channels(&self) -> &[CMat] {
        &self.channels
    }

    pub fn get(&self, c: usize, bin: usize, frame: usize) -> C64 {
        self.channels[c][(bin, frame)]
    }

    /// Observations of one bin as a `channels × frames` matrix.
    pub fn bin_matrix(&self, bin: usize) -> CMat {
        CMat::from_fn(self.n_channels(), self.n_frames(), |c, t| self.channels[c][(bin, t)])
    }

    /// Inverse of [`bin_matrix`](Self::bin_matrix): one `rows × frames` matrix per bin.
    pub fn from_bin_matrices(bins: &[CMat], config: StftConfig, signal_len: usize) -> Result<Self> {
        if bins.len() != config.n_bins() {
            return Err(Error::Argument(format!(
                "expected {} bin matrices, got {}",
                config.n_bins(),
                bins.len()
            )));
        }
        let rows = bins.first().map(|b| b.nrows()).unwrap_or(0);
        let frames = config.frame_count(signal_len);
        let mut channels = vec![CMat::zeros(config.n_bins(), frames); rows];
        for (k, b) in bins.iter().enumerate() {
            if b.nrows() != rows || b.ncols() != frames {
                return Err(Error::Argument(format!("bin {k} matrix has inconsistent shape")));
            }
            for (c, ch) in channels.iter_mut().enumerate() {
                for t in 0..frames {
                    ch[(k, t)] = b[(c, t)];
                }
            }
        }
        Self::new(channels, config, signal_len)
    }

    pub fn energy(&self) -> f64 {
        self.channels.iter().map(|m| m.norm_squared()).sum()
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

fn analyze_with(signal: &[f64], cfg: &StftConfig, plan: &Plans, window: &[f64]) -> CMat {
    let frames = cfg.frame_count(signal.len());
    let pad = cfg.front_pad() as isize;
    let mut out = CMat::zeros(cfg.n_bins(), frames);
    let mut buf = vec![ZERO; cfg.fft_size];
    for t in 0..frames {
        let start = t as isize * cfg.hop as isize - pad;
        buf.iter_mut().for_each(|b| *b = ZERO);
        for (i, w) in window.iter().enumerate() {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < signal.len() {
                buf[i] = C64::from(signal[idx as usize] * w);
            }
        }
        plan.forward.process(&mut buf);
        for k in 0..cfg.n_bins() {
            out[(k, t)] = buf[k];
        }
    }
    out
}

/// STFT of a single real signal.
pub fn analyze(signal: &[f64], config: &StftConfig) -> Result<SpectroTemporalTensor> {
    analyze_multi(&[signal.to_vec()], config)
}

/// STFT of several equal-length real signals, one channel each.
pub fn analyze_multi(signals: &[Vec<f64>], config: &StftConfig) -> Result<SpectroTemporalTensor> {
    config.validate()?;
    let len = signals.first().map(|s| s.len()).unwrap_or(0);
    if len == 0 {
        return Err(Error::Argument("signal is empty".into()));
    }
    if signals.iter().any(|s| s.len() != len) {
        return Err(Error::Argument("all channels must have the same length".into()));
    }
    if signals.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Argument("signal contains non-finite samples".into()));
    }
    let plan = plans(config.fft_size);
    let window = config.window_samples();
    let channels = signals.iter().map(|s| analyze_with(s, config, &plan, &window)).collect();
    let mut tensor = SpectroTemporalTensor::new(channels, *config, len)?;
    tensor.padded_short = len < config.frame_len;
    Ok(tensor)
}

/// Weighted overlap-add inverse of [`analyze`], one signal per channel.
///
/// The spectrum is treated as Hermitian: only the retained nonnegative-frequency
/// bins are used and the real part of the inverse transform is kept.
pub fn synthesize(tensor: &SpectroTemporalTensor) -> Result<Vec<Vec<f64>>> {
    let cfg = tensor.config();
    if !cfg.is_cola() {
        return Err(Error::Contract(format!(
            "window/hop pair (frame {}, hop {}) cannot be inverted by overlap-add",
            cfg.frame_len, cfg.hop
        )));
    }
    let plan = plans(cfg.fft_size);
    let window = cfg.window_samples();
    let len = tensor.signal_len();
    let pad = cfg.front_pad() as isize;
    let frames = tensor.n_frames();

    let mut norm = vec![0.0; len];
    for t in 0..frames {
        let start = t as isize * cfg.hop as isize - pad;
        for (i, w) in window.iter().enumerate() {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < len {
                norm[idx as usize] += w * w;
            }
        }
    }

    let n = cfg.fft_size;
    let mut outputs = Vec::with_capacity(tensor.n_channels());
    let mut buf = vec![ZERO; n];
    for ch in tensor.channels() {
        let mut out = vec![0.0; len];
        for t in 0..frames {
            for k in 0..n {
                buf[k] = if k < cfg.n_bins() { ch[(k, t)] } else { ch[(n - k, t)].conj() };
            }
            if n % 2 == 0 {
                buf[n / 2].im = 0.0;
            }
            buf[0].im = 0.0;
            plan.inverse.process(&mut buf);
            let start = t as isize * cfg.hop as isize - pad;
            for (i, w) in window.iter().enumerate() {
                let idx = start + i as isize;
                if idx >= 0 && (idx as usize) < len {
                    out[idx as usize] += buf[i].re / n as f64 * w;
                }
            }
        }
        for (o, s) in out.iter_mut().zip(&norm) {
            *o = if *s > 0.0 { *o / s } else { 0.0 };
        }
        outputs.push(out);
    }
    Ok(outputs)
}

/// Bins nearest to the requested frequencies, deduplicated and sorted.
pub fn select_bins(config: &StftConfig, freqs_hz: &[f64]) -> Vec<usize> {
    let mut bins: Vec<usize> = freqs_hz.iter().map(|f| config.nearest_bin(*f)).collect();
    bins.sort_unstable();
    bins.dedup();
    bins
}

/// Real matrix of per-bin magnitudes, useful for plotting and histograms.
pub fn magnitudes(m: &CMat) -> DMatrix<f64> {
    m.map(|v| v.norm())
}
