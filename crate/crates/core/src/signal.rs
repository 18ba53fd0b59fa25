//! Multichannel audio containers and STFT analysis/synthesis.
//!
//! Analysis and synthesis both use the square root of the periodic Hann
//! window, so the analysis-synthesis product is the periodic Hann window
//! itself, which overlap-adds to exactly one at 50% overlap.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: f64 = 44100.0;
pub const DEFAULT_FFT_SIZE: usize = 2048;
pub const DEFAULT_HOP: usize = 1024;

/// Real samples per channel, all channels of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f64>>,
    sample_rate: f64,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::Config(format!("sample rate must be positive, got {sample_rate}")));
        }
        if let Some(first) = channels.first() {
            if channels.iter().any(|c| c.len() != first.len()) {
                return Err(Error::Shape("all channels of a clip must have equal length".into()));
            }
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn silence(channels: usize, len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![vec![0.0; len]; channels], sample_rate)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn energy(&self) -> f64 {
        self.channels.iter().flatten().map(|x| x * x).sum()
    }

    /// Keeps the first `len` samples of every channel, zero-padding if the
    /// clip is shorter.
    pub fn resized(mut self, len: usize) -> Self {
        for c in &mut self.channels {
            c.resize(len, 0.0);
        }
        self
    }

    /// Sample-wise sum. Clips must agree in rate, channel count and length.
    pub fn add(&self, other: &AudioClip) -> Result<AudioClip> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::Shape("sample rate mismatch".into()));
        }
        if self.num_channels() != other.num_channels() || self.len() != other.len() {
            return Err(Error::Shape("clip dimensions differ".into()));
        }
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        AudioClip::new(channels, self.sample_rate)
    }
}

/// Frame geometry of an STFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: DEFAULT_FFT_SIZE,
            hop: DEFAULT_HOP,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 {
            return Err(Error::Config("hop must be positive".into()));
        }
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "fft_size must be a power of two >= 2, got {}",
                self.fft_size
            )));
        }
        if self.hop > self.fft_size {
            return Err(Error::Config(format!(
                "hop {} exceeds fft_size {}",
                self.hop, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames needed so that every one of `len` samples lies in some frame.
    pub fn num_frames(&self, len: usize) -> usize {
        if len <= self.fft_size {
            1
        } else {
            (len - self.fft_size).div_ceil(self.hop) + 1
        }
    }

    pub fn bin_frequency(&self, bin: usize, sample_rate: f64) -> f64 {
        bin as f64 * sample_rate / self.fft_size as f64
    }
}

/// Square root of the periodic Hann window.
pub fn analysis_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).sqrt())
        .collect()
}

/// Per-sample sum over frames of the analysis*synthesis window product.
pub fn window_overlap_sum(cfg: &StftConfig, frames: usize) -> Vec<f64> {
    let w = analysis_window(cfg.fft_size);
    let len = (frames.max(1) - 1) * cfg.hop + cfg.fft_size;
    let mut acc = vec![0.0; len];
    for t in 0..frames {
        for (i, wi) in w.iter().enumerate() {
            acc[t * cfg.hop + i] += wi * wi;
        }
    }
    acc
}

/// Complex one-sided STFT of a multichannel clip, layout `(m, f, t)` with
/// `t` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    bins: Vec<Complex64>,
    channels: usize,
    frames: usize,
    config: StftConfig,
    sample_rate: f64,
}

impl ComplexSpectrogram {
    pub fn new(
        bins: Vec<Complex64>,
        channels: usize,
        frames: usize,
        config: StftConfig,
        sample_rate: f64,
    ) -> Result<Self> {
        let f = config.num_bins();
        if bins.len() != channels * f * frames {
            return Err(Error::Shape(format!(
                "spectrogram buffer has {} bins, expected {channels}x{f}x{frames}",
                bins.len()
            )));
        }
        Ok(Self {
            bins,
            channels,
            frames,
            config,
            sample_rate,
        })
    }

    pub fn zeros(channels: usize, frames: usize, config: StftConfig, sample_rate: f64) -> Self {
        let n = channels * config.num_bins() * frames;
        Self {
            bins: vec![Complex64::new(0.0, 0.0); n],
            channels,
            frames,
            config,
            sample_rate,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn num_bins(&self) -> usize {
        self.config.num_bins()
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn fft_size(&self) -> usize {
        self.config.fft_size
    }

    pub fn hop(&self) -> usize {
        self.config.hop
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    #[inline]
    pub fn index(&self, m: usize, f: usize, t: usize) -> usize {
        (m * self.num_bins() + f) * self.frames + t
    }

    #[inline]
    pub fn get(&self, m: usize, f: usize, t: usize) -> Complex64 {
        self.bins[self.index(m, f, t)]
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut [Complex64] {
        &mut self.bins
    }

    /// `|X_m(f, t)|` of one channel.
    pub fn magnitude(&self, m: usize) -> MagnitudeSpectrogram {
        let f = self.num_bins();
        let start = m * f * self.frames;
        let mags = self.bins[start..start + f * self.frames]
            .iter()
            .map(|z| z.norm())
            .collect();
        MagnitudeSpectrogram {
            mags,
            bins: f,
            frames: self.frames,
        }
    }

    /// Window-compensated one-sided energy: `sum_t sum_k c_k |X_k|^2 / N`
    /// with `c_k = 2` for the interior bins.
    pub fn energy(&self) -> f64 {
        let n = self.config.fft_size;
        let f = self.num_bins();
        let mut acc = 0.0;
        for m in 0..self.channels {
            for k in 0..f {
                let weight = if k == 0 || k == f - 1 { 1.0 } else { 2.0 };
                for t in 0..self.frames {
                    acc += weight * self.get(m, k, t).norm_sqr();
                }
            }
        }
        acc / n as f64
    }
}

/// Nonnegative spectrogram on an `(f, t)` grid, `t` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    mags: Vec<f64>,
    bins: usize,
    frames: usize,
}

impl MagnitudeSpectrogram {
    pub fn new(mags: Vec<f64>, bins: usize, frames: usize) -> Result<Self> {
        if mags.len() != bins * frames {
            return Err(Error::Shape(format!(
                "magnitude buffer has {} entries, expected {bins}x{frames}",
                mags.len()
            )));
        }
        if let Some(bad) = mags.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "magnitudes must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(Self { mags, bins, frames })
    }

    pub fn zeros(bins: usize, frames: usize) -> Self {
        Self {
            mags: vec![0.0; bins * frames],
            bins,
            frames,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn get(&self, f: usize, t: usize) -> f64 {
        self.mags[f * self.frames + t]
    }

    pub fn values(&self) -> &[f64] {
        &self.mags
    }

    pub fn into_values(self) -> Vec<f64> {
        self.mags
    }

    /// `sum_{f,t} y^2`.
    pub fn energy(&self) -> f64 {
        self.mags.iter().map(|x| x * x).sum()
    }

    /// Entrywise map; the result must stay nonnegative.
    pub fn map(&self, op: impl Fn(f64) -> f64) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            mags: self.mags.iter().map(|&x| op(x).max(0.0)).collect(),
            bins: self.bins,
            frames: self.frames,
        }
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

/// Forward STFT. Frame `t` covers samples `[t*hop, t*hop + fft_size)`; the
/// tail is zero-padded.
pub fn stft(clip: &AudioClip, cfg: StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    let n = cfg.fft_size;
    let f = cfg.num_bins();
    let frames = cfg.num_frames(clip.len());
    let window = analysis_window(n);
    let fft = plans(n).forward;
    let mut out = ComplexSpectrogram::zeros(clip.num_channels(), frames, cfg, clip.sample_rate());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..clip.num_channels() {
        let x = clip.channel(m);
        for t in 0..frames {
            let start = t * cfg.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let s = x.get(start + i).copied().unwrap_or(0.0);
                *b = Complex64::new(s * window[i], 0.0);
            }
            fft.process(&mut buf);
            for k in 0..f {
                let idx = out.index(m, k, t);
                out.bins[idx] = buf[k];
            }
        }
    }
    Ok(out)
}

/// Weighted overlap-add inverse STFT. The output spans
/// `(frames - 1) * hop + fft_size` samples; samples where the summed window
/// product vanishes are set to zero.
pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioClip> {
    let cfg = spec.config();
    cfg.validate()?;
    let n = cfg.fft_size;
    let f = cfg.num_bins();
    let frames = spec.num_frames();
    let window = analysis_window(n);
    let ifft = plans(n).inverse;
    let norm = window_overlap_sum(&cfg, frames);
    let len = norm.len();
    let mut channels = Vec::with_capacity(spec.num_channels());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..spec.num_channels() {
        let mut y = vec![0.0; len];
        for t in 0..frames {
            for k in 0..f {
                buf[k] = spec.get(m, k, t);
            }
            // one-sided spectrum of a real frame: DC and Nyquist are real
            buf[0].im = 0.0;
            buf[f - 1].im = 0.0;
            for k in f..n {
                buf[k] = buf[n - k].conj();
            }
            ifft.process(&mut buf);
            let start = t * cfg.hop;
            for i in 0..n {
                y[start + i] += buf[i].re / n as f64 * window[i];
            }
        }
        for (v, w) in y.iter_mut().zip(&norm) {
            *v = if *w > 1e-10 { *v / w } else { 0.0 };
        }
        channels.push(y);
    }
    AudioClip::new(channels, spec.sample_rate())
}

/// Full linear convolution via FFT, length `a.len() + b.len() - 1`.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let p = plans(n);
    let load = |x: &[f64]| {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (b, v) in buf.iter_mut().zip(x) {
            b.re = *v;
        }
        buf
    };
    let mut fa = load(a);
    let mut fb = load(b);
    p.forward.process(&mut fa);
    p.forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    p.inverse.process(&mut fa);
    fa[..out_len].iter().map(|z| z.re / n as f64).collect()
}

/// Cross-correlation `r[k] = sum_n a[n + k] b[n]` for lags `0..max_lag`.
pub fn fft_correlate(a: &[f64], b: &[f64], max_lag: usize) -> Vec<f64> {
    let reversed: Vec<f64> = b.iter().rev().copied().collect();
    let full = fft_convolve(a, &reversed);
    // full[j] = sum_n a[n] b[n - j + len_b - 1]  ->  lag k sits at j = len_b - 1 + k
    (0..max_lag)
        .map(|k| full.get(b.len() - 1 + k).copied().unwrap_or(0.0))
        .collect()
}
