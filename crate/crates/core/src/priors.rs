//! Source-spectrogram priors and their decomposition into bases and gains.
//!
//! Priors arrive from a SPEC1 file (written by an external monaural
//! separator), from the reverberant source images (oracle), or from a seeded
//! uniform generator. They are turned into a per-source spectral model by a
//! component-wise alternating scheme under the Itakura-Saito divergence.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::signal::{stft, AudioClip, MagnitudeSpectrogram, StftConfig, DEFAULT_SAMPLE_RATE};
use crate::EPS;

const MAGIC: &[u8; 6] = b"SPEC1\0";
const HEADER_LEN: usize = 6 + 4 * 3 + 8 + 4 * 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    File,
    Oracle,
    Random,
}

/// Per-source magnitude priors on the mixture's `(f, t)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSet {
    pub sources: Vec<MagnitudeSpectrogram>,
    pub provenance: Provenance,
    pub sample_rate: f64,
    pub stft: StftConfig,
}

impl PriorSet {
    pub fn new(
        sources: Vec<MagnitudeSpectrogram>,
        provenance: Provenance,
        sample_rate: f64,
        stft: StftConfig,
    ) -> Result<Self> {
        let first = sources
            .first()
            .ok_or_else(|| Error::EmptyInput("prior set has no sources".into()))?;
        let (f, t) = (first.num_bins(), first.num_frames());
        if sources.iter().any(|s| s.num_bins() != f || s.num_frames() != t) {
            return Err(Error::Shape("prior sources disagree in shape".into()));
        }
        Ok(Self {
            sources,
            provenance,
            sample_rate,
            stft,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn num_bins(&self) -> usize {
        self.sources[0].num_bins()
    }

    pub fn num_frames(&self) -> usize {
        self.sources[0].num_frames()
    }

    /// Source spectra flattened as `(s, f, t)`, `t` fastest.
    pub fn flattened(&self) -> Vec<f64> {
        self.sources.iter().flat_map(|s| s.values().iter().copied()).collect()
    }

    pub fn check_grid(&self, bins: usize, frames: usize) -> Result<()> {
        if self.num_bins() != bins || self.num_frames() != frames {
            return Err(Error::Shape(format!(
                "priors are {}x{} but the mixture STFT is {bins}x{frames}",
                self.num_bins(),
                self.num_frames()
            )));
        }
        Ok(())
    }
}

/// The estimate with the largest `sum y^2`; ties go to the lowest index.
pub fn select_predominant_channel(estimates: &[MagnitudeSpectrogram]) -> Result<&MagnitudeSpectrogram> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in estimates.iter().enumerate() {
        let energy = e.energy();
        if best.is_none_or(|(_, b)| energy > b) {
            best = Some((i, energy));
        }
    }
    best.map(|(i, _)| &estimates[i])
        .ok_or_else(|| Error::EmptyInput("no channel estimates to choose from".into()))
}

/// `|STFT|` of the predominant channel of each reverberant source image.
pub fn oracle_prior(images: &[AudioClip], cfg: StftConfig, mixture_len: usize) -> Result<PriorSet> {
    let first = images
        .first()
        .ok_or_else(|| Error::EmptyInput("no source images".into()))?;
    let mut sources = Vec::with_capacity(images.len());
    for (s, img) in images.iter().enumerate() {
        if img.len() != mixture_len {
            return Err(Error::Shape(format!(
                "source image {s} has {} samples, mixture has {mixture_len}",
                img.len()
            )));
        }
        let spec = stft(img, cfg)?;
        let per_channel: Vec<MagnitudeSpectrogram> = (0..img.num_channels()).map(|m| spec.magnitude(m)).collect();
        sources.push(select_predominant_channel(&per_channel)?.clone());
    }
    PriorSet::new(sources, Provenance::Oracle, first.sample_rate(), cfg)
}

/// I.i.d. uniform `(0, 1]` priors. The grid metadata assumes a half-overlap
/// STFT of `2 (F - 1)` points at the default sample rate.
pub fn random_prior(bins: usize, frames: usize, sources: usize, seed: u64) -> Result<PriorSet> {
    if bins < 2 || frames == 0 || sources == 0 {
        return Err(Error::Config("random prior needs F >= 2, T >= 1, S >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = (0..sources)
        .map(|_| {
            let vals = (0..bins * frames).map(|_| 1.0 - rng.random::<f64>()).collect();
            MagnitudeSpectrogram::new(vals, bins, frames)
        })
        .collect::<Result<Vec<_>>>()?;
    let fft_size = 2 * (bins - 1);
    PriorSet::new(
        specs,
        Provenance::Random,
        DEFAULT_SAMPLE_RATE,
        StftConfig {
            fft_size,
            hop: fft_size / 2,
        },
    )
}

/// `max(eps, |x| - y_vocal)`: accompaniment prior when only the vocal prior
/// is available.
pub fn accompaniment_residual(mixture: &MagnitudeSpectrogram, vocal: &MagnitudeSpectrogram) -> Result<MagnitudeSpectrogram> {
    if mixture.num_bins() != vocal.num_bins() || mixture.num_frames() != vocal.num_frames() {
        return Err(Error::Shape("vocal prior and mixture magnitude differ in shape".into()));
    }
    let vals = mixture
        .values()
        .iter()
        .zip(vocal.values())
        .map(|(x, y)| (x - y).max(EPS))
        .collect();
    MagnitudeSpectrogram::new(vals, mixture.num_bins(), mixture.num_frames())
}

/// Multiplies every entry by `exp(sigma * n)`, `n` standard normal.
pub fn perturb_multiplicative(prior: &PriorSet, sigma: f64, seed: u64) -> Result<PriorSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = prior
        .sources
        .iter()
        .map(|s| {
            let vals = s
                .values()
                .iter()
                .map(|v| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    v * (sigma * n).exp()
                })
                .collect();
            MagnitudeSpectrogram::new(vals, s.num_bins(), s.num_frames())
        })
        .collect::<Result<Vec<_>>>()?;
    PriorSet::new(sources, prior.provenance, prior.sample_rate, prior.stft)
}

pub fn encode_prior(prior: &PriorSet) -> Result<Vec<u8>> {
    let (s, f, t) = (prior.num_sources(), prior.num_bins(), prior.num_frames());
    let dims = [s, f, t, prior.stft.fft_size, prior.stft.hop];
    if dims.iter().any(|d| *d > u32::MAX as usize) {
        return Err(Error::Shape("prior dimensions exceed the u32 header fields".into()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * s * f * t);
    out.extend_from_slice(MAGIC);
    for d in [s, f, t] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&prior.sample_rate.to_le_bytes());
    out.extend_from_slice(&(prior.stft.fft_size as u32).to_le_bytes());
    out.extend_from_slice(&(prior.stft.hop as u32).to_le_bytes());
    for src in &prior.sources {
        for v in src.values() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_prior(bytes: &[u8]) -> Result<PriorSet> {
    if let Some(pos) = (0..MAGIC.len()).find(|&i| bytes.get(i) != Some(&MAGIC[i])) {
        return Err(Error::format(pos as u64, "bad magic, expected \"SPEC1\\0\""));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let (s, f, t) = (u32_at(6), u32_at(10), u32_at(14));
    let sample_rate = f64::from_le_bytes(bytes[18..26].try_into().unwrap());
    let (fft_size, hop) = (u32_at(26), u32_at(30));
    if s == 0 || f == 0 || t == 0 {
        return Err(Error::format(6, "zero dimension in header"));
    }
    let count = s
        .checked_mul(f)
        .and_then(|x| x.checked_mul(t))
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| Error::format(6, "dimension overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < count {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: header declares {count} bytes, {} present", payload.len()),
        ));
    }
    if payload.len() > count {
        return Err(Error::format((HEADER_LEN + count) as u64, "trailing bytes after payload"));
    }
    if !(sample_rate > 0.0) || !sample_rate.is_finite() {
        return Err(Error::format(18, "sample rate must be positive"));
    }
    let mut sources = Vec::with_capacity(s);
    for src in 0..s {
        let mut vals = Vec::with_capacity(f * t);
        for i in 0..f * t {
            let off = HEADER_LEN + 4 * (src * f * t + i);
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::format(off as u64, format!("invalid magnitude {v}")));
            }
            vals.push(v as f64);
        }
        sources.push(MagnitudeSpectrogram::new(vals, f, t)?);
    }
    PriorSet::new(sources, Provenance::File, sample_rate, StftConfig { fft_size, hop })
}

pub fn save_prior(prior: &PriorSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_prior(prior)?).map_err(|e| Error::io(path, e))
}

pub fn load_prior(path: impl AsRef<Path>) -> Result<PriorSet> {
    let path = path.as_ref();
    decode_prior(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Nonnegative bases `(F x K)` and gains `(K x T)` of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFactors {
    /// `b[f * K + k]`
    pub bases: Vec<f64>,
    /// `g[k * T + t]`
    pub gains: Vec<f64>,
}

/// Bases and gains of every source, all with the same `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    bins: usize,
    frames: usize,
    components: usize,
    sources: Vec<SourceFactors>,
}

impl SpectralModel {
    pub fn new(bins: usize, frames: usize, components: usize, sources: Vec<SourceFactors>) -> Result<Self> {
        if components == 0 {
            return Err(Error::Config("spectral model needs K >= 1".into()));
        }
        for s in &sources {
            if s.bases.len() != bins * components || s.gains.len() != components * frames {
                return Err(Error::Shape("factor buffers disagree with model dimensions".into()));
            }
        }
        Ok(Self {
            bins,
            frames,
            components,
            sources,
        })
    }

    /// Concatenates single-source models along the source axis.
    pub fn stack(models: Vec<SpectralModel>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::EmptyInput("no models to stack".into()))?;
        let (f, t, k) = (first.bins, first.frames, first.components);
        let mut sources = Vec::new();
        for m in models {
            if (m.bins, m.frames, m.components) != (f, t, k) {
                return Err(Error::Shape("stacked models differ in F, T or K".into()));
            }
            sources.extend(m.sources);
        }
        Self::new(f, t, k, sources)
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn num_components(&self) -> usize {
        self.components
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn source(&self, s: usize) -> &SourceFactors {
        &self.sources[s]
    }

    pub fn source_mut(&mut self, s: usize) -> &mut SourceFactors {
        &mut self.sources[s]
    }

    /// `y_ft = sum_k b_fk g_kt` for source `s` into `out` (`F x T`).
    pub fn reconstruct_into(&self, s: usize, out: &mut [f64]) {
        reconstruct(&self.sources[s], self.bins, self.frames, self.components, out);
    }

    pub fn reconstruct(&self, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.bins * self.frames];
        self.reconstruct_into(s, &mut out);
        out
    }
}

fn reconstruct(src: &SourceFactors, bins: usize, frames: usize, k_len: usize, out: &mut [f64]) {
    out.fill(0.0);
    for f in 0..bins {
        let row = &mut out[f * frames..(f + 1) * frames];
        for k in 0..k_len {
            let b = src.bases[f * k_len + k];
            let g = &src.gains[k * frames..(k + 1) * frames];
            for (o, gv) in row.iter_mut().zip(g) {
                *o += b * gv;
            }
        }
    }
}

/// `sum (y / x - ln(y / x) - 1)`, the scalar Itakura-Saito divergence of `x`
/// from data `y`.
pub fn is_divergence(data: &[f64], model: &[f64]) -> f64 {
    data.iter()
        .zip(model)
        .map(|(y, x)| {
            let r = y / x;
            r - r.ln() - 1.0
        })
        .sum()
}

/// Decomposes one prior into `K` components; see [`hals_decompose_traced`].
pub fn hals_decompose(prior: &MagnitudeSpectrogram, components: usize, iterations: usize, seed: u64) -> Result<SpectralModel> {
    hals_decompose_traced(prior, components, iterations, seed).map(|(m, _)| m)
}

/// Component-wise alternating IS factorization of one prior.
///
/// Components are visited in turn. For component `k` the data share
/// `v = l_k (1 - l_k / l) + (l_k / l)^2 y` is formed from the current
/// component and total models `l_k`, `l`; then
/// `g_kt <- [F^-1 sum_f v_ft / b_fk]+` and `b_fk <- [T^-1 sum_t v_ft / g_kt]+`,
/// `[.]+ = max(eps, .)`. Each step cannot increase the IS divergence, and a
/// single component (`K = 1`) fits its target exactly in closed form.
///
/// Returns the model and the divergence after initialization and after
/// every iteration.
pub fn hals_decompose_traced(
    prior: &MagnitudeSpectrogram,
    components: usize,
    iterations: usize,
    seed: u64,
) -> Result<(SpectralModel, Vec<f64>)> {
    if components == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let (f_len, t_len, k_len) = (prior.num_bins(), prior.num_frames(), components);
    let y: Vec<f64> = prior.values().iter().map(|v| v.max(EPS)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    // uniform (0, 1] factors scaled so the initial model matches the data mean
    let scale = (mean / (0.25 * k_len as f64)).sqrt();
    let mut src = SourceFactors {
        bases: (0..f_len * k_len).map(|_| ((1.0 - rng.random::<f64>()) * scale).max(EPS)).collect(),
        gains: (0..k_len * t_len).map(|_| ((1.0 - rng.random::<f64>()) * scale).max(EPS)).collect(),
    };

    let mut total = vec![0.0; f_len * t_len];
    let mut share = vec![0.0; f_len * t_len];
    reconstruct(&src, f_len, t_len, k_len, &mut total);
    let mut history = vec![is_divergence(&y, &total)];

    for _ in 0..iterations {
        for k in 0..k_len {
            for f in 0..f_len {
                let b = src.bases[f * k_len + k];
                for t in 0..t_len {
                    let idx = f * t_len + t;
                    let part = b * src.gains[k * t_len + t];
                    let ratio = (part / total[idx]).min(1.0);
                    share[idx] = part * (1.0 - ratio) + ratio * ratio * y[idx];
                }
            }
            let old_b: Vec<f64> = (0..f_len).map(|f| src.bases[f * k_len + k]).collect();
            let old_g: Vec<f64> = src.gains[k * t_len..(k + 1) * t_len].to_vec();

            let gains = &mut src.gains[k * t_len..(k + 1) * t_len];
            gains.fill(0.0);
            for f in 0..f_len {
                let inv_b = 1.0 / old_b[f];
                for (g, v) in gains.iter_mut().zip(&share[f * t_len..(f + 1) * t_len]) {
                    *g += v * inv_b;
                }
            }
            for g in gains.iter_mut() {
                *g = (*g / f_len as f64).max(EPS);
            }
            let inv_g: Vec<f64> = gains.iter().map(|g| 1.0 / g).collect();
            for f in 0..f_len {
                let row = &share[f * t_len..(f + 1) * t_len];
                let acc: f64 = row.iter().zip(&inv_g).map(|(v, ig)| v * ig).sum();
                src.bases[f * k_len + k] = (acc / t_len as f64).max(EPS);
            }

            let new_g = &src.gains[k * t_len..(k + 1) * t_len];
            for f in 0..f_len {
                let (bo, bn) = (old_b[f], src.bases[f * k_len + k]);
                for t in 0..t_len {
                    let idx = f * t_len + t;
                    total[idx] = (total[idx] - bo * old_g[t] + bn * new_g[t]).max(EPS * EPS);
                }
            }
        }
        // drop accumulated drift of the incremental updates
        reconstruct(&src, f_len, t_len, k_len, &mut total);
        history.push(is_divergence(&y, &total));
    }
    Ok((SpectralModel::new(f_len, t_len, k_len, vec![src])?, history))
}
