//! Spatial covariance matrices (SCMs) and the Hermitian algebra the update
//! rules are written in.
//!
//! All tensors store M x M blocks contiguously in frequency-major order, so a
//! per-frequency loop walks memory linearly.

use num_complex::Complex64;

use crate::array::DoaKernelSet;
use crate::cnmf::SpatialWeights;
use crate::error::{Error, Result};
use crate::linalg;
use crate::signal::ComplexSpectrogram;

/// Default relative ridge for every inversion of a modeled SCM.
pub const DEFAULT_RIDGE_REL: f64 = 1e-7;

/// One M x M complex matrix per `(f, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmTensor {
    data: Vec<Complex64>,
    channels: usize,
    bins: usize,
    frames: usize,
}

impl ScmTensor {
    pub fn zeros(channels: usize, bins: usize, frames: usize) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); channels * channels * bins * frames],
            channels,
            bins,
            frames,
        }
    }

    pub fn from_blocks(data: Vec<Complex64>, channels: usize, bins: usize, frames: usize) -> Result<Self> {
        if data.len() != channels * channels * bins * frames {
            return Err(Error::Shape(format!(
                "SCM buffer of {} entries does not hold {bins}x{frames} blocks of {channels}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            channels,
            bins,
            frames,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn block(&self, f: usize, t: usize) -> &[Complex64] {
        let mm = self.channels * self.channels;
        let start = (f * self.frames + t) * mm;
        &self.data[start..start + mm]
    }

    #[inline]
    pub fn block_mut(&mut self, f: usize, t: usize) -> &mut [Complex64] {
        let mm = self.channels * self.channels;
        let start = (f * self.frames + t) * mm;
        &mut self.data[start..start + mm]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Largest `||X - X^H||_F / ||X||_F` over all blocks.
    pub fn max_hermitian_defect(&self) -> f64 {
        let m = self.channels;
        self.data
            .chunks_exact(m * m)
            .map(|b| {
                let norm = linalg::frobenius_norm(b);
                if norm == 0.0 {
                    0.0
                } else {
                    linalg::hermitian_defect(b, m) / norm
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Spatial frequency response `H_fs`, one M x M block per `(f, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingFilter {
    data: Vec<Complex64>,
    channels: usize,
    bins: usize,
    sources: usize,
}

impl MixingFilter {
    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn num_sources(&self) -> usize {
        self.sources
    }

    #[inline]
    pub fn block(&self, f: usize, s: usize) -> &[Complex64] {
        let mm = self.channels * self.channels;
        let start = (f * self.sources + s) * mm;
        &self.data[start..start + mm]
    }
}

/// Instantaneous rank-1 SCM `X_ft = x_ft x_ft^H` of a multichannel STFT.
pub fn compute_scm(spec: &ComplexSpectrogram) -> Result<ScmTensor> {
    let m = spec.num_channels();
    if m == 0 {
        return Err(Error::Shape("spectrogram has no channels".into()));
    }
    let (f_len, t_len) = (spec.num_bins(), spec.num_frames());
    let mut out = ScmTensor::zeros(m, f_len, t_len);
    let mut x = vec![Complex64::new(0.0, 0.0); m];
    for f in 0..f_len {
        for t in 0..t_len {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = spec.get(i, f, t);
            }
            let block = out.block_mut(f, t);
            for i in 0..m {
                for j in 0..m {
                    block[i * m + j] = x[i] * x[j].conj();
                }
            }
        }
    }
    Ok(out)
}

/// Shift `delta` used to regularize a matrix of the given trace.
#[inline]
pub fn ridge_shift(trace: f64, channels: usize, ridge_rel: f64) -> f64 {
    if trace > 0.0 {
        ridge_rel * trace / channels as f64
    } else {
        ridge_rel
    }
}

/// `(A + delta I)^-1` with `delta = ridge_rel * tr(A) / M` (or `ridge_rel`
/// when the trace vanishes). The result is Hermitian.
pub fn regularized_inverse(a: &[Complex64], channels: usize, ridge_rel: f64) -> Result<Vec<Complex64>> {
    if a.len() != channels * channels {
        return Err(Error::Shape(format!("expected a {channels}x{channels} matrix")));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("non-finite entry in matrix to invert".into()));
    }
    let delta = ridge_shift(linalg::trace(a, channels).re, channels, ridge_rel);
    shifted_inverse(a, channels, delta)
}

/// `(A + delta I)^-1`, Hermitian-symmetrized.
pub fn shifted_inverse(a: &[Complex64], channels: usize, delta: f64) -> Result<Vec<Complex64>> {
    let m = channels;
    let mut work = a.to_vec();
    for i in 0..m {
        work[i * m + i] += delta;
    }
    let mut out = vec![Complex64::new(0.0, 0.0); m * m];
    if !linalg::invert_into(&mut work, m, &mut out, 1e-15) {
        return Err(Error::Numeric("singular matrix despite ridge".into()));
    }
    linalg::hermitize(&mut out, m);
    Ok(out)
}

/// `tr(A B) = sum_ij A_ij B_ji`.
pub fn trace_product(a: &[Complex64], b: &[Complex64], channels: usize) -> Complex64 {
    linalg::trace_product(a, b, channels)
}

/// `H_fs = sum_o W_fo z_so`.
pub fn compose_mixing_filter(kernels: &DoaKernelSet, weights: &SpatialWeights) -> Result<MixingFilter> {
    if kernels.num_directions() != weights.num_directions() {
        return Err(Error::Shape(format!(
            "{} kernel directions but {} weight columns",
            kernels.num_directions(),
            weights.num_directions()
        )));
    }
    let m = kernels.num_channels();
    let mm = m * m;
    let (f_len, o_len, s_len) = (kernels.num_bins(), kernels.num_directions(), weights.num_sources());
    let mut data = vec![Complex64::new(0.0, 0.0); f_len * s_len * mm];
    for f in 0..f_len {
        for s in 0..s_len {
            let out = &mut data[(f * s_len + s) * mm..(f * s_len + s + 1) * mm];
            for o in 0..o_len {
                let z = weights.get(s, o);
                if z == 0.0 {
                    continue;
                }
                for (h, w) in out.iter_mut().zip(kernels.kernel(f, o)) {
                    *h += w * z;
                }
            }
        }
    }
    Ok(MixingFilter {
        data,
        channels: m,
        bins: f_len,
        sources: s_len,
    })
}
