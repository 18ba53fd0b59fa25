//! The end-to-end separation pipeline and generalized Wiener reconstruction.

use serde_json::json;

use crate::array::{build_direction_grid, init_doa_kernels, DoaKernelSet};
use crate::cnmf::{direction_power, estimate_mixing_filter_with, refine_sources, SpatialWeights};
use crate::config::Config;
use crate::error::{Error, Result, StageExt};
use crate::priors::{accompaniment_residual, hals_decompose, PriorSet, Provenance, SpectralModel};
use crate::scm::compute_scm;
use crate::signal::{istft, stft, AudioClip, ComplexSpectrogram};

/// Soft masks, `(s, m, f, t)` with `t` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Masks {
    data: Vec<f64>,
    sources: usize,
    channels: usize,
    bins: usize,
    frames: usize,
}

impl Masks {
    pub fn num_sources(&self) -> usize {
        self.sources
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
    pub fn get(&self, s: usize, m: usize, f: usize, t: usize) -> f64 {
        self.data[((s * self.channels + m) * self.bins + f) * self.frames + t]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `mask_msft = d_mfs ŷ_fts / sum_s' d_mfs' ŷ_fts'` with
/// `d_mfs = sum_o [W_fo]_mm z_so`, the `m`-th diagonal entry of `H_fs`.
/// Bins where every source's modeled power vanishes get `1 / S`.
pub fn wiener_masks(kernels: &DoaKernelSet, weights: &SpatialWeights, model: &SpectralModel) -> Result<Masks> {
    let (m_len, f_len, t_len) = (kernels.num_channels(), model.num_bins(), model.num_frames());
    let (s_len, o_len) = (weights.num_sources(), weights.num_directions());
    if kernels.num_bins() != f_len || kernels.num_directions() != o_len || model.num_sources() != s_len {
        return Err(Error::Shape("kernels, weights and spectral model disagree".into()));
    }
    let spectra: Vec<Vec<f64>> = (0..s_len).map(|s| model.reconstruct(s)).collect();
    // diagonal response of every source's mixing filter, (s, m, f)
    let mut diag = vec![0.0; s_len * m_len * f_len];
    for s in 0..s_len {
        for f in 0..f_len {
            for o in 0..o_len {
                let z = weights.get(s, o);
                let w = kernels.kernel(f, o);
                for m in 0..m_len {
                    diag[(s * m_len + m) * f_len + f] += w[m * m_len + m].re * z;
                }
            }
        }
    }
    let mut data = vec![0.0; s_len * m_len * f_len * t_len];
    let mut num = vec![0.0; s_len];
    for m in 0..m_len {
        for f in 0..f_len {
            for t in 0..t_len {
                let mut den = 0.0;
                for s in 0..s_len {
                    num[s] = (diag[(s * m_len + m) * f_len + f] * spectra[s][f * t_len + t]).max(0.0);
                    den += num[s];
                }
                for s in 0..s_len {
                    let v = if den > 0.0 && den.is_finite() {
                        num[s] / den
                    } else {
                        1.0 / s_len as f64
                    };
                    data[((s * m_len + m) * f_len + f) * t_len + t] = v;
                }
            }
        }
    }
    Ok(Masks {
        data,
        sources: s_len,
        channels: m_len,
        bins: f_len,
        frames: t_len,
    })
}

/// Masked mixture STFTs and their resynthesis.
#[derive(Debug, Clone)]
pub struct SeparatedSources {
    pub spectrograms: Vec<ComplexSpectrogram>,
    pub audio: Vec<AudioClip>,
}

/// `ỹ_mfts = mask_msft x̃_mft`. The last source absorbs the rounding
/// residue, so the per-channel sum over sources taken in source order
/// reproduces the mixture STFT bit for bit.
pub fn reconstruct(mixture: &ComplexSpectrogram, masks: &Masks, output_len: usize) -> Result<SeparatedSources> {
    let (m_len, f_len, t_len) = (mixture.num_channels(), mixture.num_bins(), mixture.num_frames());
    if masks.channels != m_len || masks.bins != f_len || masks.frames != t_len {
        return Err(Error::Shape(format!(
            "masks are {}x{}x{}, mixture STFT is {m_len}x{f_len}x{t_len}",
            masks.channels, masks.bins, masks.frames
        )));
    }
    let s_len = masks.sources;
    let mut outs: Vec<ComplexSpectrogram> = (0..s_len)
        .map(|_| ComplexSpectrogram::zeros(m_len, t_len, mixture.config(), mixture.sample_rate()))
        .collect();
    let mut re = vec![0.0; s_len];
    let mut im = vec![0.0; s_len];
    for m in 0..m_len {
        for f in 0..f_len {
            for t in 0..t_len {
                let x = mixture.get(m, f, t);
                for s in 0..s_len {
                    let g = masks.get(s, m, f, t);
                    re[s] = g * x.re;
                    im[s] = g * x.im;
                }
                conserve(&mut re, x.re);
                conserve(&mut im, x.im);
                let idx = mixture.index(m, f, t);
                for s in 0..s_len {
                    outs[s].bins_mut()[idx] = num_complex::Complex64::new(re[s], im[s]);
                }
            }
        }
    }
    let audio = outs
        .iter()
        .map(|spec| istft(spec).map(|clip| clip.resized(output_len)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeparatedSources {
        spectrograms: outs,
        audio,
    })
}

/// Nudges the last part until the left-to-right sum of `parts` equals
/// `total`. When rounding ties make that impossible, the largest of the
/// other parts is moved by a few ulps first.
fn conserve(parts: &mut [f64], total: f64) {
    let Some((last, head)) = parts.split_last_mut() else {
        return;
    };
    if head.is_empty() {
        *last = total;
        return;
    }
    if !total.is_finite() || head.iter().any(|v| !v.is_finite()) {
        return;
    }
    let prefix = head.iter().fold(0.0, |a, v| a + v);
    for _ in 0..4 {
        let sum = prefix + *last;
        if sum == total {
            return;
        }
        *last += total - sum;
    }
    let big = (0..head.len()).max_by(|&a, &b| head[a].abs().total_cmp(&head[b].abs())).unwrap_or(0);
    let orig = head[big];
    for step in 0..32 {
        let mut v = orig;
        for _ in 0..step / 2 {
            v = if step % 2 == 0 { v.next_up() } else { v.next_down() };
        }
        head[big] = v;
        let prefix = head.iter().fold(0.0, |a, v| a + v);
        if let Some(fit) = fit_last(prefix, total) {
            *last = fit;
            return;
        }
    }
    head[big] = orig;
}

/// Smallest `v` with `prefix + v == total`, searched over the ordered bit
/// patterns of finite doubles.
fn fit_last(prefix: f64, total: f64) -> Option<f64> {
    let key = |v: f64| {
        let b = v.to_bits() as i64;
        if b < 0 { i64::MIN - b } else { b }
    };
    let value = |k: i64| f64::from_bits((if k < 0 { i64::MIN - k } else { k }) as u64);
    let (mut lo, mut hi) = (key(f64::MIN), key(f64::MAX));
    while lo < hi {
        let mid = (lo as i128 + hi as i128).div_euclid(2) as i64;
        if prefix + value(mid) >= total {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    (prefix + value(lo) == total).then(|| value(lo))
}

/// What the optimizer did, for logging.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub mixing_cost: Vec<f64>,
    pub refine_cost: Vec<f64>,
    /// `z` after each stage, `S x O` row-major.
    pub mixing_weights: Vec<f64>,
    pub final_weights: Vec<f64>,
    /// [`direction_power`] of the final spatial model.
    pub direction_power: Vec<f64>,
    pub azimuths: Vec<f64>,
    pub sources: usize,
    pub mixing_riccati_warnings: usize,
    pub refine_riccati_warnings: usize,
}

impl Diagnostics {
    /// One JSON object per line: per-iteration costs, `z` snapshots and
    /// warning counters.
    pub fn to_json_lines(&self) -> String {
        let mut lines = Vec::new();
        for (stage, costs) in [("mixing-filter", &self.mixing_cost), ("refinement", &self.refine_cost)] {
            for (i, c) in costs.iter().enumerate() {
                lines.push(json!({"event": "cost", "stage": stage, "iteration": i, "cost": c}));
            }
        }
        let o = self.azimuths.len().max(1);
        let rows = |v: &[f64]| v.chunks(o).map(<[f64]>::to_vec).collect::<Vec<_>>();
        lines.push(json!({"event": "weights", "stage": "mixing-filter", "azimuths": self.azimuths, "z": rows(&self.mixing_weights)}));
        lines.push(json!({"event": "weights", "stage": "refinement", "azimuths": self.azimuths, "z": rows(&self.final_weights)}));
        lines.push(json!({"event": "direction_power", "azimuths": self.azimuths, "power": rows(&self.direction_power)}));
        lines.push(json!({
            "event": "warnings",
            "riccati_rejected": {"mixing-filter": self.mixing_riccati_warnings, "refinement": self.refine_riccati_warnings}
        }));
        lines.iter().map(|l| l.to_string() + "\n").collect()
    }
}

#[derive(Debug, Clone)]
pub struct SeparationResult {
    /// Per source, the M-channel masked mixture STFT.
    pub spectrograms: Vec<ComplexSpectrogram>,
    /// Per source, the M-channel time-domain estimate, mixture length.
    pub audio: Vec<AudioClip>,
    pub masks: Masks,
    pub diagnostics: Diagnostics,
}

/// stft, SCM, mixing-filter estimation with the priors fixed, HALS,
/// refinement, Wiener masking and resynthesis. Every error is tagged with
/// the stage it came from.
///
/// A prior set with a single source is read as the target alone; the
/// accompaniment prior is then the floored residual of the loudest mixture
/// channel's magnitude.
pub fn run_pipeline(mixture: &AudioClip, priors: &PriorSet, config: &Config) -> Result<SeparationResult> {
    config.validate().stage("config")?;
    if mixture.is_empty() {
        return Err(Error::EmptyInput("mixture has no samples".into())).stage("stft");
    }
    let geometry = config.array.geometry().stage("config")?;
    if geometry.num_mics() != mixture.num_channels() {
        return Err(Error::Shape(format!(
            "array has {} mics, mixture has {} channels",
            geometry.num_mics(),
            mixture.num_channels()
        )))
        .stage("config");
    }

    let spec = stft(mixture, config.stft).stage("stft")?;
    let observed = compute_scm(&spec).stage("scm")?;
    let priors = complete_priors(priors, &spec, config).stage("priors")?;

    let grid = build_direction_grid(config.array.directions).stage("kernels")?;
    let kernels = init_doa_kernels(&geometry, &grid, spec.num_bins(), config.stft.fft_size, mixture.sample_rate())
        .stage("kernels")?;

    let variant = config.variant();
    let ridge = config.model.ridge_rel;
    let step1 = estimate_mixing_filter_with(&observed, &priors, kernels, config.model.mixing_iterations, ridge, variant.step1)
        .stage("mixing-filter")?;

    let models = priors
        .sources
        .iter()
        .enumerate()
        .map(|(s, p)| {
            hals_decompose(p, config.model.components, config.model.hals_iterations, config.seed.wrapping_add(s as u64))
        })
        .collect::<Result<Vec<_>>>()
        .stage("hals")?;
    let model0 = SpectralModel::stack(models).stage("hals")?;

    let mixing_weights = step1.weights.as_slice().to_vec();
    let step2 = refine_sources(
        &observed,
        step1.kernels,
        step1.weights,
        model0,
        variant.step2,
        config.model.refine_iterations,
        ridge,
    )
    .stage("refinement")?;
    let model = step2.model.as_ref().expect("refinement keeps its model");

    let masks = wiener_masks(&step2.kernels, &step2.weights, model).stage("masks")?;
    let separated = reconstruct(&spec, &masks, mixture.len()).stage("reconstruct")?;

    let diagnostics = Diagnostics {
        mixing_cost: step1.cost_history,
        refine_cost: step2.cost_history.clone(),
        mixing_weights,
        final_weights: step2.weights.as_slice().to_vec(),
        direction_power: direction_power(&step2.kernels, &step2.weights),
        azimuths: grid.directions().iter().map(|d| d.azimuth).collect(),
        sources: step2.weights.num_sources(),
        mixing_riccati_warnings: step1.riccati_warnings,
        refine_riccati_warnings: step2.riccati_warnings,
    };
    Ok(SeparationResult {
        spectrograms: separated.spectrograms,
        audio: separated.audio,
        masks,
        diagnostics,
    })
}

/// Checks the priors against the mixture grid and adds the residual
/// accompaniment prior when only the target is given.
fn complete_priors(priors: &PriorSet, spec: &ComplexSpectrogram, config: &Config) -> Result<PriorSet> {
    priors.check_grid(spec.num_bins(), spec.num_frames())?;
    if priors.provenance == Provenance::File {
        if priors.stft != config.stft {
            return Err(Error::Shape(format!(
                "priors were computed with fft_size {} / hop {}, configuration uses {} / {}",
                priors.stft.fft_size, priors.stft.hop, config.stft.fft_size, config.stft.hop
            )));
        }
        if priors.sample_rate != spec.sample_rate() {
            return Err(Error::Shape(format!(
                "priors are at {} Hz, mixture at {} Hz",
                priors.sample_rate,
                spec.sample_rate()
            )));
        }
    }
    if priors.num_sources() > 1 {
        return Ok(priors.clone());
    }
    let channel_mags: Vec<_> = (0..spec.num_channels()).map(|m| spec.magnitude(m)).collect();
    let loudest = crate::priors::select_predominant_channel(&channel_mags)?;
    let accompaniment = accompaniment_residual(loudest, &priors.sources[0])?;
    PriorSet::new(
        vec![priors.sources[0].clone(), accompaniment],
        priors.provenance,
        priors.sample_rate,
        priors.stft,
    )
}
