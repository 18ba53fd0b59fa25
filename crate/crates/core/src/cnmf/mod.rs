//! DoA-kernel constrained complex NMF under the multichannel IS divergence.
//!
//! The model is `X̂_ft = sum_s H_fs ŷ_fts` with `H_fs = sum_o W_fo z_so`.
//! Every update is the majorization-minimization step for its parameter
//! family with the others held fixed, so any schedule that refreshes `X̂`
//! between families is monotone in the cost.
//!
//! Rank-1 observations make `X_ft` singular. The optimizer adds
//! `δ_ft I` to both `X_ft` and `X̂_ft`, with `δ_ft = ridge_rel tr(X_ft) / M`
//! taken from the observation, and minimizes
//!
//! ```text
//! sum_ft tr(X' P) - log det(X' P) - M,   X' = X + δ I,  P = (X̂ + δ I)^-1
//! ```
//!
//! which is the quantity [`is_cost`] reports. The ridge acts like one more
//! fixed PSD component of the model and does not disturb monotonicity.

mod riccati;

pub use riccati::{residual as riccati_residual, solve_riccati, RiccatiFailure, RESIDUAL_TOL};

use serde::{Deserialize, Serialize};

use crate::array::DoaKernelSet;
use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::priors::{PriorSet, SpectralModel};
use crate::scm::{compose_mixing_filter, ridge_shift, MixingFilter, ScmTensor};

pub const DEFAULT_ITERATIONS: usize = 200;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Nonnegative `z_so`, `S x O`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    data: Vec<f64>,
    sources: usize,
    directions: usize,
}

impl SpatialWeights {
    pub fn uniform(sources: usize, directions: usize) -> Self {
        Self {
            data: vec![1.0 / directions as f64; sources * directions],
            sources,
            directions,
        }
    }

    pub fn from_vec(data: Vec<f64>, sources: usize, directions: usize) -> Result<Self> {
        if data.len() != sources * directions {
            return Err(Error::Shape(format!("{} weights for {sources}x{directions}", data.len())));
        }
        if data.iter().any(|z| !(*z >= 0.0) || !z.is_finite()) {
            return Err(Error::Numeric("spatial weights must be finite and nonnegative".into()));
        }
        Ok(Self {
            data,
            sources,
            directions,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.sources
    }

    pub fn num_directions(&self) -> usize {
        self.directions
    }

    #[inline]
    pub fn get(&self, s: usize, o: usize) -> f64 {
        self.data[s * self.directions + o]
    }

    #[inline]
    pub fn set(&mut self, s: usize, o: usize, value: f64) {
        self.data[s * self.directions + o] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.directions..(s + 1) * self.directions]
    }
}

/// `z_so sum_f tr(W_fo)`: power each source draws from each direction.
/// Unlike raw `z` it is unaffected by trading scale between `W_fo` and `z`.
pub fn direction_power(kernels: &DoaKernelSet, weights: &SpatialWeights) -> Vec<f64> {
    let m = kernels.num_channels();
    let o_len = kernels.num_directions();
    let mut kernel_power = vec![0.0; o_len];
    for f in 0..kernels.num_bins() {
        for (o, p) in kernel_power.iter_mut().enumerate() {
            *p += linalg::trace(kernels.kernel(f, o), m).re;
        }
    }
    (0..weights.num_sources())
        .flat_map(|s| (0..o_len).map(move |o| (s, o)))
        .map(|(s, o)| weights.get(s, o) * kernel_power[o])
        .collect()
}

/// Index of the strongest direction of source `s` by [`direction_power`].
pub fn dominant_direction(kernels: &DoaKernelSet, weights: &SpatialWeights, s: usize) -> usize {
    let o_len = weights.num_directions();
    let power = direction_power(kernels, weights);
    let row = &power[s * o_len..(s + 1) * o_len];
    (0..o_len).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).unwrap()
}

/// Which parameter families an optimization stage updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeParams {
    pub kernels: bool,
    pub weights: bool,
    pub bases: bool,
    pub gains: bool,
}

impl FreeParams {
    pub const SPATIAL: FreeParams = FreeParams {
        kernels: true,
        weights: true,
        bases: false,
        gains: false,
    };
    pub const ALL: FreeParams = FreeParams {
        kernels: true,
        weights: true,
        bases: true,
        gains: true,
    };
    pub const NONE: FreeParams = FreeParams {
        kernels: false,
        weights: false,
        bases: false,
        gains: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Fix,
    Free,
    Oracle,
    Rand,
}

impl PresetName {
    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Fix => "fix",
            PresetName::Free => "free",
            PresetName::Oracle => "oracle",
            PresetName::Rand => "rand",
        }
    }
}

impl std::str::FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fix" => Ok(PresetName::Fix),
            "free" => Ok(PresetName::Free),
            "oracle" => Ok(PresetName::Oracle),
            "rand" => Ok(PresetName::Rand),
            other => Err(Error::Config(format!("unknown preset {other:?}, expected fix, free, oracle or rand"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorSource {
    File,
    Oracle,
    Random,
}

/// A named configuration of the framework: where the priors come from and
/// which parameters each stage updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantPreset {
    pub name: PresetName,
    pub prior_source: PriorSource,
    pub step1: FreeParams,
    pub step2: FreeParams,
}

impl VariantPreset {
    /// Defaults: `fix` refines `W`, `z` and `g` with the bases frozen; `free`
    /// also updates `b`. `oracle` and `rand` run the `free` schedule on
    /// oracle or random priors.
    pub fn new(name: PresetName) -> Self {
        let (prior_source, bases) = match name {
            PresetName::Fix => (PriorSource::File, false),
            PresetName::Free => (PriorSource::File, true),
            PresetName::Oracle => (PriorSource::Oracle, true),
            PresetName::Rand => (PriorSource::Random, true),
        };
        Self {
            name,
            prior_source,
            step1: FreeParams::SPATIAL,
            step2: FreeParams {
                kernels: true,
                weights: true,
                bases,
                gains: true,
            },
        }
    }

    /// Refinement touches only the spectral
    /// factors and the mixing filter stays as step 1 left it.
    pub fn spectral_refinement_only(mut self) -> Self {
        self.step2.kernels = false;
        self.step2.weights = false;
        self
    }
}

/// Per-(f, t) quantities derived from the current parameters.
#[derive(Debug, Clone)]
struct Cache {
    filter: MixingFilter,
    predicted: Vec<C64>,
    p: Vec<C64>,
    q: Vec<C64>,
    cost: f64,
}

/// Everything one optimization stage iterates on.
#[derive(Debug, Clone)]
pub struct FactorizationState {
    pub kernels: DoaKernelSet,
    pub weights: SpatialWeights,
    /// Present in the refinement stage; `ŷ` is then `sum_k b g`.
    pub model: Option<SpectralModel>,
    pub free: FreeParams,
    pub iteration: usize,
    pub cost_history: Vec<f64>,
    /// `(f, o)` Riccati solves that were rejected and left `W_fo` unchanged.
    pub riccati_warnings: usize,
    observed: ScmTensor,
    ridge_rel: f64,
    delta: Vec<f64>,
    observed_reg: Vec<C64>,
    observed_logdet: Vec<f64>,
    /// `ŷ` as `(s, f, t)`, `t` fastest.
    spectra: Vec<f64>,
    sources: usize,
    cache: Option<Cache>,
}

impl FactorizationState {
    /// Step-1 state: `ŷ` fixed to the given `(s, f, t)` spectra.
    pub fn with_fixed_spectra(
        observed: ScmTensor,
        kernels: DoaKernelSet,
        weights: SpatialWeights,
        spectra: Vec<f64>,
        free: FreeParams,
        ridge_rel: f64,
    ) -> Result<Self> {
        let sources = weights.num_sources();
        let expected = sources * observed.num_bins() * observed.num_frames();
        if spectra.len() != expected {
            return Err(Error::Shape(format!("{} spectral values, expected {expected}", spectra.len())));
        }
        if spectra.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Numeric("source spectra must be finite and nonnegative".into()));
        }
        if free.bases || free.gains {
            return Err(Error::Config("fixed spectra have no bases or gains to update".into()));
        }
        Self::build(observed, kernels, weights, None, spectra, free, ridge_rel)
    }

    /// Step-2 state: `ŷ` composed from a spectral model.
    pub fn with_model(
        observed: ScmTensor,
        kernels: DoaKernelSet,
        weights: SpatialWeights,
        model: SpectralModel,
        free: FreeParams,
        ridge_rel: f64,
    ) -> Result<Self> {
        if model.num_sources() != weights.num_sources()
            || model.num_bins() != observed.num_bins()
            || model.num_frames() != observed.num_frames()
        {
            return Err(Error::Shape("spectral model does not match observation and weights".into()));
        }
        let spectra = compose_spectra(&model);
        Self::build(observed, kernels, weights, Some(model), spectra, free, ridge_rel)
    }

    fn build(
        observed: ScmTensor,
        kernels: DoaKernelSet,
        weights: SpatialWeights,
        model: Option<SpectralModel>,
        spectra: Vec<f64>,
        free: FreeParams,
        ridge_rel: f64,
    ) -> Result<Self> {
        let m = observed.num_channels();
        if kernels.num_channels() != m || kernels.num_bins() != observed.num_bins() {
            return Err(Error::Shape(format!(
                "kernels are {}ch x {} bins, observation is {m}ch x {} bins",
                kernels.num_channels(),
                kernels.num_bins(),
                observed.num_bins()
            )));
        }
        if kernels.num_directions() != weights.num_directions() {
            return Err(Error::Shape("kernel and weight direction counts differ".into()));
        }
        if !(ridge_rel >= 0.0) || !ridge_rel.is_finite() {
            return Err(Error::Config("ridge_rel must be finite and nonnegative".into()));
        }
        let (f_len, t_len) = (observed.num_bins(), observed.num_frames());
        let mut delta = Vec::with_capacity(f_len * t_len);
        let mut observed_reg = observed.as_slice().to_vec();
        let mut observed_logdet = Vec::with_capacity(f_len * t_len);
        for ft in 0..f_len * t_len {
            let block = &mut observed_reg[ft * m * m..(ft + 1) * m * m];
            if block.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Numeric("non-finite entry in observed SCM".into()));
            }
            let d = ridge_shift(linalg::trace(block, m).re, m, ridge_rel);
            for i in 0..m {
                block[i * m + i] += d;
            }
            delta.push(d);
            // -inf when the unregularized rank-1 X is used with ridge 0
            observed_logdet.push(linalg::log_det_hpd(block, m).unwrap_or(f64::NEG_INFINITY));
        }
        let sources = weights.num_sources();
        let mut state = Self {
            kernels,
            weights,
            model,
            free,
            iteration: 0,
            cost_history: Vec::new(),
            riccati_warnings: 0,
            observed,
            ridge_rel,
            delta,
            observed_reg,
            observed_logdet,
            spectra,
            sources,
            cache: None,
        };
        state.refresh()?;
        state.cost_history.push(state.cost());
        Ok(state)
    }

    pub fn observed(&self) -> &ScmTensor {
        &self.observed
    }

    pub fn ridge_rel(&self) -> f64 {
        self.ridge_rel
    }

    pub fn num_sources(&self) -> usize {
        self.sources
    }

    /// Current `ŷ` as `(s, f, t)`.
    pub fn spectra(&self) -> &[f64] {
        &self.spectra
    }

    /// Cost at the current parameters.
    pub fn cost(&self) -> f64 {
        self.cache.as_ref().map_or(f64::NAN, |c| c.cost)
    }

    fn cache(&self) -> &Cache {
        self.cache.as_ref().expect("cache is refreshed after every update")
    }

    /// Recomputes `H`, `X̂`, `P = (X̂ + δI)^-1`, `Q = P X' P` and the cost.
    fn refresh(&mut self) -> Result<()> {
        let m = self.observed.num_channels();
        let mm = m * m;
        let (f_len, t_len, s_len) = (self.observed.num_bins(), self.observed.num_frames(), self.sources);
        let filter = compose_mixing_filter(&self.kernels, &self.weights)?;
        let n = f_len * t_len * mm;
        let mut predicted = vec![ZERO; n];
        let mut p = vec![ZERO; n];
        let mut q = vec![ZERO; n];
        let mut work = vec![ZERO; mm];
        let mut tmp = vec![ZERO; mm];
        let mut cost = 0.0;
        for f in 0..f_len {
            for t in 0..t_len {
                let ft = f * t_len + t;
                let xh = &mut predicted[ft * mm..(ft + 1) * mm];
                for s in 0..s_len {
                    let y = self.spectra[(s * f_len + f) * t_len + t];
                    if y == 0.0 {
                        continue;
                    }
                    for (a, h) in xh.iter_mut().zip(filter.block(f, s)) {
                        *a += h * y;
                    }
                }
                work.copy_from_slice(xh);
                for i in 0..m {
                    work[i * m + i] += self.delta[ft];
                }
                let pb = &mut p[ft * mm..(ft + 1) * mm];
                let fast = linalg::log_det_hpd(&work, m).filter(|_| linalg::invert_into(&mut work, m, pb, 1e-15));
                let logdet_model = match fast {
                    Some(v) => v,
                    None => linalg::shifted_psd_logdet_inverse(xh, m, self.delta[ft], pb).ok_or_else(|| {
                        Error::Numeric(format!("modeled SCM at bin {f}, frame {t} is not positive definite"))
                    })?,
                };
                linalg::hermitize(pb, m);
                let xr = &self.observed_reg[ft * mm..(ft + 1) * mm];
                linalg::matmul_into(pb, xr, m, &mut tmp);
                let qb = &mut q[ft * mm..(ft + 1) * mm];
                linalg::matmul_into(&tmp, pb, m, qb);
                linalg::hermitize(qb, m);
                cost += linalg::trace(&tmp, m).re - self.observed_logdet[ft] + logdet_model - m as f64;
            }
        }
        if !cost.is_finite() {
            return Err(Error::Numeric(format!("cost is {cost}")));
        }
        self.cache = Some(Cache {
            filter,
            predicted,
            p,
            q,
            cost,
        });
        Ok(())
    }

    /// `A_fs = sum_t ŷ_fts Q_ft` and `B_fs = sum_t ŷ_fts P_ft`, blocks in
    /// `(f, s)` order.
    fn accumulate(&self) -> (Vec<C64>, Vec<C64>) {
        let m = self.observed.num_channels();
        let mm = m * m;
        let (f_len, t_len, s_len) = (self.observed.num_bins(), self.observed.num_frames(), self.sources);
        let cache = self.cache();
        let mut a = vec![ZERO; f_len * s_len * mm];
        let mut b = vec![ZERO; f_len * s_len * mm];
        for f in 0..f_len {
            for s in 0..s_len {
                let ab = &mut a[(f * s_len + s) * mm..(f * s_len + s + 1) * mm];
                let bb = &mut b[(f * s_len + s) * mm..(f * s_len + s + 1) * mm];
                for t in 0..t_len {
                    let y = self.spectra[(s * f_len + f) * t_len + t];
                    if y == 0.0 {
                        continue;
                    }
                    let ft = f * t_len + t;
                    for (acc, v) in ab.iter_mut().zip(&cache.q[ft * mm..(ft + 1) * mm]) {
                        *acc += v * y;
                    }
                    for (acc, v) in bb.iter_mut().zip(&cache.p[ft * mm..(ft + 1) * mm]) {
                        *acc += v * y;
                    }
                }
            }
        }
        (a, b)
    }

    /// `z_so <- z_so sqrt(sum_ft ŷ tr(Q W_fo) / sum_ft ŷ tr(P W_fo))`.
    pub fn update_spatial_weights(&mut self) -> Result<()> {
        let m = self.observed.num_channels();
        let mm = m * m;
        let (f_len, s_len, o_len) = (self.observed.num_bins(), self.sources, self.weights.num_directions());
        let (a, b) = self.accumulate();
        for s in 0..s_len {
            for o in 0..o_len {
                let z = self.weights.get(s, o);
                if z == 0.0 {
                    continue;
                }
                let (mut num, mut den) = (0.0, 0.0);
                for f in 0..f_len {
                    let w = self.kernels.kernel(f, o);
                    let blk = (f * s_len + s) * mm..(f * s_len + s + 1) * mm;
                    num += linalg::trace_product_re(&a[blk.clone()], w, m);
                    den += linalg::trace_product_re(&b[blk], w, m);
                }
                if let Some(r) = mm_ratio(num, den) {
                    self.weights.set(s, o, z * r);
                }
            }
        }
        self.refresh()
    }

    /// Per `(f, o)`: solve `W C W = D` with `C = sum_s z_so B_fs` and
    /// `D = W' (sum_s z_so A_fs) W'`.
    pub fn update_doa_kernels(&mut self) -> Result<()> {
        let m = self.observed.num_channels();
        let mm = m * m;
        let (f_len, s_len, o_len) = (self.observed.num_bins(), self.sources, self.weights.num_directions());
        let (a, b) = self.accumulate();
        let mut c = vec![ZERO; mm];
        let mut d0 = vec![ZERO; mm];
        let mut tmp = vec![ZERO; mm];
        let mut d = vec![ZERO; mm];
        for f in 0..f_len {
            for o in 0..o_len {
                c.fill(ZERO);
                d0.fill(ZERO);
                let mut any = false;
                for s in 0..s_len {
                    let z = self.weights.get(s, o);
                    if z == 0.0 {
                        continue;
                    }
                    any = true;
                    let blk = (f * s_len + s) * mm..(f * s_len + s + 1) * mm;
                    for ((cc, dd), (bv, av)) in c.iter_mut().zip(d0.iter_mut()).zip(b[blk.clone()].iter().zip(&a[blk])) {
                        *cc += bv * z;
                        *dd += av * z;
                    }
                }
                if !any || c.iter().all(|v| *v == ZERO) {
                    continue;
                }
                let w_prev = self.kernels.kernel(f, o);
                linalg::matmul_into(w_prev, &d0, m, &mut tmp);
                linalg::matmul_into(&tmp, w_prev, m, &mut d);
                linalg::hermitize(&mut d, m);
                match solve_riccati(&c, &d, m) {
                    Ok(w) => self.kernels.kernel_mut(f, o).copy_from_slice(&w),
                    Err(_) => self.riccati_warnings += 1,
                }
            }
        }
        self.refresh()
    }

    /// `q_fts = tr(Q_ft H_fs)` and `p_fts = tr(P_ft H_fs)` as `(s, f, t)`.
    fn projected_traces(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.observed.num_channels();
        let mm = m * m;
        let (f_len, t_len, s_len) = (self.observed.num_bins(), self.observed.num_frames(), self.sources);
        let cache = self.cache();
        let mut q = vec![0.0; s_len * f_len * t_len];
        let mut p = vec![0.0; s_len * f_len * t_len];
        for s in 0..s_len {
            for f in 0..f_len {
                let h = cache.filter.block(f, s);
                for t in 0..t_len {
                    let ft = f * t_len + t;
                    let idx = (s * f_len + f) * t_len + t;
                    q[idx] = linalg::trace_product_re(&cache.q[ft * mm..(ft + 1) * mm], h, m);
                    p[idx] = linalg::trace_product_re(&cache.p[ft * mm..(ft + 1) * mm], h, m);
                }
            }
        }
        (q, p)
    }

    fn model_mut(&mut self) -> Result<&mut SpectralModel> {
        self.model
            .as_mut()
            .ok_or_else(|| Error::Config("no spectral model: bases and gains are fixed spectra".into()))
    }

    fn after_model_update(&mut self) -> Result<()> {
        self.spectra = compose_spectra(self.model.as_ref().expect("model present"));
        self.refresh()
    }

    /// `b_fks <- b_fks sqrt(sum_t g_kts q_fts / sum_t g_kts p_fts)`.
    pub fn update_bases(&mut self) -> Result<()> {
        let (q, p) = self.projected_traces();
        let (f_len, t_len) = (self.observed.num_bins(), self.observed.num_frames());
        let s_len = self.sources;
        let model = self.model_mut()?;
        let k_len = model.num_components();
        for s in 0..s_len {
            let src = model.source_mut(s);
            for f in 0..f_len {
                let qr = &q[(s * f_len + f) * t_len..(s * f_len + f + 1) * t_len];
                let pr = &p[(s * f_len + f) * t_len..(s * f_len + f + 1) * t_len];
                for k in 0..k_len {
                    let b = src.bases[f * k_len + k];
                    if b == 0.0 {
                        continue;
                    }
                    let g = &src.gains[k * t_len..(k + 1) * t_len];
                    let num: f64 = g.iter().zip(qr).map(|(a, b)| a * b).sum();
                    let den: f64 = g.iter().zip(pr).map(|(a, b)| a * b).sum();
                    if let Some(r) = mm_ratio(num, den) {
                        src.bases[f * k_len + k] = b * r;
                    }
                }
            }
        }
        self.after_model_update()
    }

    /// `g_kts <- g_kts sqrt(sum_f b_fks q_fts / sum_f b_fks p_fts)`.
    pub fn update_gains(&mut self) -> Result<()> {
        let (q, p) = self.projected_traces();
        let (f_len, t_len) = (self.observed.num_bins(), self.observed.num_frames());
        let s_len = self.sources;
        let model = self.model_mut()?;
        let k_len = model.num_components();
        let mut num = vec![0.0; k_len * t_len];
        let mut den = vec![0.0; k_len * t_len];
        for s in 0..s_len {
            let src = model.source_mut(s);
            num.fill(0.0);
            den.fill(0.0);
            for f in 0..f_len {
                let qr = &q[(s * f_len + f) * t_len..(s * f_len + f + 1) * t_len];
                let pr = &p[(s * f_len + f) * t_len..(s * f_len + f + 1) * t_len];
                for k in 0..k_len {
                    let b = src.bases[f * k_len + k];
                    let (nr, dr) = (&mut num[k * t_len..(k + 1) * t_len], &mut den[k * t_len..(k + 1) * t_len]);
                    for t in 0..t_len {
                        nr[t] += b * qr[t];
                        dr[t] += b * pr[t];
                    }
                }
            }
            for (i, g) in src.gains.iter_mut().enumerate() {
                if *g == 0.0 {
                    continue;
                }
                if let Some(r) = mm_ratio(num[i], den[i]) {
                    *g *= r;
                }
            }
        }
        self.after_model_update()
    }

    /// One pass over the free families in the order z, W, b, g, then
    /// records the cost.
    pub fn iterate(&mut self) -> Result<()> {
        if self.free.weights {
            self.update_spatial_weights()?;
        }
        if self.free.kernels {
            self.update_doa_kernels()?;
        }
        if self.free.bases {
            self.update_bases()?;
        }
        if self.free.gains {
            self.update_gains()?;
        }
        self.iteration += 1;
        self.cost_history.push(self.cost());
        Ok(())
    }

    pub fn run(&mut self, iterations: usize) -> Result<()> {
        for _ in 0..iterations {
            self.iterate()?;
        }
        Ok(())
    }

    /// `X̂` without the ridge.
    pub fn predicted(&self) -> ScmTensor {
        let obs = &self.observed;
        ScmTensor::from_blocks(self.cache().predicted.clone(), obs.num_channels(), obs.num_bins(), obs.num_frames())
            .expect("predicted tensor has the observed shape")
    }

    pub fn mixing_filter(&self) -> &MixingFilter {
        &self.cache().filter
    }
}

/// `sqrt(num / den)`, or `None` (parameter unchanged) when the ratio is
/// undefined.
#[inline]
fn mm_ratio(num: f64, den: f64) -> Option<f64> {
    let r = (num.max(0.0) / den).sqrt();
    (den > 0.0 && r.is_finite()).then_some(r)
}

fn compose_spectra(model: &SpectralModel) -> Vec<f64> {
    let n = model.num_bins() * model.num_frames();
    let mut out = vec![0.0; model.num_sources() * n];
    for s in 0..model.num_sources() {
        model.reconstruct_into(s, &mut out[s * n..(s + 1) * n]);
    }
    out
}

/// `X̂_ft = sum_s H_fs ŷ_fts` for the state's current parameters.
pub fn predict_scm(state: &FactorizationState) -> ScmTensor {
    state.predicted()
}

/// Multichannel IS divergence with a common ridge:
/// `sum_ft tr(X' P) - log det(X' P) - M`, `X' = X + δI`,
/// `P = (X̂ + δI)^-1`, `δ = ridge_rel tr(X) / M`.
pub fn is_cost(observed: &ScmTensor, predicted: &ScmTensor, ridge_rel: f64) -> Result<f64> {
    let m = observed.num_channels();
    if predicted.num_channels() != m
        || predicted.num_bins() != observed.num_bins()
        || predicted.num_frames() != observed.num_frames()
    {
        return Err(Error::Shape("observed and predicted SCM tensors differ in shape".into()));
    }
    let mut cost = 0.0;
    for f in 0..observed.num_bins() {
        for t in 0..observed.num_frames() {
            let x = observed.block(f, t);
            let delta = ridge_shift(linalg::trace(x, m).re, m, ridge_rel);
            let mut xr = x.to_vec();
            let mut xh = predicted.block(f, t).to_vec();
            for i in 0..m {
                xr[i * m + i] += delta;
                xh[i * m + i] += delta;
            }
            let ld_x = linalg::log_det_hpd(&xr, m)
                .ok_or_else(|| Error::Numeric(format!("observed SCM at ({f}, {t}) is not positive definite")))?;
            let fast = linalg::log_det_hpd(&xh, m).zip(linalg::invert(&xh, m));
            let (ld_h, p) = match fast {
                Some(v) => v,
                None => {
                    let mut p = vec![ZERO; m * m];
                    let ld = linalg::shifted_psd_logdet_inverse(predicted.block(f, t), m, delta, &mut p).ok_or_else(
                        || Error::Numeric(format!("predicted SCM at ({f}, {t}) is not positive definite")),
                    )?;
                    (ld, p)
                }
            };
            cost += linalg::trace_product_re(&xr, &p, m) - ld_x + ld_h - m as f64;
        }
    }
    if !cost.is_finite() {
        return Err(Error::Numeric(format!("cost is {cost}")));
    }
    Ok(cost)
}

/// Result of one optimization stage.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub kernels: DoaKernelSet,
    pub weights: SpatialWeights,
    pub model: Option<SpectralModel>,
    pub cost_history: Vec<f64>,
    pub riccati_warnings: usize,
}

impl From<FactorizationState> for StageOutput {
    fn from(s: FactorizationState) -> Self {
        Self {
            kernels: s.kernels,
            weights: s.weights,
            model: s.model,
            cost_history: s.cost_history,
            riccati_warnings: s.riccati_warnings,
        }
    }
}

/// Step 1: with `ŷ` held at the priors, alternate the `z` and `W` updates
/// from `z = 1/O`.
pub fn estimate_mixing_filter(
    observed: &ScmTensor,
    priors: &PriorSet,
    kernels: DoaKernelSet,
    iterations: usize,
    ridge_rel: f64,
) -> Result<StageOutput> {
    estimate_mixing_filter_with(observed, priors, kernels, iterations, ridge_rel, FreeParams::SPATIAL)
}

pub fn estimate_mixing_filter_with(
    observed: &ScmTensor,
    priors: &PriorSet,
    kernels: DoaKernelSet,
    iterations: usize,
    ridge_rel: f64,
    free: FreeParams,
) -> Result<StageOutput> {
    priors.check_grid(observed.num_bins(), observed.num_frames())?;
    let weights = SpatialWeights::uniform(priors.num_sources(), kernels.num_directions());
    let mut state =
        FactorizationState::with_fixed_spectra(observed.clone(), kernels, weights, priors.flattened(), free, ridge_rel)?;
    state.run(iterations)?;
    Ok(state.into())
}

/// Step 2: refine the spectral model under the spatial model of step 1,
/// updating the families the preset frees.
pub fn refine_sources(
    observed: &ScmTensor,
    kernels: DoaKernelSet,
    weights: SpatialWeights,
    model0: SpectralModel,
    free: FreeParams,
    iterations: usize,
    ridge_rel: f64,
) -> Result<StageOutput> {
    let mut state = FactorizationState::with_model(observed.clone(), kernels, weights, model0, free, ridge_rel)?;
    state.run(iterations)?;
    Ok(state.into())
}
