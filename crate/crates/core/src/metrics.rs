//! BSS_EVAL style source metrics (SDR, SIR, SAR).
//!
//! An estimate is split by least-squares projection onto delayed copies of
//! the references. With `L` delays `0..L` and `N` samples every signal is
//! zero-padded to `N + L - 1`:
//!
//! ```text
//! s_target = P_j(e)           span of the target's delayed copies
//! e_interf = P_all(e) - s_target
//! e_artif  = e - P_all(e)
//! ```
//!
//! Multichannel signals are scored channel by channel against the
//! same-channel references and the dB values are averaged.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::signal::{fft_convolve, fft_correlate, AudioClip};

pub const DEFAULT_FILTER_LEN: usize = 512;
const RIDGE_REL: f64 = 1e-12;

/// Projection components of one estimate channel, each `N + L - 1` long.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub estimate: Vec<f64>,
    pub target: Vec<f64>,
    pub interference: Vec<f64>,
    pub artifacts: Vec<f64>,
}

impl Decomposition {
    /// `(SDR, SIR, SAR)` in dB.
    pub fn ratios(&self) -> (f64, f64, f64) {
        let st = energy(&self.target);
        let ei = energy(&self.interference);
        let ea = energy(&self.artifacts);
        let ia: f64 = self.interference.iter().zip(&self.artifacts).map(|(a, b)| (a + b) * (a + b)).sum();
        let ti: f64 = self.target.iter().zip(&self.interference).map(|(a, b)| (a + b) * (a + b)).sum();
        (db(st, ia), db(st, ei), db(ti, ea))
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn db(num: f64, den: f64) -> f64 {
    let tiny = f64::MIN_POSITIVE;
    10.0 * ((num + tiny) / (den + tiny)).log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelScore {
    pub source: usize,
    pub channel: usize,
    pub sdr: f64,
    pub sir: f64,
    pub sar: f64,
}

/// Per-source scores averaged over channels, plus the per-channel detail.
#[derive(Debug, Clone, PartialEq)]
pub struct BssScores {
    pub sdr: Vec<f64>,
    pub sir: Vec<f64>,
    pub sar: Vec<f64>,
    pub per_channel: Vec<ChannelScore>,
}

impl BssScores {
    pub fn num_sources(&self) -> usize {
        self.sdr.len()
    }
}

/// Projector onto the delayed span of a set of reference signals.
struct Projector {
    refs: Vec<Vec<f64>>,
    len: usize,
    chol: Cholesky<f64, Dyn>,
}

impl Projector {
    fn new(refs: Vec<Vec<f64>>, len: usize, ids: &[usize], channel: usize) -> Result<Self> {
        let k = refs.len();
        let n = k * len;
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for i in 0..k {
            for j in 0..k {
                // corr_ji[d] = sum_n r_j[n + d] r_i[n]
                let corr_ji = fft_correlate(&refs[j], &refs[i], len);
                let corr_ij = fft_correlate(&refs[i], &refs[j], len);
                for a in 0..len {
                    for b in 0..len {
                        gram[(i * len + a, j * len + b)] = if a >= b { corr_ji[a - b] } else { corr_ij[b - a] };
                    }
                }
            }
        }
        let mean_diag = (0..n).map(|i| gram[(i, i)]).sum::<f64>() / n as f64;
        let ridge = if mean_diag > 0.0 { RIDGE_REL * mean_diag } else { RIDGE_REL };
        for i in 0..n {
            gram[(i, i)] += ridge;
        }
        let deficient = |i: usize| {
            Error::Numeric(format!(
                "rank-deficient projection system: reference {} in channel {channel} is (nearly) spanned by {:?}",
                ids[i / len],
                ids
            ))
        };
        let chol = Cholesky::new(gram).ok_or_else(|| deficient(0))?;
        // a pivot at the ridge level means a delayed copy lies in the span of the others
        let l = chol.l_dirty();
        if let Some(i) = (0..n).find(|&i| l[(i, i)] * l[(i, i)] <= 1e3 * ridge) {
            return Err(deficient(i));
        }
        Ok(Self { refs, len, chol })
    }

    fn project(&self, estimate: &[f64]) -> Vec<f64> {
        let k = self.refs.len();
        let mut rhs = DVector::<f64>::zeros(k * self.len);
        for (j, r) in self.refs.iter().enumerate() {
            // sum_n e[n] r_j[n - a]
            for (a, v) in fft_correlate(estimate, r, self.len).into_iter().enumerate() {
                rhs[j * self.len + a] = v;
            }
        }
        let coef = self.chol.solve(&rhs);
        let out_len = estimate.len() + self.len - 1;
        let mut out = vec![0.0; out_len];
        for (j, r) in self.refs.iter().enumerate() {
            let c: Vec<f64> = (0..self.len).map(|a| coef[j * self.len + a]).collect();
            for (o, v) in out.iter_mut().zip(fft_convolve(r, &c)) {
                *o += v;
            }
        }
        out
    }
}

fn check_inputs(estimates: &[AudioClip], references: &[AudioClip], filter_len: usize) -> Result<(usize, usize)> {
    if references.is_empty() {
        return Err(Error::EmptyInput("no reference sources".into()));
    }
    if estimates.len() != references.len() {
        return Err(Error::Shape(format!(
            "{} estimates for {} references",
            estimates.len(),
            references.len()
        )));
    }
    if filter_len == 0 {
        return Err(Error::Config("filter length must be at least 1".into()));
    }
    let (m, n) = (references[0].num_channels(), references[0].len());
    for (i, c) in estimates.iter().chain(references).enumerate() {
        if c.num_channels() != m || c.len() != n {
            return Err(Error::Shape(format!(
                "signal {i} is {}ch x {} samples, expected {m}ch x {n}",
                c.num_channels(),
                c.len()
            )));
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput("signals have no samples".into()));
    }
    Ok((m, n))
}

/// Projection components of every `(source, channel)` estimate, indexed
/// `[source][channel]`.
pub fn decompose(estimates: &[AudioClip], references: &[AudioClip], filter_len: usize) -> Result<Vec<Vec<Decomposition>>> {
    let (m_len, _) = check_inputs(estimates, references, filter_len)?;
    let s_len = references.len();
    let mut out: Vec<Vec<Decomposition>> = (0..s_len).map(|_| Vec::with_capacity(m_len)).collect();
    for m in 0..m_len {
        let refs: Vec<Vec<f64>> = references.iter().map(|r| r.channel(m).to_vec()).collect();
        let ids: Vec<usize> = (0..s_len).collect();
        let all = Projector::new(refs.clone(), filter_len, &ids, m)?;
        for j in 0..s_len {
            let own = Projector::new(vec![refs[j].clone()], filter_len, &[j], m)?;
            let e = estimates[j].channel(m);
            let target = own.project(e);
            let p_all = all.project(e);
            let mut estimate = e.to_vec();
            estimate.resize(e.len() + filter_len - 1, 0.0);
            let interference = p_all.iter().zip(&target).map(|(a, b)| a - b).collect();
            let artifacts = estimate.iter().zip(&p_all).map(|(a, b)| a - b).collect();
            out[j].push(Decomposition {
                estimate,
                target,
                interference,
                artifacts,
            });
        }
    }
    Ok(out)
}

/// SDR, SIR and SAR of estimate `j` against reference `j`.
pub fn bss_eval(estimates: &[AudioClip], references: &[AudioClip], filter_len: usize) -> Result<BssScores> {
    let parts = decompose(estimates, references, filter_len)?;
    let mut scores = BssScores {
        sdr: Vec::new(),
        sir: Vec::new(),
        sar: Vec::new(),
        per_channel: Vec::new(),
    };
    for (source, chans) in parts.iter().enumerate() {
        let (mut sdr, mut sir, mut sar) = (0.0, 0.0, 0.0);
        for (channel, d) in chans.iter().enumerate() {
            let (a, b, c) = d.ratios();
            scores.per_channel.push(ChannelScore {
                source,
                channel,
                sdr: a,
                sir: b,
                sar: c,
            });
            sdr += a;
            sir += b;
            sar += c;
        }
        let m = chans.len() as f64;
        scores.sdr.push(sdr / m);
        scores.sir.push(sir / m);
        scores.sar.push(sar / m);
    }
    Ok(scores)
}

/// Linear-interpolation percentile of sorted data, `p` in `[0, 1]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("no values to summarize".into()));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            q25: percentile(&v, 0.25),
            median: percentile(&v, 0.5),
            q75: percentile(&v, 0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSummary {
    pub source: usize,
    pub sdr: Quartiles,
    pub sir: Quartiles,
    pub sar: Quartiles,
}

/// Per-source quartiles of each metric across a list of evaluations.
pub fn summarize(scores: &[BssScores]) -> Result<Vec<SourceSummary>> {
    let first = scores
        .first()
        .ok_or_else(|| Error::EmptyInput("no scores to summarize".into()))?;
    let s_len = first.num_sources();
    if scores.iter().any(|s| s.num_sources() != s_len) {
        return Err(Error::Shape("score sets have different source counts".into()));
    }
    (0..s_len)
        .map(|s| {
            let col = |pick: fn(&BssScores) -> &Vec<f64>| scores.iter().map(|x| pick(x)[s]).collect::<Vec<_>>();
            Ok(SourceSummary {
                source: s,
                sdr: Quartiles::of(&col(|x| &x.sdr))?,
                sir: Quartiles::of(&col(|x| &x.sir))?,
                sar: Quartiles::of(&col(|x| &x.sar))?,
            })
        })
        .collect()
}

/// `scene,source,channel,sdr,sir,sar`, one row per scene and source with
/// the channel-averaged scores (`channel` reads `mean`).
pub fn scores_csv(scores: &[(String, BssScores)]) -> String {
    let mut out = String::from("scene,source,channel,sdr,sir,sar\n");
    for (scene, s) in scores {
        for j in 0..s.num_sources() {
            let _ = writeln!(out, "{scene},{j},mean,{:.6},{:.6},{:.6}", s.sdr[j], s.sir[j], s.sar[j]);
        }
    }
    out
}

/// Fixed-width text table of per-source medians and quartiles.
pub fn summary_table(summary: &[SourceSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<8}{:<8}{:>10}{:>10}{:>10}", "source", "metric", "q25", "median", "q75");
    for s in summary {
        for (name, q) in [("SDR", s.sdr), ("SIR", s.sir), ("SAR", s.sar)] {
            let _ = writeln!(out, "{:<8}{:<8}{:>10.2}{:>10.2}{:>10.2}", s.source, name, q.q25, q.median, q.q75);
        }
    }
    out
}
