//! Deterministic synthetic dry signals for simulated scenes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::signal::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Voiced syllables with gliding pitch, formant-shaped harmonics and pauses.
    SpeechLike,
    /// Slowly modulated lowpass-tilted noise.
    NoiseLike,
    /// Sustained chords of a few harmonic tones.
    Harmonic,
}

pub fn generate(kind: SynthKind, len: usize, sample_rate: f64, seed: u64) -> Result<AudioClip> {
    let samples = match kind {
        SynthKind::SpeechLike => speech_like(len, sample_rate, seed),
        SynthKind::NoiseLike => noise_like(len, sample_rate, seed),
        SynthKind::Harmonic => harmonic(len, sample_rate, seed),
    };
    AudioClip::mono(samples, sample_rate)
}

fn normalize(mut x: Vec<f64>, rms: f64) -> Vec<f64> {
    let cur = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if cur > 0.0 {
        for v in &mut x {
            *v *= rms / cur;
        }
    }
    x
}

fn formant_gain(freq: f64, formants: &[(f64, f64)]) -> f64 {
    formants
        .iter()
        .map(|(fc, bw)| 1.0 / (1.0 + ((freq - fc) / bw).powi(2)))
        .sum::<f64>()
        + 0.02
}

pub fn speech_like(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let mut pos = (rng.random_range(0.02..0.1) * sample_rate) as usize;
    while pos < len {
        let dur = (rng.random_range(0.12..0.35) * sample_rate) as usize;
        let f0_start = rng.random_range(110.0..230.0);
        let f0_end = f0_start * rng.random_range(0.8..1.25);
        let formants = [
            (rng.random_range(300.0..850.0), 90.0),
            (rng.random_range(900.0..2300.0), 140.0),
            (rng.random_range(2400.0..3200.0), 220.0),
        ];
        let mut phase = 0.0;
        for i in 0..dur.min(len - pos) {
            let frac = i as f64 / dur as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            phase += 2.0 * PI * f0 / sample_rate;
            let env = (PI * frac).sin().powf(0.6);
            let mut v = 0.0;
            let mut h = 1;
            while h as f64 * f0 < (sample_rate / 2.0).min(5000.0) {
                let freq = h as f64 * f0;
                v += formant_gain(freq, &formants) * (h as f64 * phase).sin() / (h as f64).sqrt();
                h += 1;
            }
            out[pos + i] += env * v;
        }
        pos += dur + (rng.random_range(0.03..0.2) * sample_rate) as usize;
    }
    normalize(out, 0.1)
}

pub fn noise_like(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mod_rate = rng.random_range(0.5..2.0);
    let mod_phase = rng.random_range(0.0..2.0 * PI);
    // two one-pole lowpass sections give a tilted spectrum
    let a = (-2.0 * PI * 2500.0 / sample_rate).exp();
    let (mut s1, mut s2) = (0.0, 0.0);
    let out = (0..len)
        .map(|n| {
            let w: f64 = StandardNormal.sample(&mut rng);
            s1 = a * s1 + (1.0 - a) * w;
            s2 = a * s2 + (1.0 - a) * s1;
            let env = 1.0 + 0.5 * (2.0 * PI * mod_rate * n as f64 / sample_rate + mod_phase).sin();
            env * (0.7 * s2 + 0.3 * s1)
        })
        .collect();
    normalize(out, 0.1)
}

pub fn harmonic(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let mut pos = 0;
    while pos < len {
        let dur = (rng.random_range(0.4..1.0) * sample_rate) as usize;
        let root = 55.0 * 2f64.powf(rng.random_range(0..24) as f64 / 12.0);
        let notes = [root, root * 1.26, root * 1.5];
        for i in 0..dur.min(len - pos) {
            let t = i as f64 / sample_rate;
            let env = (-(t * 3.0)).exp() * (1.0 - (-(t * 200.0)).exp());
            let mut v = 0.0;
            for f in notes {
                for h in 1..8 {
                    if f * h as f64 >= sample_rate / 2.0 {
                        break;
                    }
                    v += (2.0 * PI * f * h as f64 * t).sin() / h as f64;
                }
            }
            out[pos + i] += env * v;
        }
        pos += dur;
    }
    normalize(out, 0.1)
}
