//! Shoebox image-source room simulation.
//!
//! Walls share one frequency-independent reflection coefficient derived from
//! the target T60, either through Sabine's formula or by matching the decay
//! of the image model itself (the default). Every image contributes
//! `prod(reflections) / (4 pi r)` at a fractional delay `r / c`, rendered with
//! a 16-tap Hann-windowed sinc.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, Direction};
use crate::error::{Error, Result};
use crate::signal::{fft_convolve, AudioClip};

/// Half-width of the fractional-delay interpolator; 16 taps in total.
const SINC_HALF_TAPS: i64 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// `(Lx, Ly, Lz)` in meters.
    pub dimensions: [f64; 3],
    /// Target reverberation time in seconds; 0 renders the direct path only.
    pub t60: f64,
    /// Upper bound on the total reflection count of an image. `None` keeps
    /// every image that arrives within the response length.
    #[serde(default)]
    pub max_image_order: Option<u32>,
    #[serde(default = "default_speed")]
    pub speed_of_sound: f64,
    #[serde(default)]
    pub absorption_model: AbsorptionModel,
}

/// How the wall reflection coefficient follows from the target T60.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbsorptionModel {
    /// `alpha = 0.161 V / (S T60)`. Assumes a diffuse field; in long, low
    /// rooms the image model then decays markedly slower than the target.
    Sabine,
    /// Reflection coefficient chosen so the Schroeder decay (-5 to -35 dB)
    /// of the image energies in a reference source/mic layout hits the
    /// target T60.
    #[default]
    Calibrated,
}

fn default_speed() -> f64 {
    crate::array::SPEED_OF_SOUND
}

impl RoomSpec {
    /// 7 x 12 x 3 m, T60 = 650 ms.
    pub fn reference() -> Self {
        Self {
            dimensions: [7.0, 12.0, 3.0],
            t60: 0.65,
            max_image_order: None,
            speed_of_sound: default_speed(),
            absorption_model: AbsorptionModel::Calibrated,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Config("room dimensions must be positive".into()));
        }
        if !(self.t60 >= 0.0) || !self.t60.is_finite() {
            return Err(Error::Config("t60 must be nonnegative".into()));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::Config("speed of sound must be positive".into()));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + y * z + x * z)
    }

    /// Sabine absorption `0.161 V / (S T60)`, capped at 1.
    pub fn absorption(&self) -> f64 {
        if self.t60 == 0.0 {
            return 1.0;
        }
        (0.161 * self.volume() / (self.surface() * self.t60)).min(1.0)
    }

    /// Wall pressure reflection in `[0, 1)`: `sqrt(1 - alpha)` under
    /// [`AbsorptionModel::Sabine`], the decay-matched value otherwise.
    pub fn reflection(&self) -> f64 {
        match self.absorption_model {
            AbsorptionModel::Sabine => self.sabine_reflection(),
            AbsorptionModel::Calibrated => calibrated_reflection(self),
        }
    }

    fn sabine_reflection(&self) -> f64 {
        (1.0 - self.absorption()).max(0.0).sqrt().min(1.0 - 1e-12)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        p.iter().zip(&self.dimensions).all(|(v, d)| *v > 0.0 && *v < *d)
    }
}

fn check_inside(room: &RoomSpec, p: [f64; 3], what: &str) -> Result<()> {
    if room.contains(p) {
        Ok(())
    } else {
        Err(Error::Geometry(format!(
            "{what} at ({}, {}, {}) is not strictly inside the room",
            p[0], p[1], p[2]
        )))
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Coordinate of image `u` of a point at `s` on an axis of length `len`.
fn image_coordinate(u: i64, s: f64, len: f64) -> f64 {
    if u.rem_euclid(2) == 0 {
        u as f64 * len + s
    } else {
        (u + 1) as f64 * len - s
    }
}

fn add_fractional_impulse(h: &mut [f64], delay: f64, amplitude: f64) {
    let center = delay.floor() as i64;
    for n in (center - SINC_HALF_TAPS + 1)..=(center + SINC_HALF_TAPS) {
        if n < 0 || n as usize >= h.len() {
            continue;
        }
        let x = n as f64 - delay;
        if x.abs() >= SINC_HALF_TAPS as f64 {
            continue;
        }
        let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
        let window = 0.5 * (1.0 + (PI * x / SINC_HALF_TAPS as f64).cos());
        h[n as usize] += amplitude * sinc * window;
    }
}

/// Width of the energy histogram bins used for calibration, seconds.
const CALIBRATION_BIN: f64 = 1e-3;

/// Schroeder T60 of binned image energies `hist[bin][order]` for a given
/// reflection coefficient; infinite when the decay never reaches -35 dB.
fn histogram_t60(hist: &[Vec<f64>], beta: f64) -> f64 {
    let b2 = beta * beta;
    let energy: Vec<f64> = hist
        .iter()
        .map(|row| row.iter().rev().fold(0.0, |acc, e| acc * b2 + e))
        .collect();
    let mut edc = vec![0.0; energy.len()];
    let mut acc = 0.0;
    for i in (0..energy.len()).rev() {
        acc += energy[i];
        edc[i] = acc;
    }
    let total = edc[0];
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut reached = false;
    for (i, e) in edc.iter().enumerate() {
        let db = 10.0 * (e / total).log10();
        if db < -35.0 {
            reached = true;
            break;
        }
        if db <= -5.0 {
            let x = i as f64 * CALIBRATION_BIN;
            n += 1.0;
            sx += x;
            sy += db;
            sxx += x * x;
            sxy += x * db;
        }
    }
    if !reached {
        return f64::INFINITY;
    }
    if n < 2.0 {
        return 0.0;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    -60.0 / slope
}

fn calibrated_reflection(room: &RoomSpec) -> f64 {
    if room.t60 == 0.0 {
        return 0.0;
    }
    let [lx, ly, lz] = room.dimensions;
    let src = [0.3 * lx, 0.4 * ly, 0.45 * lz];
    let mic = [0.6 * lx, 0.55 * ly, 0.5 * lz];
    let bins = (room.t60 / CALIBRATION_BIN).ceil() as usize + 1;
    let max_dist = room.t60 * room.speed_of_sound;
    let mut hist: Vec<Vec<f64>> = vec![Vec::new(); bins];
    // the reference layout is inside by construction
    visit_images(room, src, mic, max_dist, |r, order| {
        let bin = ((r / room.speed_of_sound) / CALIBRATION_BIN) as usize;
        if bin < bins {
            let row = &mut hist[bin];
            if row.len() <= order as usize {
                row.resize(order as usize + 1, 0.0);
            }
            row[order as usize] += 1.0 / (r * r);
        }
    });
    let (mut lo, mut hi) = (0.0, 1.0 - 1e-12);
    if histogram_t60(&hist, lo) >= room.t60 {
        return lo;
    }
    if histogram_t60(&hist, hi) <= room.t60 {
        return hi;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if histogram_t60(&hist, mid) < room.t60 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Number of images `simulate_rir` sums for this configuration, direct path
/// included.
pub fn count_images(room: &RoomSpec, src: [f64; 3], mic: [f64; 3], sample_rate: f64) -> Result<usize> {
    let mut count = 0;
    for_each_image(room, src, mic, sample_rate, |_, _| count += 1)?;
    Ok(count)
}

fn response_length(room: &RoomSpec, direct: f64, sample_rate: f64) -> usize {
    let seconds = direct / room.speed_of_sound + room.t60;
    (seconds * sample_rate).ceil() as usize + 2 * SINC_HALF_TAPS as usize
}

fn for_each_image(
    room: &RoomSpec,
    src: [f64; 3],
    mic: [f64; 3],
    sample_rate: f64,
    mut visit: impl FnMut(f64, u32),
) -> Result<usize> {
    room.validate()?;
    check_inside(room, src, "source")?;
    check_inside(room, mic, "microphone")?;
    let direct = distance(src, mic);
    if direct < 1e-9 {
        return Err(Error::Geometry("source and microphone coincide".into()));
    }
    let len = response_length(room, direct, sample_rate);
    if room.t60 == 0.0 {
        visit(direct, 0);
        return Ok(len);
    }
    let max_dist = len as f64 / sample_rate * room.speed_of_sound;
    visit_images(room, src, mic, max_dist, visit);
    Ok(len)
}

/// Every image within `max_dist` of the mic, with its reflection count.
fn visit_images(room: &RoomSpec, src: [f64; 3], mic: [f64; 3], max_dist: f64, mut visit: impl FnMut(f64, u32)) {
    let max_order = room.max_image_order.map_or(u32::MAX, |o| o);
    let bound = |axis: usize| (max_dist / room.dimensions[axis]).ceil() as i64 + 1;
    let (bx, by, bz) = (bound(0), bound(1), bound(2));
    for u in -bx..=bx {
        let dx = image_coordinate(u, src[0], room.dimensions[0]) - mic[0];
        for v in -by..=by {
            let dy = image_coordinate(v, src[1], room.dimensions[1]) - mic[1];
            let dxy2 = dx * dx + dy * dy;
            if dxy2 > max_dist * max_dist {
                continue;
            }
            for w in -bz..=bz {
                let order = (u.unsigned_abs() + v.unsigned_abs() + w.unsigned_abs()) as u64;
                if order > max_order as u64 {
                    continue;
                }
                let dz = image_coordinate(w, src[2], room.dimensions[2]) - mic[2];
                let r = (dxy2 + dz * dz).sqrt();
                if r > max_dist {
                    continue;
                }
                visit(r, order as u32);
            }
        }
    }
}

/// Single-channel room impulse response from `src` to `mic`.
pub fn simulate_rir(room: &RoomSpec, src: [f64; 3], mic: [f64; 3], sample_rate: f64) -> Result<AudioClip> {
    room.validate()?;
    rir_with_reflection(room, room.reflection(), src, mic, sample_rate)
}

fn rir_with_reflection(room: &RoomSpec, beta: f64, src: [f64; 3], mic: [f64; 3], sample_rate: f64) -> Result<AudioClip> {
    let c = room.speed_of_sound;
    let mut images = Vec::new();
    let len = for_each_image(room, src, mic, sample_rate, |r, order| images.push((r, order)))?;
    let mut h = vec![0.0; len];
    for (r, order) in images {
        let amplitude = beta.powi(order as i32) / (4.0 * PI * r);
        add_fractional_impulse(&mut h, r / c * sample_rate, amplitude);
    }
    AudioClip::mono(h, sample_rate)
}

#[derive(Debug, Clone)]
pub struct SceneSource {
    pub position: [f64; 3],
    /// Dry mono signal.
    pub signal: AudioClip,
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub sources: Vec<SceneSource>,
    /// Absolute microphone positions in the room.
    pub mics: Vec<[f64; 3]>,
}

impl SceneSpec {
    /// Sources on a circle of `distance` meters around the array centre, at
    /// the given directions.
    pub fn around_array(
        geometry: &ArrayGeometry,
        center: [f64; 3],
        placements: &[(Direction, f64)],
        signals: Vec<AudioClip>,
    ) -> Result<Self> {
        if placements.len() != signals.len() {
            return Err(Error::Shape(format!(
                "{} placements for {} source signals",
                placements.len(),
                signals.len()
            )));
        }
        let sources = placements
            .iter()
            .zip(signals)
            .map(|((dir, dist), signal)| {
                let u = dir.unit_vector();
                SceneSource {
                    position: [center[0] + dist * u[0], center[1] + dist * u[1], center[2] + dist * u[2]],
                    signal,
                }
            })
            .collect();
        Ok(Self {
            sources,
            mics: geometry.placed_at(center),
        })
    }
}

/// Default array position: room centre at 1.5 m height.
pub fn default_array_center(room: &RoomSpec) -> [f64; 3] {
    [room.dimensions[0] / 2.0, room.dimensions[1] / 2.0, 1.5]
}

/// Source azimuths of the reference setup, degrees, all at 0 elevation and
/// 1 m from the array centre.
pub const REFERENCE_AZIMUTHS: [f64; 4] = [0.0, 45.0, 90.0, 135.0];

/// Array spacings of the reference setup in meters.
pub const REFERENCE_SPACINGS: [f64; 2] = [0.05, 1.0];

/// The reference scene: four sources at [`REFERENCE_AZIMUTHS`], 1 m away, in
/// [`RoomSpec::reference`], with a two-mic array of the given spacing.
pub fn reference_scene(spacing: f64, signals: Vec<AudioClip>) -> Result<(RoomSpec, SceneSpec)> {
    let room = RoomSpec::reference();
    let placements: Vec<(Direction, f64)> = REFERENCE_AZIMUTHS.iter().map(|a| (Direction::azimuth(*a), 1.0)).collect();
    if signals.len() != placements.len() {
        return Err(Error::Shape(format!("reference scene needs 4 signals, got {}", signals.len())));
    }
    let scene = SceneSpec::around_array(&ArrayGeometry::pair(spacing), default_array_center(&room), &placements, signals)?;
    Ok((room, scene))
}

/// Output of [`render_mixture`].
#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub mixture: AudioClip,
    /// One M-channel reverberant image per source.
    pub images: Vec<AudioClip>,
}

/// Convolves each dry source with its per-mic responses (`rirs[s][m]`) and
/// sums the images. All outputs share the longest full-convolution length.
pub fn render_images(dry: &[AudioClip], rirs: &[Vec<Vec<f64>>]) -> Result<RenderedScene> {
    if dry.is_empty() {
        return Err(Error::EmptyInput("scene has no sources".into()));
    }
    if dry.len() != rirs.len() {
        return Err(Error::Shape("one set of responses per source required".into()));
    }
    let rate = dry[0].sample_rate();
    if dry.iter().any(|d| d.sample_rate() != rate) {
        return Err(Error::Shape("dry sources have different sample rates".into()));
    }
    let mics = rirs[0].len();
    if mics == 0 || rirs.iter().any(|r| r.len() != mics) {
        return Err(Error::Shape("every source needs one response per microphone".into()));
    }
    let mut images = Vec::with_capacity(dry.len());
    for (src, responses) in dry.iter().zip(rirs) {
        if src.num_channels() != 1 {
            return Err(Error::Shape("dry sources must be mono".into()));
        }
        let channels = responses.iter().map(|h| fft_convolve(src.channel(0), h)).collect();
        images.push(channels);
    }
    let len = images
        .iter()
        .flat_map(|img: &Vec<Vec<f64>>| img.iter().map(Vec::len))
        .max()
        .unwrap_or(0);
    let images: Vec<AudioClip> = images
        .into_iter()
        .map(|mut chans| {
            for c in &mut chans {
                c.resize(len, 0.0);
            }
            AudioClip::new(chans, rate)
        })
        .collect::<Result<_>>()?;
    // fixed summation order: source 0, 1, ...
    let mut mixture = vec![vec![0.0; len]; mics];
    for img in &images {
        for (acc, ch) in mixture.iter_mut().zip(img.channels()) {
            for (a, x) in acc.iter_mut().zip(ch) {
                *a += x;
            }
        }
    }
    Ok(RenderedScene {
        mixture: AudioClip::new(mixture, rate)?,
        images,
    })
}

/// Simulates every source-to-mic response and renders the scene.
pub fn render_mixture(scene: &SceneSpec, room: &RoomSpec) -> Result<RenderedScene> {
    let dry: Vec<AudioClip> = scene.sources.iter().map(|s| s.signal.clone()).collect();
    let rate = dry
        .first()
        .ok_or_else(|| Error::EmptyInput("scene has no sources".into()))?
        .sample_rate();
    if dry.iter().any(|d| d.sample_rate() != rate) {
        return Err(Error::Shape("dry sources have different sample rates".into()));
    }
    room.validate()?;
    let beta = room.reflection();
    let rirs = scene
        .sources
        .iter()
        .map(|s| {
            scene
                .mics
                .iter()
                .map(|m| rir_with_reflection(room, beta, s.position, *m, rate).map(|c| c.into_channels().remove(0)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    render_images(&dry, &rirs)
}
