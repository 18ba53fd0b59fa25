//! Microphone geometry, the look-direction grid and DoA kernels.
//!
//! Steering is far-field: a plane wave from the look direction reaches mic
//! `m` with delay `tau_m = -(u . p_m) / c`, `p_m` measured from the array
//! centroid. For the 1 m pair, inter-mic phase wraps above `c / 2d`
//! (171.5 Hz at 343 m/s), so kernels of different directions alias there.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<[f64; 3]>,
    pub speed_of_sound: f64,
}

impl ArrayGeometry {
    pub fn new(mic_positions: Vec<[f64; 3]>, speed_of_sound: f64) -> Result<Self> {
        let geometry = Self {
            mic_positions,
            speed_of_sound,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Two mics on the x axis, `spacing` apart, centered at the origin.
    pub fn pair(spacing: f64) -> Self {
        Self {
            mic_positions: vec![[-spacing / 2.0, 0.0, 0.0], [spacing / 2.0, 0.0, 0.0]],
            speed_of_sound: SPEED_OF_SOUND,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mic_positions.is_empty() {
            return Err(Error::Config("array needs at least one microphone".into()));
        }
        if self.mic_positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("microphone positions must be finite".into()));
        }
        if !(self.speed_of_sound > 0.0) || !self.speed_of_sound.is_finite() {
            return Err(Error::Config("speed of sound must be positive".into()));
        }
        Ok(())
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.num_mics() as f64;
        let mut c = [0.0; 3];
        for p in &self.mic_positions {
            for k in 0..3 {
                c[k] += p[k] / n;
            }
        }
        c
    }

    /// Mic positions relative to the centroid.
    pub fn centered(&self) -> Vec<[f64; 3]> {
        let c = self.centroid();
        self.mic_positions
            .iter()
            .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
            .collect()
    }

    /// The same geometry translated so that its centroid sits at `center`.
    pub fn placed_at(&self, center: [f64; 3]) -> Vec<[f64; 3]> {
        self.centered()
            .into_iter()
            .map(|p| [p[0] + center[0], p[1] + center[1], p[2] + center[2]])
            .collect()
    }
}

/// Azimuth/elevation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    pub fn azimuth(azimuth: f64) -> Self {
        Self {
            azimuth,
            elevation: 0.0,
        }
    }

    /// Unit vector from the array toward the source.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (az, el) = (self.azimuth.to_radians(), self.elevation.to_radians());
        [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    directions: Vec<Direction>,
}

impl DirectionGrid {
    pub fn new(directions: Vec<Direction>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::Config("direction grid needs at least one direction".into()));
        }
        for d in &directions {
            if !(0.0..360.0).contains(&d.azimuth) || !(-90.0..=90.0).contains(&d.elevation) {
                return Err(Error::Config(format!(
                    "direction ({}, {}) outside azimuth [0, 360) / elevation [-90, 90]",
                    d.azimuth, d.elevation
                )));
            }
        }
        Ok(Self { directions })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn get(&self, o: usize) -> Direction {
        self.directions[o]
    }

    /// Index of the grid direction closest in azimuth (circular distance).
    pub fn nearest_azimuth(&self, azimuth: f64) -> usize {
        let dist = |a: f64| {
            let d = (a - azimuth).rem_euclid(360.0);
            d.min(360.0 - d)
        };
        (0..self.len())
            .min_by(|&a, &b| dist(self.directions[a].azimuth).total_cmp(&dist(self.directions[b].azimuth)))
            .unwrap()
    }
}

/// Uniform horizontal ring of `count` azimuths starting at 0 degrees.
pub fn build_direction_grid(count: usize) -> Result<DirectionGrid> {
    if count == 0 {
        return Err(Error::Config("direction count must be at least 1".into()));
    }
    let step = 360.0 / count as f64;
    DirectionGrid::new((0..count).map(|o| Direction::azimuth(o as f64 * step)).collect())
}

/// Far-field steering vector, component `m = exp(-j 2 pi f tau_m)`.
pub fn steering_vector(geometry: &ArrayGeometry, direction: Direction, freq_hz: f64) -> Vec<Complex64> {
    let u = direction.unit_vector();
    geometry
        .centered()
        .iter()
        .map(|p| {
            let tau = -(u[0] * p[0] + u[1] * p[1] + u[2] * p[2]) / geometry.speed_of_sound;
            Complex64::from_polar(1.0, -2.0 * PI * freq_hz * tau)
        })
        .collect()
}

/// `W_fo`, one M x M Hermitian PSD block per `(f, o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaKernelSet {
    data: Vec<Complex64>,
    channels: usize,
    bins: usize,
    directions: usize,
}

impl DoaKernelSet {
    pub fn from_blocks(data: Vec<Complex64>, channels: usize, bins: usize, directions: usize) -> Result<Self> {
        if data.len() != channels * channels * bins * directions {
            return Err(Error::Shape(format!(
                "kernel buffer of {} entries does not hold {bins}x{directions} blocks of {channels}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            channels,
            bins,
            directions,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn num_directions(&self) -> usize {
        self.directions
    }

    #[inline]
    pub fn kernel(&self, f: usize, o: usize) -> &[Complex64] {
        let mm = self.channels * self.channels;
        let start = (f * self.directions + o) * mm;
        &self.data[start..start + mm]
    }

    #[inline]
    pub fn kernel_mut(&mut self, f: usize, o: usize) -> &mut [Complex64] {
        let mm = self.channels * self.channels;
        let start = (f * self.directions + o) * mm;
        &mut self.data[start..start + mm]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

/// `W_fo = v v^H / M` with `v` the steering vector of direction `o` at the
/// centre frequency of bin `f`.
pub fn init_doa_kernels(
    geometry: &ArrayGeometry,
    grid: &DirectionGrid,
    bins: usize,
    fft_size: usize,
    sample_rate: f64,
) -> Result<DoaKernelSet> {
    geometry.validate()?;
    let m = geometry.num_mics();
    let mm = m * m;
    let mut data = vec![Complex64::new(0.0, 0.0); bins * grid.len() * mm];
    for f in 0..bins {
        let freq = f as f64 * sample_rate / fft_size as f64;
        for (o, dir) in grid.directions().iter().enumerate() {
            let v = steering_vector(geometry, *dir, freq);
            let block = &mut data[(f * grid.len() + o) * mm..(f * grid.len() + o + 1) * mm];
            for i in 0..m {
                for j in 0..m {
                    block[i * m + j] = v[i] * v[j].conj() / m as f64;
                }
            }
        }
    }
    DoaKernelSet::from_blocks(data, m, bins, grid.len())
}
