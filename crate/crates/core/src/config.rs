//! Run configuration shared by the pipeline and the command-line tool.
//!
//! Every field has a default, so an empty document is a complete
//! configuration of the reference setup: 2048-point STFT with hop 1024,
//! 200 iterations per stage, 60 look directions and the `free` preset.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, SPEED_OF_SOUND};
use crate::cnmf::{PresetName, VariantPreset, DEFAULT_ITERATIONS};
use crate::error::{Error, Result};
use crate::roomsim::{RoomSpec, REFERENCE_AZIMUTHS};
use crate::scm::DEFAULT_RIDGE_REL;
use crate::signal::{StftConfig, DEFAULT_SAMPLE_RATE};
use crate::synth::SynthKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub preset: PresetName,
    pub stft: StftConfig,
    pub array: ArrayConfig,
    pub model: ModelConfig,
    pub scene: SceneConfig,
    pub paths: PathsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            preset: PresetName::Free,
            stft: StftConfig::default(),
            array: ArrayConfig::default(),
            model: ModelConfig::default(),
            scene: SceneConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    /// Relative mic positions in meters; the array is re-centred on its
    /// centroid wherever it is placed.
    pub mic_positions: Vec<[f64; 3]>,
    pub speed_of_sound: f64,
    /// Look directions `O`, evenly spaced in azimuth.
    pub directions: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            mic_positions: ArrayGeometry::pair(0.05).mic_positions,
            speed_of_sound: SPEED_OF_SOUND,
            directions: 60,
        }
    }
}

impl ArrayConfig {
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.mic_positions.clone(), self.speed_of_sound)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Iterations of mixing-filter estimation.
    pub mixing_iterations: usize,
    /// Iterations of source refinement.
    pub refine_iterations: usize,
    /// Components `K` per source.
    pub components: usize,
    pub hals_iterations: usize,
    pub ridge_rel: f64,
    /// When false, refinement updates only bases and gains and keeps the
    /// mixing filter of the first stage.
    pub refine_spatial: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mixing_iterations: DEFAULT_ITERATIONS,
            refine_iterations: DEFAULT_ITERATIONS,
            components: 30,
            hals_iterations: 100,
            ridge_rel: DEFAULT_RIDGE_REL,
            refine_spatial: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub room: RoomSpec,
    pub sample_rate: f64,
    /// Length of synthesized dry signals in seconds.
    pub duration: f64,
    /// Source distance from the array centre in meters.
    pub distance: f64,
    /// Array centre in the room; defaults to the room centre at 1.5 m.
    pub array_center: Option<[f64; 3]>,
    /// Source 0 is the target (vocal); the rest form the accompaniment.
    pub sources: Vec<SourceConfig>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let kinds = [SynthKind::SpeechLike, SynthKind::Harmonic, SynthKind::NoiseLike, SynthKind::Harmonic];
        Self {
            room: RoomSpec::reference(),
            sample_rate: DEFAULT_SAMPLE_RATE,
            duration: 10.0,
            distance: 1.0,
            array_center: None,
            sources: REFERENCE_AZIMUTHS
                .iter()
                .zip(kinds)
                .map(|(az, kind)| SourceConfig {
                    azimuth: *az,
                    elevation: 0.0,
                    file: None,
                    synth: Some(kind),
                    gain: 1.0,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub azimuth: f64,
    #[serde(default)]
    pub elevation: f64,
    /// Mono WAV with the dry signal; takes precedence over `synth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthKind>,
    #[serde(default = "unit_gain")]
    pub gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<PathBuf>,
    /// SPEC1 prior files; several files are treated as per-channel
    /// estimates of the same sources.
    pub priors: Vec<PathBuf>,
    /// Reverberant source images, needed by the oracle preset.
    pub images: Vec<PathBuf>,
    /// Separated sources to score against `references`, in source order.
    pub estimates: Vec<PathBuf>,
    pub references: Vec<PathBuf>,
    /// Further scenes for a batch evaluation.
    pub scenes: Vec<EvalScene>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalScene {
    pub name: String,
    pub estimates: Vec<PathBuf>,
    pub references: Vec<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            mixture: None,
            priors: Vec::new(),
            images: Vec::new(),
            estimates: Vec::new(),
            references: Vec::new(),
            scenes: Vec::new(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl Config {
    pub fn variant(&self) -> VariantPreset {
        let preset = VariantPreset::new(self.preset);
        if self.model.refine_spatial {
            preset
        } else {
            preset.spectral_refinement_only()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.array.geometry()?;
        if self.array.directions == 0 {
            return Err(Error::Config("array.directions must be at least 1".into()));
        }
        if self.model.components == 0 {
            return Err(Error::Config("model.components must be at least 1".into()));
        }
        if !(self.model.ridge_rel >= 0.0) || !self.model.ridge_rel.is_finite() {
            return Err(Error::Config("model.ridge_rel must be finite and nonnegative".into()));
        }
        self.scene.room.validate()?;
        if !(self.scene.sample_rate > 0.0) || !self.scene.sample_rate.is_finite() {
            return Err(Error::Config("scene.sample_rate must be positive".into()));
        }
        if !(self.scene.duration > 0.0) || !(self.scene.distance > 0.0) {
            return Err(Error::Config("scene.duration and scene.distance must be positive".into()));
        }
        for (i, s) in self.scene.sources.iter().enumerate() {
            if s.file.is_none() && s.synth.is_none() {
                return Err(Error::Config(format!("scene source {i} needs a file or a synth kind")));
            }
            if !s.gain.is_finite() {
                return Err(Error::Config(format!("scene source {i} has a non-finite gain")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_setup() {
        let c = Config::default();
        assert_eq!(c.stft.fft_size, 2048);
        assert_eq!(c.stft.hop, 1024);
        assert_eq!(c.model.mixing_iterations, 200);
        assert_eq!(c.model.refine_iterations, 200);
        assert_eq!(c.array.directions, 60);
        assert_eq!(c.preset, PresetName::Free);
        assert_eq!(c.scene.sources.len(), 4);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut c = Config::default();
        c.array.directions = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = Config::default();
        c.stft.hop = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = Config::default();
        c.model.ridge_rel = -1.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn json_round_trip() {
        let c = Config::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<Config>(&text).unwrap(), c);
    }
}
