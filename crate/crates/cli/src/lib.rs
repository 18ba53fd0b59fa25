//! The `simulate`, `separate` and `evaluate` commands behind the
//! `doa-cnmf` binary.

use std::fs;
use std::path::{Path, PathBuf};

use doa_cnmf::array::Direction;
use doa_cnmf::cnmf::{PresetName, PriorSource};
use doa_cnmf::config::Config;
use doa_cnmf::metrics::{bss_eval, scores_csv, summarize, summary_table, BssScores, DEFAULT_FILTER_LEN};
use doa_cnmf::priors::{load_prior, oracle_prior, random_prior, select_predominant_channel, PriorSet, Provenance};
use doa_cnmf::roomsim::{default_array_center, render_mixture, SceneSpec};
use doa_cnmf::separation::run_pipeline;
use doa_cnmf::signal::AudioClip;
use doa_cnmf::synth::generate;
use doa_cnmf::wav::{load_wav, save_wav};
use doa_cnmf::{Error, Result};

/// Process exit code for an error: 2 configuration, 3 data or format,
/// 4 numeric failure.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn config_to_toml(cfg: &Config) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

/// Command-line flags that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(p) = &self.preset {
            cfg.preset = p.parse()?;
        }
        if let Some(out) = &self.out {
            cfg.paths.out_dir = out.clone();
        }
        cfg.validate()
    }
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

/// Renders the configured scene; writes `mixture.wav` and `image_<s>.wav`.
/// Returns the written paths and a human-readable summary.
pub fn cmd_simulate(cfg: &Config) -> Result<(Vec<PathBuf>, String)> {
    let scene_cfg = &cfg.scene;
    if scene_cfg.sources.is_empty() {
        return Err(Error::Config("scene has no sources".into()));
    }
    let rate = scene_cfg.sample_rate;
    let len = (scene_cfg.duration * rate).round() as usize;
    let mut signals = Vec::with_capacity(scene_cfg.sources.len());
    let mut placements = Vec::with_capacity(scene_cfg.sources.len());
    for (i, src) in scene_cfg.sources.iter().enumerate() {
        let clip = match (&src.file, src.synth) {
            (Some(path), _) => {
                let clip = load_wav(path)?;
                if clip.num_channels() != 1 {
                    return Err(Error::Shape(format!("{}: dry sources must be mono", path.display())));
                }
                if clip.sample_rate() != rate {
                    return Err(Error::Shape(format!(
                        "{}: sample rate {} differs from scene rate {rate}",
                        path.display(),
                        clip.sample_rate()
                    )));
                }
                clip
            }
            (None, Some(kind)) => generate(kind, len, rate, cfg.seed.wrapping_add(i as u64))?,
            (None, None) => return Err(Error::Config(format!("scene source {i} needs a file or a synth kind"))),
        };
        let scaled: Vec<f64> = clip.channel(0).iter().map(|v| v * src.gain).collect();
        signals.push(AudioClip::mono(scaled, rate)?);
        placements.push((
            Direction {
                azimuth: src.azimuth,
                elevation: src.elevation,
            },
            scene_cfg.distance,
        ));
    }
    let geometry = cfg.array.geometry()?;
    let center = scene_cfg.array_center.unwrap_or_else(|| default_array_center(&scene_cfg.room));
    let scene = SceneSpec::around_array(&geometry, center, &placements, signals)?;
    let rendered = render_mixture(&scene, &scene_cfg.room)?;

    let dir = &cfg.paths.out_dir;
    create_out_dir(dir)?;
    let mut written = vec![dir.join("mixture.wav")];
    save_wav(&rendered.mixture, &written[0])?;
    for (s, img) in rendered.images.iter().enumerate() {
        let p = dir.join(format!("image_{s}.wav"));
        save_wav(img, &p)?;
        written.push(p);
    }
    let mut summary = format!(
        "room {:?} m, t60 {} s, {} mics, {} sources, {} samples at {} Hz\n",
        scene_cfg.room.dimensions,
        scene_cfg.room.t60,
        geometry.num_mics(),
        scene.sources.len(),
        rendered.mixture.len(),
        rate
    );
    for (s, src) in scene.sources.iter().enumerate() {
        summary += &format!(
            "source {s}: azimuth {} elevation {} at [{:.3}, {:.3}, {:.3}]\n",
            scene_cfg.sources[s].azimuth, scene_cfg.sources[s].elevation, src.position[0], src.position[1], src.position[2]
        );
    }
    for p in &written {
        summary += &format!("wrote {}\n", p.display());
    }
    Ok((written, summary))
}

/// Target image plus the sum of all remaining images.
fn target_and_accompaniment(images: &[AudioClip]) -> Result<Vec<AudioClip>> {
    let (first, rest) = images
        .split_first()
        .ok_or_else(|| Error::Config("source images required for the oracle preset".into()))?;
    let mut acc = rest
        .first()
        .cloned()
        .ok_or_else(|| Error::Config("the oracle preset needs at least two source images".into()))?;
    for img in &rest[1..] {
        acc = acc.add(img)?;
    }
    Ok(vec![first.clone(), acc])
}

fn file_priors(cfg: &Config) -> Result<PriorSet> {
    if cfg.paths.priors.is_empty() {
        return Err(Error::Config(format!("priors required for preset {}", cfg.preset.as_str())));
    }
    let sets = cfg.paths.priors.iter().map(load_prior).collect::<Result<Vec<_>>>()?;
    if sets.len() == 1 {
        return Ok(sets.into_iter().next().unwrap());
    }
    let s_len = sets[0].num_sources();
    if sets.iter().any(|p| p.num_sources() != s_len) {
        return Err(Error::Shape("per-channel prior files disagree in source count".into()));
    }
    let sources = (0..s_len)
        .map(|s| {
            let per_channel: Vec<_> = sets.iter().map(|p| p.sources[s].clone()).collect();
            select_predominant_channel(&per_channel).cloned()
        })
        .collect::<Result<Vec<_>>>()?;
    PriorSet::new(sources, Provenance::File, sets[0].sample_rate, sets[0].stft)
}

/// Priors for the configured preset.
pub fn resolve_priors(cfg: &Config, mixture: &AudioClip) -> Result<PriorSet> {
    match doa_cnmf::cnmf::VariantPreset::new(cfg.preset).prior_source {
        PriorSource::File => file_priors(cfg),
        PriorSource::Oracle => {
            if cfg.paths.images.is_empty() {
                return Err(Error::Config("source images required for the oracle preset".into()));
            }
            let images = cfg.paths.images.iter().map(load_wav).collect::<Result<Vec<_>>>()?;
            oracle_prior(&target_and_accompaniment(&images)?, cfg.stft, mixture.len())
        }
        PriorSource::Random => {
            let frames = cfg.stft.num_frames(mixture.len());
            random_prior(cfg.stft.num_bins(), frames, 2, cfg.seed)
        }
    }
}

/// Separates the configured mixture; writes `source_<s>.wav` and
/// `diagnostics.jsonl`.
pub fn cmd_separate(cfg: &Config) -> Result<(Vec<PathBuf>, String)> {
    let mix_path = cfg
        .paths
        .mixture
        .as_ref()
        .ok_or_else(|| Error::Config("paths.mixture is required".into()))?;
    let mixture = load_wav(mix_path)?;
    let priors = resolve_priors(cfg, &mixture).map_err(|e| e.in_stage("priors"))?;
    let result = run_pipeline(&mixture, &priors, cfg)?;

    let dir = &cfg.paths.out_dir;
    create_out_dir(dir)?;
    let mut written = Vec::new();
    for (s, clip) in result.audio.iter().enumerate() {
        let p = dir.join(format!("source_{s}.wav"));
        save_wav(clip, &p)?;
        written.push(p);
    }
    let diag = dir.join("diagnostics.jsonl");
    fs::write(&diag, result.diagnostics.to_json_lines()).map_err(|e| Error::Io {
        path: diag.display().to_string(),
        source: e,
    })?;
    written.push(diag);

    let d = &result.diagnostics;
    let mut summary = format!(
        "preset {}: cost {:.6e} -> {:.6e} (mixing filter), {:.6e} -> {:.6e} (refinement)\n",
        cfg.preset.as_str(),
        d.mixing_cost.first().copied().unwrap_or(f64::NAN),
        d.mixing_cost.last().copied().unwrap_or(f64::NAN),
        d.refine_cost.first().copied().unwrap_or(f64::NAN),
        d.refine_cost.last().copied().unwrap_or(f64::NAN),
    );
    let o = d.azimuths.len();
    for s in 0..d.sources {
        let row = &d.direction_power[s * o..(s + 1) * o];
        let best = (0..o).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
        summary += &format!("source {s}: strongest direction {} deg\n", d.azimuths[best]);
    }
    if d.mixing_riccati_warnings + d.refine_riccati_warnings > 0 {
        summary += &format!(
            "warning: {} kernel solves rejected\n",
            d.mixing_riccati_warnings + d.refine_riccati_warnings
        );
    }
    for p in &written {
        summary += &format!("wrote {}\n", p.display());
    }
    Ok((written, summary))
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<AudioClip>> {
    paths.iter().map(load_wav).collect()
}

/// Scores every configured scene; writes `scores.csv` and returns the
/// median table.
pub fn cmd_evaluate(cfg: &Config) -> Result<(Vec<PathBuf>, String)> {
    let mut scenes: Vec<(String, Vec<PathBuf>, Vec<PathBuf>)> = Vec::new();
    if !cfg.paths.estimates.is_empty() || !cfg.paths.references.is_empty() {
        scenes.push(("scene0".into(), cfg.paths.estimates.clone(), cfg.paths.references.clone()));
    }
    for s in &cfg.paths.scenes {
        scenes.push((s.name.clone(), s.estimates.clone(), s.references.clone()));
    }
    if scenes.is_empty() {
        return Err(Error::Config("paths.estimates and paths.references are required".into()));
    }
    let mut rows: Vec<(String, BssScores)> = Vec::new();
    for (name, est, refs) in scenes {
        if est.is_empty() || refs.is_empty() {
            return Err(Error::Config(format!("scene {name} needs estimates and references")));
        }
        let scores = bss_eval(&load_all(&est)?, &load_all(&refs)?, DEFAULT_FILTER_LEN)
            .map_err(|e| e.in_stage("evaluate"))?;
        rows.push((name, scores));
    }
    let dir = &cfg.paths.out_dir;
    create_out_dir(dir)?;
    let csv = dir.join("scores.csv");
    fs::write(&csv, scores_csv(&rows)).map_err(|e| Error::Io {
        path: csv.display().to_string(),
        source: e,
    })?;
    let all: Vec<BssScores> = rows.into_iter().map(|(_, s)| s).collect();
    let table = summary_table(&summarize(&all)?);
    Ok((vec![csv], table))
}

/// Reads a preset name as given on the command line.
pub fn parse_preset(name: &str) -> Result<PresetName> {
    name.parse()
}
