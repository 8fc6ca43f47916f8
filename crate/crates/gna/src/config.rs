//! Flat `key = value` configuration files.
//!
//! The format is deliberately minimal: full-line `#` comments, blank lines,
//! bracketed section headers `[model] [train] [data] [gna] [eval]`, and one
//! `key = value` assignment per line. Every key has a default, so an empty
//! file is a valid configuration. Unknown sections or keys are rejected
//! rather than ignored, so typos fail loudly.

use std::path::{Path, PathBuf};

use crate::attention::GnaConfig;
use crate::data::SynthConfig;
use crate::model::{Architecture, ModelConfig};
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Corpus location and size on top of the synthesis parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub synth: SynthConfig,
    /// Corpus root; `gen-data` writes `train/` and `test/` under it.
    pub dir: PathBuf,
    pub train_videos: usize,
    pub test_videos: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            dir: PathBuf::from("corpus"),
            train_videos: 20,
            test_videos: 5,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        if self.train_videos == 0 || self.test_videos == 0 {
            return Err(Error::validation("train_videos and test_videos must be positive"));
        }
        Ok(())
    }
}

/// Evaluation and verification settings.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Checkpoint to evaluate; relative paths resolve against the output
    /// directory.
    pub checkpoint: PathBuf,
    pub arch: Architecture,
    /// Peak-detection threshold on the localization map.
    pub threshold: f64,
    /// Peak-detection window (odd, ≥ 3).
    pub window: usize,
    pub seed: u64,
    /// Trials for the bound-verification command.
    pub bound_trials: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::from("gnanet.gnac"),
            arch: Architecture::GnaNet,
            threshold: 0.5,
            window: 5,
            seed: 0,
            bound_trials: 1000,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::validation("threshold must lie strictly between 0 and 1"));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::validation("window must be odd and at least 3"));
        }
        if self.bound_trials == 0 {
            return Err(Error::validation("bound_trials must be positive"));
        }
        Ok(())
    }
}

/// Everything a command can read from a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    /// Which architecture `train` builds.
    pub train_arch: Architecture,
}

impl FileConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.validate()?;
        self.eval.validate()
    }

    /// Route one seed to every stage, as the `--seed` override does.
    pub fn override_seed(&mut self, seed: u64) {
        self.model.gna.seed = seed;
        self.train.seed = seed;
        self.data.synth.seed = seed;
        self.eval.seed = seed;
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::format(line, format!("cannot parse value {value:?} for {key}")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::format(line, format!("expected true or false for {key}, got {value:?}"))),
    }
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|part| parse_num(line, key, part.trim())).collect()
}

fn parse_arch(line: usize, value: &str) -> Result<Architecture> {
    match value {
        "gnanet" => Ok(Architecture::GnaNet),
        "s-gnanet" | "s_gnanet" => Ok(Architecture::SGnaNet),
        _ => Err(Error::format(line, format!("unknown architecture {value:?}"))),
    }
}

fn apply_model(cfg: &mut ModelConfig, line: usize, key: &str, value: &str) -> Result<()> {
    match key {
        "clip_length" => cfg.clip_length = parse_num(line, key, value)?,
        "feature_channels" => cfg.feature_channels = parse_num(line, key, value)?,
        "identity_attention" => cfg.identity_attention = parse_bool(line, key, value)?,
        _ => return Err(Error::validation(format!("unknown key {key:?} in [model]"))),
    }
    Ok(())
}

fn apply_gna(cfg: &mut GnaConfig, line: usize, key: &str, value: &str) -> Result<()> {
    match key {
        "gammas" => cfg.gammas = parse_list(line, key, value)?,
        "samples_per_focus" => cfg.samples_per_focus = parse_num(line, key, value)?,
        "test_repeats" => cfg.test_repeats = parse_num(line, key, value)?,
        "seed" => cfg.seed = parse_num(line, key, value)?,
        _ => return Err(Error::validation(format!("unknown key {key:?} in [gna]"))),
    }
    Ok(())
}

fn apply_train(
    cfg: &mut TrainConfig,
    arch: &mut Architecture,
    line: usize,
    key: &str,
    value: &str,
) -> Result<()> {
    match key {
        "epochs" => cfg.epochs = parse_num(line, key, value)?,
        "learning_rate" => cfg.learning_rate = parse_num(line, key, value)?,
        "batch_size" => cfg.batch_size = parse_num(line, key, value)?,
        "w_pos" => cfg.w_pos = parse_num(line, key, value)?,
        "seed" => cfg.seed = parse_num(line, key, value)?,
        "arch" => *arch = parse_arch(line, value)?,
        _ => return Err(Error::validation(format!("unknown key {key:?} in [train]"))),
    }
    Ok(())
}

fn apply_data(cfg: &mut DataConfig, line: usize, key: &str, value: &str) -> Result<()> {
    match key {
        "height" => cfg.synth.height = parse_num(line, key, value)?,
        "width" => cfg.synth.width = parse_num(line, key, value)?,
        "frames_per_video" => cfg.synth.frames_per_video = parse_num(line, key, value)?,
        "people_min" => cfg.synth.people_min = parse_num(line, key, value)?,
        "people_max" => cfg.synth.people_max = parse_num(line, key, value)?,
        "r_min" => cfg.synth.r_min = parse_num(line, key, value)?,
        "r_max" => cfg.synth.r_max = parse_num(line, key, value)?,
        "velocity_std" => cfg.synth.velocity_std = parse_num(line, key, value)?,
        "jitter_std" => cfg.synth.jitter_std = parse_num(line, key, value)?,
        "occlusion_prob" => cfg.synth.occlusion_prob = parse_num(line, key, value)?,
        "blur_prob" => cfg.synth.blur_prob = parse_num(line, key, value)?,
        "noise_std" => cfg.synth.noise_std = parse_num(line, key, value)?,
        "seed" => cfg.synth.seed = parse_num(line, key, value)?,
        "dir" => cfg.dir = PathBuf::from(value),
        "train_videos" => cfg.train_videos = parse_num(line, key, value)?,
        "test_videos" => cfg.test_videos = parse_num(line, key, value)?,
        _ => return Err(Error::validation(format!("unknown key {key:?} in [data]"))),
    }
    Ok(())
}

fn apply_eval(cfg: &mut EvalConfig, line: usize, key: &str, value: &str) -> Result<()> {
    match key {
        "checkpoint" => cfg.checkpoint = PathBuf::from(value),
        "arch" => cfg.arch = parse_arch(line, value)?,
        "threshold" => cfg.threshold = parse_num(line, key, value)?,
        "window" => cfg.window = parse_num(line, key, value)?,
        "seed" => cfg.seed = parse_num(line, key, value)?,
        "bound_trials" => cfg.bound_trials = parse_num(line, key, value)?,
        _ => return Err(Error::validation(format!("unknown key {key:?} in [eval]"))),
    }
    Ok(())
}

/// Parse configuration text. Defaults fill everything a file leaves unset.
pub fn parse_config(text: &str) -> Result<FileConfig> {
    let mut config = FileConfig::default();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::format(line, "unterminated section header"))?;
            if !["model", "train", "data", "gna", "eval"].contains(&name) {
                return Err(Error::validation(format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| Error::format(line, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::format(line, "empty key"));
        }
        match section.as_deref() {
            Some("model") => apply_model(&mut config.model, line, key, value)?,
            Some("gna") => apply_gna(&mut config.model.gna, line, key, value)?,
            Some("train") => {
                apply_train(&mut config.train, &mut config.train_arch, line, key, value)?
            }
            Some("data") => apply_data(&mut config.data, line, key, value)?,
            Some("eval") => apply_eval(&mut config.eval, line, key, value)?,
            Some(_) => unreachable!("section names are filtered above"),
            None => {
                return Err(Error::format(line, "assignment before any [section] header"));
            }
        }
    }
    config.validate()?;
    Ok(config)
}

/// Read and parse a configuration file.
pub fn load_config(path: &Path) -> Result<FileConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
