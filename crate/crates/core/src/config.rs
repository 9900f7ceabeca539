//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! listed in [`KEYS`]; unknown or repeated keys are errors.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DisturbMode, DisturbanceConfig, GeneratorConfig, SplitScheme};
use crate::encoder::GateMode;
use crate::error::{Error, Result};
use crate::trainer::TrainRunConfig;

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "seed for data generation and training"),
    ("gen.classes", "number of classes"),
    ("gen.features", "channels per time step"),
    ("gen.intervals", "records to generate"),
    ("gen.runs_per_interval", "class runs per record"),
    ("gen.duration_min", "shortest run in points"),
    ("gen.duration_max", "longest run in points"),
    ("gen.crossfade", "points blended around each boundary"),
    ("gen.noise", "AR(1) innovation standard deviation"),
    ("gen.ar_coef", "AR(1) coefficient"),
    ("gen.groups", "record groups used for splitting"),
    ("disturb.mode", "boundary or symmetric"),
    ("disturb.ratio", "disturbance ratio in [0, 1]"),
    ("disturb.seed", "seed for the disturbance"),
    ("model.window", "segment length w in points"),
    ("model.d_model", "hidden width d"),
    ("model.d_ff", "feed-forward width"),
    ("model.heads", "attention heads"),
    ("model.layers", "Con-Attention layers"),
    ("model.conv_channels", "comma-separated convolution widths"),
    ("model.kernel", "convolution kernel size"),
    ("model.conv_stride", "convolution stride"),
    ("model.dropout", "dropout rate"),
    ("model.sigma_floor", "lower bound added to every learned scale"),
    ("model.max_len", "longest accepted segment sequence"),
    ("model.gate", "learned, gaussian or self_attention"),
    ("train.lr", "learning rate"),
    ("train.weight_decay", "decoupled weight decay"),
    ("train.batch_size", "intervals per optimizer step"),
    ("train.stride", "segment stride r in points"),
    ("train.seq_len", "segments per training interval"),
    ("train.per_level", "training intervals sampled per curriculum level"),
    ("train.tau", "change-point tolerance in segments"),
    ("schedule.e_eta", "epochs for the trust weight to reach 1"),
    ("schedule.e_g", "epochs between curriculum admissions"),
    ("schedule.levels", "curriculum levels"),
    ("schedule.epochs", "training epochs"),
    ("split.scheme", "train-val-test group counts, e.g. 2-1-1"),
    ("split.fold", "fold index"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub disturbance: DisturbanceConfig,
    pub train: TrainRunConfig,
    pub scheme: SplitScheme,
    pub fold: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            disturbance: DisturbanceConfig {
                mode: DisturbMode::Boundary,
                ratio: 0.0,
                seed: 1,
            },
            train: TrainRunConfig::default(),
            scheme: SplitScheme::new(2, 1, 1),
            fold: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn gate_name(g: GateMode) -> &'static str {
    match g {
        GateMode::Learned => "learned",
        GateMode::Gaussian => "gaussian",
        GateMode::SelfAttention => "self_attention",
    }
}

fn mode_name(m: DisturbMode) -> &'static str {
    match m {
        DisturbMode::Boundary => "boundary",
        DisturbMode::Symmetric => "symmetric",
    }
}

/// Splits text into `(key, value)` pairs, rejecting malformed lines.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            path: origin.to_string(),
            msg: format!("line {}: expected key = value", n + 1),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let g = &mut self.generator;
        let t = &mut self.train;
        let m = &mut t.model.encoder;
        let s = &mut t.schedule;
        match key {
            "seed" => t.seed = parse(key, value)?,
            "gen.classes" => {
                g.classes = parse(key, value)?;
                t.model.classes = g.classes;
            }
            "gen.features" => {
                g.features = parse(key, value)?;
                m.features = g.features;
            }
            "gen.intervals" => g.intervals = parse(key, value)?,
            "gen.runs_per_interval" => g.runs_per_interval = parse(key, value)?,
            "gen.duration_min" => g.duration_min = parse(key, value)?,
            "gen.duration_max" => g.duration_max = parse(key, value)?,
            "gen.crossfade" => g.crossfade = parse(key, value)?,
            "gen.noise" => g.noise = parse(key, value)?,
            "gen.ar_coef" => g.ar_coef = parse(key, value)?,
            "gen.groups" => g.groups = parse(key, value)?,
            "disturb.mode" => {
                self.disturbance.mode = value
                    .parse()
                    .map_err(|_| Error::config(key, format!("unknown mode `{value}`")))?
            }
            "disturb.ratio" => self.disturbance.ratio = parse(key, value)?,
            "disturb.seed" => self.disturbance.seed = parse(key, value)?,
            "model.window" => m.window = parse(key, value)?,
            "model.d_model" => m.d_model = parse(key, value)?,
            "model.d_ff" => m.d_ff = parse(key, value)?,
            "model.heads" => m.heads = parse(key, value)?,
            "model.layers" => m.layers = parse(key, value)?,
            "model.conv_channels" => {
                m.conv_channels = value
                    .split(',')
                    .filter(|p| !p.trim().is_empty())
                    .map(|p| parse(key, p.trim()))
                    .collect::<Result<_>>()?
            }
            "model.kernel" => m.kernel = parse(key, value)?,
            "model.conv_stride" => m.conv_stride = parse(key, value)?,
            "model.dropout" => m.dropout = parse(key, value)?,
            "model.sigma_floor" => m.sigma_floor = parse(key, value)?,
            "model.max_len" => m.max_len = parse(key, value)?,
            "model.gate" => {
                m.gate = value
                    .parse()
                    .map_err(|_| Error::config(key, format!("unknown gate `{value}`")))?
            }
            "train.lr" => t.lr = parse(key, value)?,
            "train.weight_decay" => t.weight_decay = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.stride" => t.stride = parse(key, value)?,
            "train.seq_len" => t.seq_len = parse(key, value)?,
            "train.per_level" => t.per_level = parse(key, value)?,
            "train.tau" => t.tau = parse(key, value)?,
            "schedule.e_eta" => s.e_eta = parse(key, value)?,
            "schedule.e_g" => s.e_g = parse(key, value)?,
            "schedule.levels" => s.levels = parse(key, value)?,
            "schedule.epochs" => s.epochs = parse(key, value)?,
            "split.scheme" => {
                self.scheme = value
                    .parse()
                    .map_err(|_| Error::config(key, format!("expected a-b-c, got `{value}`")))?
            }
            "split.fold" => self.fold = parse(key, value)?,
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    /// Applies pairs in order; later values win, but a key may appear only
    /// once per source.
    pub fn apply_pairs(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (k, v) in pairs {
            if !seen.insert(k.as_str()) {
                return Err(Error::config(k.clone(), "repeated key"));
            }
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_pairs(&parse_pairs(text, origin)?)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    /// Every key with its current value, in [`KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let g = &self.generator;
        let t = &self.train;
        let m = &t.model.encoder;
        let s = &t.schedule;
        let channels: Vec<String> = m.conv_channels.iter().map(|c| c.to_string()).collect();
        let values = [
            t.seed.to_string(),
            g.classes.to_string(),
            g.features.to_string(),
            g.intervals.to_string(),
            g.runs_per_interval.to_string(),
            g.duration_min.to_string(),
            g.duration_max.to_string(),
            g.crossfade.to_string(),
            g.noise.to_string(),
            g.ar_coef.to_string(),
            g.groups.to_string(),
            mode_name(self.disturbance.mode).to_string(),
            self.disturbance.ratio.to_string(),
            self.disturbance.seed.to_string(),
            m.window.to_string(),
            m.d_model.to_string(),
            m.d_ff.to_string(),
            m.heads.to_string(),
            m.layers.to_string(),
            channels.join(","),
            m.kernel.to_string(),
            m.conv_stride.to_string(),
            m.dropout.to_string(),
            m.sigma_floor.to_string(),
            m.max_len.to_string(),
            gate_name(m.gate).to_string(),
            t.lr.to_string(),
            t.weight_decay.to_string(),
            t.batch_size.to_string(),
            t.stride.to_string(),
            t.seq_len.to_string(),
            t.per_level.to_string(),
            t.tau.to_string(),
            s.e_eta.to_string(),
            s.e_g.to_string(),
            s.levels.to_string(),
            s.epochs.to_string(),
            format!("{}-{}-{}", self.scheme.train, self.scheme.val, self.scheme.test),
            self.fold.to_string(),
        ];
        KEYS.iter().zip(values).map(|((k, _), v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hex SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.disturbance.validate()?;
        self.train.validate()?;
        if self.train.model.classes != self.generator.classes {
            return Err(Error::config("gen.classes", "model and generator disagree"));
        }
        if self.train.model.encoder.features != self.generator.features {
            return Err(Error::config("gen.features", "model and generator disagree"));
        }
        Ok(())
    }
}
