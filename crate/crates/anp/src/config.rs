//! Flat `key = value` run configuration: parsed from text files, echoed
//! into run directories, and embedded in checkpoints. `#` starts a
//! comment; unknown keys are rejected by name.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::gp::HyperMode;
use crate::model::ModelConfig;

/// Which episode source the trainer draws from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Dataset {
    /// 1D GP curves, l = 0.6, sigma_f = 1 fixed.
    GpFixed,
    /// 1D GP curves with per-episode random hyperparameters.
    GpRandom,
    /// Images from an IDX file, pixelwise regression.
    Image { path: String },
}

impl Dataset {
    pub fn hyper_mode(&self) -> Option<HyperMode> {
        match self {
            Dataset::GpFixed => Some(HyperMode::Fixed),
            Dataset::GpRandom => Some(HyperMode::Random),
            Dataset::Image { .. } => None,
        }
    }
}

/// Everything a training run needs besides its seed stream.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dataset: Dataset,
    pub attention: AttentionKind,
    pub d: usize,
    pub self_attention_layers: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: u64,
    pub eval_interval: u64,
    pub checkpoint_interval: u64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        let d_x = match self.dataset {
            Dataset::Image { .. } => 2,
            _ => 1,
        };
        ModelConfig {
            d_x,
            d_y: 1,
            d: self.d,
            attention: self.attention,
            self_attention_layers: self.self_attention_layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.d < 1 {
            return Err(Error::Config("d must be >= 1".into()));
        }
        if self.eval_interval < 1 {
            return Err(Error::Config("eval_interval must be >= 1".into()));
        }
        if let AttentionKind::MultiHead { heads } = self.attention {
            if heads == 0 || !self.d.is_multiple_of(heads) {
                return Err(Error::Config(format!(
                    "heads = {heads} must divide d = {}",
                    self.d
                )));
            }
        }
        Ok(())
    }

    /// Serialize as the same `key = value` text `parse` accepts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let dataset = match &self.dataset {
            Dataset::GpFixed => "gp-fixed".to_string(),
            Dataset::GpRandom => "gp-random".to_string(),
            Dataset::Image { path } => format!("image:{path}"),
        };
        let attention = match self.attention {
            AttentionKind::Uniform => "uniform".to_string(),
            AttentionKind::Laplace => "laplace".to_string(),
            AttentionKind::DotProduct => "dotproduct".to_string(),
            AttentionKind::MultiHead { heads } => format!("multihead:{heads}"),
        };
        let _ = writeln!(out, "dataset = {dataset}");
        let _ = writeln!(out, "attention = {attention}");
        let _ = writeln!(out, "d = {}", self.d);
        let _ = writeln!(out, "self_attention_layers = {}", self.self_attention_layers);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(out, "iterations = {}", self.iterations);
        let _ = writeln!(out, "eval_interval = {}", self.eval_interval);
        let _ = writeln!(out, "checkpoint_interval = {}", self.checkpoint_interval);
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }

    pub fn parse(text: &str) -> Result<TrainConfig> {
        let pairs = parse_pairs(text)?;
        Self::from_pairs(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text)
    }

    fn from_pairs(mut pairs: BTreeMap<String, String>) -> Result<TrainConfig> {
        fn take<T: std::str::FromStr>(
            pairs: &mut BTreeMap<String, String>,
            key: &str,
            default: T,
        ) -> Result<T> {
            match pairs.remove(key) {
                None => Ok(default),
                Some(raw) => raw
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid value `{raw}` for key `{key}`"))),
            }
        }

        let dataset = match pairs.remove("dataset").as_deref() {
            None | Some("gp-fixed") => Dataset::GpFixed,
            Some("gp-random") => Dataset::GpRandom,
            Some(s) if s.starts_with("image:") => Dataset::Image {
                path: s["image:".len()..].to_string(),
            },
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown dataset `{other}` (expected gp-fixed, gp-random, or image:PATH)"
                )))
            }
        };
        let attention = match pairs.remove("attention").as_deref() {
            None | Some("multihead") => AttentionKind::MultiHead { heads: 8 },
            Some("uniform") => AttentionKind::Uniform,
            Some("laplace") => AttentionKind::Laplace,
            Some("dotproduct") => AttentionKind::DotProduct,
            Some(s) if s.starts_with("multihead:") => {
                let heads = s["multihead:".len()..]
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid head count in `{s}`")))?;
                AttentionKind::MultiHead { heads }
            }
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown attention `{other}` (expected uniform, laplace, dotproduct, multihead[:H])"
                )))
            }
        };

        let config = TrainConfig {
            dataset,
            attention,
            d: take(&mut pairs, "d", 128)?,
            self_attention_layers: take(&mut pairs, "self_attention_layers", 0)?,
            batch_size: take(&mut pairs, "batch_size", 16)?,
            learning_rate: take(&mut pairs, "learning_rate", 5e-5)?,
            iterations: take(&mut pairs, "iterations", 0)?,
            eval_interval: take(&mut pairs, "eval_interval", 1000)?,
            checkpoint_interval: take(&mut pairs, "checkpoint_interval", 0)?,
            seed: take(&mut pairs, "seed", 0)?,
        };
        if let Some(key) = pairs.keys().next() {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        config.validate()?;
        Ok(config)
    }
}

/// Split `key = value` lines, stripping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got `{raw}`",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("duplicate config key `{key}`")));
        }
    }
    Ok(pairs)
}
