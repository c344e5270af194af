//! Run configuration: an optional TOML file whose values are overridden by
//! command-line flags, falling back to library defaults.
//!
//! ```toml
//! [data]
//! text_column = "text"
//! label_column = "label"
//! stopwords = "my_stopwords.txt"
//! drop_hashtag_words = false
//! min_frequency = 1
//! seq_len = 32
//!
//! [split]
//! train_fraction = 0.8
//! val_fraction = 0.1
//! seed = 42
//!
//! [model]
//! variant = "cnn-lstm"
//! embed_dim = 64
//! window = 3
//! filters = 64
//! hidden = 64
//! activation = "tanh"
//!
//! [train]
//! epochs = 60
//! batch_size = 32
//! learning_rate = 0.001
//! optimizer = "adam"
//! beta1 = 0.9
//! beta2 = 0.999
//! epsilon = 1e-8
//! seed = 42
//! shuffle = true
//! ```

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;
use tweetsent::layers::Activation;
use tweetsent::Variant;

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub text_column: Option<String>,
    pub label_column: Option<String>,
    pub stopwords: Option<PathBuf>,
    pub drop_hashtag_words: Option<bool>,
    pub min_frequency: Option<u32>,
    pub seq_len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: Option<f64>,
    pub val_fraction: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Option<VariantArg>,
    pub embed_dim: Option<usize>,
    pub window: Option<usize>,
    pub filters: Option<usize>,
    pub hidden: Option<usize>,
    pub activation: Option<ActivationArg>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<OptimizerArg>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub shuffle: Option<bool>,
}

impl FileConfig {
    /// Reads `path`, or returns an all-empty config when no file is given.
    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let (Some(stops), Some(dir)) = (&cfg.data.stopwords, path.parent()) {
            if stops.is_relative() {
                cfg.data.stopwords = Some(dir.join(stops));
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    CnnLstm,
    Cnn,
    Lstm,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::CnnLstm => Variant::CnnLstm,
            VariantArg::Cnn => Variant::CnnOnly,
            VariantArg::Lstm => Variant::LstmOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationArg {
    Tanh,
    Sigmoid,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Sigmoid => Activation::Sigmoid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

/// Flag value, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
