//! Run configuration read from `--config`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trackae::anomaly::{ClassifierConfig, ThresholdMethod};
use trackae::autoencoder::{mirrored_decoder, LayerSpec, ModelConfig, TrainOptions};
use trackae::features::{FilterRuleSet, SplitSpec};
use trackae::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of track CSV files.
    pub tracks: Option<PathBuf>,
    pub airport: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Feature CSV used for training and calibration.
    pub features: Option<PathBuf>,
}

/// Fields left unset keep the default architecture.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub input_length: Option<usize>,
    pub encoder_layers: Option<Vec<LayerSpec>>,
    /// Defaults to the mirror of the encoder.
    pub decoder_layers: Option<Vec<LayerSpec>>,
    pub output_kernel: Option<usize>,
    pub dropout_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainOptions::default();
        Self { epochs: d.epochs, batch_size: d.batch_size, lr: d.lr }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { train_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub filter: FilterRuleSet,
    pub model: ModelOverrides,
    pub train: TrainSection,
    pub threshold: ThresholdMethod,
    pub split: SplitSection,
    pub classifier: ClassifierConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.threshold.validate()?;
        self.split_spec()?;
        self.model_config()?.validate()?;
        if self.train.epochs == 0 || self.train.batch_size == 0 || !(self.train.lr > 0.0) {
            return Err(Error::InvalidConfig("train epochs, batch_size and lr must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut m = ModelConfig::default().with_seed(self.seed);
        let o = &self.model;
        if let Some(len) = o.input_length {
            m.input_length = len;
        }
        if let Some(enc) = &o.encoder_layers {
            m.decoder_layers = mirrored_decoder(enc);
            m.encoder_layers = enc.clone();
        }
        if let Some(dec) = &o.decoder_layers {
            m.decoder_layers = dec.clone();
        }
        if let Some(k) = o.output_kernel {
            m.output_kernel = k;
        }
        if let Some(p) = o.dropout_rate {
            m.dropout_rate = p;
        }
        m.validate()?;
        Ok(m)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            seed: self.seed,
            stop_at_loss: None,
        }
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        SplitSpec::new(self.split.train_fraction, self.seed)
    }
}

/// Fails before any work starts when a path the command needs is missing.
pub fn require<'a>(what: &str, path: Option<&'a PathBuf>) -> Result<&'a Path> {
    let path = path.ok_or_else(|| Error::InvalidArgument(format!("no {what} given (flag or [paths] entry)")))?;
    if !path.exists() {
        return Err(Error::InvalidArgument(format!("{what} {} does not exist", path.display())));
    }
    Ok(path)
}
