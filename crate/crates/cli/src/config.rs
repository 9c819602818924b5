use serde::{Deserialize, Serialize};

use zbnn::datasets::RayVariant;
use zbnn::training::TrainConfig;

/// Contents of the `train` command's TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    /// IDX files from `--data`; the limits keep the first N samples.
    Mnist {
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    /// Synthetic 2D ray dataset, used for both training and evaluation.
    Rays { variant: RayVariant, rays: usize, per_ray: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Fcn { hidden: Vec<usize>, bias: bool },
    /// Small convolutional net for 28×28 single-channel images.
    Cnn { bias: bool },
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.train.validate().map_err(|e| e.to_string())?;
        if let (DataConfig::Rays { .. }, ModelConfig::Cnn { .. }) = (&cfg.data, &cfg.model) {
            return Err("the convolutional model needs image data".into());
        }
        Ok(cfg)
    }
}
