use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasynth::GeneratorSpec;
use crate::error::{Error, Result};
use crate::layers::{LayerSpec, NetworkConfig};
use crate::losses::LossWeights;
use crate::trainer::TrainConfig;

/// Network section: a named preset with optional per-field overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    /// `full`, `desk` or `tiny`.
    pub preset: String,
    /// Taken from the data when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sa_layers: Option<Vec<LayerSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fp_layers: Option<Vec<LayerSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fc_head: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_fps_in_training: Option<bool>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            dim: None,
            input_channels: None,
            sa_layers: None,
            fp_layers: None,
            fc_head: None,
            noise_len: None,
            noise_std: None,
            random_fps_in_training: None,
        }
    }
}

impl NetworkSection {
    /// Resolves the preset for `data_dim`-dimensional sets and applies the
    /// overrides. The head width follows `dim` unless `fc_head` is given.
    pub fn resolve(&self, data_dim: usize) -> Result<NetworkConfig> {
        if let Some(d) = self.dim {
            if d != data_dim {
                return Err(Error::Config(format!(
                    "network.dim = {d} but the data is {data_dim}-d"
                )));
            }
        }
        let mut cfg = NetworkConfig::preset(&self.preset, data_dim)?;
        if let Some(v) = self.input_channels {
            cfg.input_channels = v;
        }
        if let Some(v) = &self.sa_layers {
            cfg.sa_layers = v.clone();
        }
        if let Some(v) = &self.fp_layers {
            cfg.fp_layers = v.clone();
        }
        if let Some(v) = &self.fc_head {
            cfg.fc_head = v.clone();
        }
        if let Some(v) = self.noise_len {
            cfg.noise_len = v;
        }
        if let Some(v) = self.noise_std {
            cfg.noise_std = v;
        }
        if let Some(v) = self.random_fps_in_training {
            cfg.random_fps_in_training = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything a run reads from its config file. Every key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub network: NetworkSection,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub generator: GeneratorSpec,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train_config().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Training settings with the `[loss]` weights folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            weights: self.loss.clone(),
            ..self.train.clone()
        }
    }

    /// The complete default file, as shown by `--help`.
    pub fn default_text() -> String {
        let mut s = Self::default().to_toml().expect("defaults serialize");
        s.push_str(
            "\n# [network] also accepts overrides of the preset: dim, input_channels,\n\
             # sa_layers, fp_layers, fc_head, noise_len, noise_std, random_fps_in_training.\n\
             # [generator] also accepts template_dir.\n",
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasynth::GeneratorKind;

    #[test]
    fn parse_serialize_parse_is_a_fixed_point() {
        let text = r#"
            [network]
            preset = "tiny"
            noise_len = 4
            sa_layers = ["SA(8, 0.3, [8, 8], 8)", "SA(1, inf, [16])"]

            [train]
            epochs = 7
            ablation = "ns-rg+"

            [loss]
            mu_reg = 0.5

            [generator]
            kind = "line_bars"
            protrusion = true
            view_dir = [1.0, 0.0, 0.0]
        "#;
        let a = RunConfig::parse(text).unwrap();
        let b = RunConfig::parse(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.epochs, 7);
        assert!(!a.train.ablation.noise);
        assert_eq!(a.train_config().weights.mu_reg, 0.5);
        assert_eq!(a.generator.kind, GeneratorKind::LineBars);
        let net = a.network.resolve(2).unwrap();
        assert_eq!(net.noise_len, 4);
        assert_eq!(net.sa_layers.len(), 2);
    }

    #[test]
    fn defaults_roundtrip() {
        let text = RunConfig::default_text();
        assert_eq!(RunConfig::parse(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["[train]\nepoch = 3\n", "[nope]\n", "[loss]\nlambda = 1.0\n"] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn dim_override_must_match_data() {
        let cfg = RunConfig::parse("[network]\ndim = 3\n").unwrap();
        assert!(cfg.network.resolve(2).is_err());
        assert_eq!(cfg.network.resolve(3).unwrap().dim, 3);
    }
}
