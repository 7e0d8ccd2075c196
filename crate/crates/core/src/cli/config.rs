//! Flat `key = value` run configuration. Keys are the field names of
//! `TrainConfig` and `ModelConfig`; unknown keys are rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};
use sketchgan::networks::ModelConfig;
use sketchgan::trainer::TrainConfig;
use sketchgan::Error;

#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub train: Map<String, Value>,
    pub model: Map<String, Value>,
}

fn keys<T: serde::Serialize>(v: &T) -> Vec<String> {
    match serde_json::to_value(v) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        for (k, v) in table {
            let v = serde_json::to_value(&v)?;
            cfg.set(&k, v)?;
        }
        Ok(cfg)
    }

    /// Routes `key` to the train or model section.
    pub fn set(&mut self, key: &str, value: Value) -> Result<()> {
        let train = keys(&TrainConfig::default());
        let model = keys(&ModelConfig::default());
        if train.iter().any(|k| k == key) {
            self.train.insert(key.to_string(), value);
        } else if model.iter().any(|k| k == key) {
            self.model.insert(key.to_string(), value);
        } else {
            bail!(Error::Config(format!("unknown configuration key {key:?}")));
        }
        Ok(())
    }

    pub fn set_opt<T: serde::Serialize>(&mut self, key: &str, value: Option<T>) -> Result<()> {
        if let Some(v) = value {
            self.set(key, serde_json::to_value(v)?)?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        serde_json::from_value(Value::Object(self.train.clone()))
            .map_err(|e| Error::Config(format!("training configuration: {e}")).into())
    }

    /// Model configuration for a corpus with the given label spaces; the
    /// resolution defaults to the corpus's.
    pub fn model_config(&self, resolution: usize, class_count: usize, painter_count: usize) -> Result<ModelConfig> {
        let base = ModelConfig::for_resolution(resolution, class_count, painter_count);
        let mut m = match serde_json::to_value(&base)? {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        if let Some(Value::Number(r)) = self.model.get("resolution") {
            if !self.model.contains_key("base_channels") {
                let r = r.as_u64().unwrap_or(0) as usize;
                m.insert("base_channels".into(), ModelConfig::for_resolution(r, 1, 1).base_channels.into());
            }
        }
        for (k, v) in &self.model {
            m.insert(k.clone(), v.clone());
        }
        m.insert("class_count".into(), class_count.into());
        m.insert("painter_count".into(), painter_count.into());
        let cfg: ModelConfig =
            serde_json::from_value(Value::Object(m)).map_err(|e| Error::Config(format!("model configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolution(&self) -> Option<usize> {
        self.model.get("resolution").and_then(Value::as_u64).map(|v| v as usize)
    }
}
