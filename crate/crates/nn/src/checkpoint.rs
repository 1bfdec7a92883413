//! JSON weight container: parameter path to shape and flat values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{EsVitModel, ModelConfig};
use crate::{NnError, Real, Result, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub params: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn new<'a, T: Real>(
        params: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
        metadata: serde_json::Value,
    ) -> Self {
        let params = params
            .into_iter()
            .map(|(name, t)| {
                let stored = StoredTensor {
                    shape: t.shape().to_vec(),
                    values: t.to_f64(),
                };
                (name.to_string(), stored)
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            metadata,
            params,
        }
    }

    pub fn tensors<T: Real>(&self) -> Result<BTreeMap<String, Tensor<T>>> {
        self.params
            .iter()
            .map(|(name, s)| {
                let t = Tensor::from_f64(s.shape.clone(), &s.values)
                    .map_err(|e| NnError::Checkpoint(format!("{name}: {e}")))?;
                Ok((name.clone(), t))
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|source| NnError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        fs::write(path, json).map_err(|source| NnError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| NnError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let ckpt: Self = serde_json::from_str(&text).map_err(|source| NnError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

/// Writes `model` with its configuration under `metadata.model`.
pub fn save_model<T: Real>(
    model: &EsVitModel<T>,
    path: &Path,
    mut metadata: serde_json::Value,
) -> Result<()> {
    let config =
        serde_json::to_value(model.config()).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    match &mut metadata {
        serde_json::Value::Object(map) => {
            map.insert("model".into(), config);
        }
        other => *other = serde_json::json!({ "model": config }),
    }
    Checkpoint::new(model.named_params(), metadata).save(path)
}

pub fn load_model<T: Real>(path: &Path) -> Result<(EsVitModel<T>, serde_json::Value)> {
    let ckpt = Checkpoint::load(path)?;
    let config: ModelConfig = ckpt
        .metadata
        .get("model")
        .cloned()
        .ok_or_else(|| NnError::Checkpoint("metadata has no model config".into()))
        .and_then(|v| serde_json::from_value(v).map_err(|e| NnError::Checkpoint(e.to_string())))?;
    let model = EsVitModel::from_named(config, ckpt.tensors()?)?;
    Ok((model, ckpt.metadata))
}
