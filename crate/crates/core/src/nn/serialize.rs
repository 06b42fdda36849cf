//! Versioned JSON documents for trained networks.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, Dense, MlpConfig, MlpModel, Network, NnError, Standardizer, TrainingMetrics};

pub const MODEL_FORMAT: &str = "soundscape-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub activation: Activation,
    /// `fan_in` rows of `fan_out` values.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    /// `mlp` or `autoencoder`.
    pub kind: String,
    pub widths: Vec<usize>,
    pub layers: Vec<LayerDoc>,
    pub standardization: Standardizer,
    pub seed: u64,
    pub config: serde_json::Value,
    pub metrics: serde_json::Value,
}

impl ModelDocument {
    pub fn new(
        kind: &str,
        network: &Network,
        standardization: Standardizer,
        seed: u64,
        config: serde_json::Value,
        metrics: serde_json::Value,
    ) -> Self {
        let layers = network
            .layers
            .iter()
            .map(|l| LayerDoc {
                activation: l.activation,
                weights: l.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
                bias: l.bias.to_vec(),
            })
            .collect();
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kind: kind.into(),
            widths: network.widths(),
            layers,
            standardization,
            seed,
            config,
            metrics,
        }
    }

    /// Rebuilds the network, checking every shape against `widths`.
    pub fn network(&self) -> Result<Network, NnError> {
        let bad = |m: String| NnError::Document(m);
        if self.format != MODEL_FORMAT {
            return Err(bad(format!("unknown format {:?}", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(bad(format!("unsupported version {}", self.version)));
        }
        if self.widths.len() != self.layers.len() + 1 || self.layers.is_empty() {
            return Err(bad("layer count does not match widths".into()));
        }
        if self.standardization.dim() != self.widths[0] {
            return Err(bad("standardization width does not match input".into()));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let (fi, fo) = (self.widths[i], self.widths[i + 1]);
            if l.weights.len() != fi || l.weights.iter().any(|r| r.len() != fo) || l.bias.len() != fo {
                return Err(bad(format!("layer {i} shape differs from {fi}x{fo}")));
            }
            let flat: Vec<f64> = l.weights.iter().flatten().copied().collect();
            if flat.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(bad(format!("layer {i} holds non-finite values")));
            }
            layers.push(Dense {
                weights: Array2::from_shape_vec((fi, fo), flat).expect("shape checked"),
                bias: Array1::from(l.bias.clone()),
                activation: l.activation,
            });
        }
        Ok(Network { layers })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| NnError::Document(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| NnError::Document(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path).map_err(|e| NnError::Document(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| NnError::Document(e.to_string()))
    }
}

impl MlpModel {
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument::new(
            "mlp",
            &self.network,
            self.scaler.clone(),
            self.config.seed,
            serde_json::to_value(&self.config).expect("config serializes"),
            serde_json::to_value(&self.metrics).expect("metrics serialize"),
        )
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self, NnError> {
        if doc.kind != "mlp" {
            return Err(NnError::Document(format!("expected an mlp, found {}", doc.kind)));
        }
        let network = doc.network()?;
        let config: MlpConfig =
            serde_json::from_value(doc.config.clone()).map_err(|e| NnError::Document(e.to_string()))?;
        let metrics: TrainingMetrics =
            serde_json::from_value(doc.metrics.clone()).map_err(|e| NnError::Document(e.to_string()))?;
        Ok(Self {
            config,
            network,
            scaler: doc.standardization.clone(),
            metrics,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        self.to_document().save(path)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_document(&ModelDocument::load(path)?)
    }
}
