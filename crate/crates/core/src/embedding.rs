//! Aerial-image embeddings and the bottleneck autoencoder.
//!
//! Raw 2048-dimensional embeddings come from an external CNN (ingested as
//! JSON-lines) or from [`baseline_embed`], a deterministic stand-in built from
//! simple image statistics. The autoencoder compresses them to a tanh
//! bottleneck whose activations are the aerial-photo features.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{AerialImage, AERIAL_SIZE};
use crate::nn::{mse, train_epoch, Activation, ModelDocument, Network, NnError, SgdMomentum, Standardizer};
use crate::records::{self, RecordError, VectorRecord};

pub const EMBEDDING_DIM: usize = 2048;
pub const BOTTLENECK_DIM: usize = 128;
/// Encoder/decoder widths. 1028 is deliberate, not a typo for 1024.
pub const AUTOENCODER_WIDTHS: [usize; 5] = [EMBEDDING_DIM, 1028, BOTTLENECK_DIM, 1028, EMBEDDING_DIM];

const GRID: usize = 16;
const CELL: usize = AERIAL_SIZE as usize / GRID;
const FEATURES_PER_CELL: usize = 7;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("need at least 2 embeddings, got {0}")]
    TooFew(usize),
    #[error("degenerate data: every dimension has zero variance")]
    Degenerate,
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid autoencoder configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Output of the image CNN for one recording location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEmbedding {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Bottleneck activations, each strictly inside (-1, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckFeature {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Reads `{id, vector}` lines, requiring 2048 finite values each.
pub fn ingest_embeddings(path: &Path) -> Result<Vec<RawEmbedding>, EmbeddingError> {
    Ok(records::read_records(path, Some(EMBEDDING_DIM))?
        .into_iter()
        .map(|r| RawEmbedding { id: r.id, vector: r.vector })
        .collect())
}

pub fn write_embeddings(path: &Path, data: &[RawEmbedding]) -> Result<(), EmbeddingError> {
    let recs: Vec<VectorRecord> = data.iter().map(|e| VectorRecord::new(e.id.clone(), e.vector.clone())).collect();
    Ok(records::write_records(path, &recs)?)
}

pub fn read_bottlenecks(path: &Path, dim: usize) -> Result<Vec<BottleneckFeature>, EmbeddingError> {
    Ok(records::read_records(path, Some(dim))?
        .into_iter()
        .map(|r| BottleneckFeature { id: r.id, vector: r.vector })
        .collect())
}

pub fn write_bottlenecks(path: &Path, data: &[BottleneckFeature]) -> Result<(), EmbeddingError> {
    let recs: Vec<VectorRecord> = data.iter().map(|e| VectorRecord::new(e.id.clone(), e.vector.clone())).collect();
    Ok(records::write_records(path, &recs)?)
}

/// Deterministic 2048-value descriptor of a 224×224 image.
///
/// The image is cut into a 16×16 grid of 14×14 cells. Each cell contributes a
/// two-bin histogram per colour channel (share of values below 128 and at or
/// above it) and its mean squared luminance gradient, scaled to [0, 1]. The
/// 1792 values are zero-padded to 2048.
pub fn baseline_embed(id: impl Into<String>, img: &AerialImage) -> RawEmbedding {
    let side = AERIAL_SIZE as usize;
    let luma: Vec<f64> = img
        .pixels
        .chunks_exact(3)
        .map(|p| (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0)
        .collect();
    let mut vector = Vec::with_capacity(EMBEDDING_DIM);
    let area = (CELL * CELL) as f64;
    for gy in 0..GRID {
        for gx in 0..GRID {
            let mut high = [0usize; 3];
            let mut grad = 0.0;
            let mut grad_n = 0usize;
            for y in gy * CELL..(gy + 1) * CELL {
                for x in gx * CELL..(gx + 1) * CELL {
                    let px = img.pixel(x as u32, y as u32);
                    for c in 0..3 {
                        high[c] += usize::from(px[c] >= 128);
                    }
                    let l = luma[y * side + x];
                    if x + 1 < (gx + 1) * CELL {
                        grad += (luma[y * side + x + 1] - l).powi(2);
                        grad_n += 1;
                    }
                    if y + 1 < (gy + 1) * CELL {
                        grad += (luma[(y + 1) * side + x] - l).powi(2);
                        grad_n += 1;
                    }
                }
            }
            for h in high {
                let share = h as f64 / area;
                vector.push(1.0 - share);
                vector.push(share);
            }
            vector.push(grad / grad_n as f64);
        }
    }
    debug_assert_eq!(vector.len(), GRID * GRID * FEATURES_PER_CELL);
    vector.resize(EMBEDDING_DIM, 0.0);
    RawEmbedding { id: id.into(), vector }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    /// Layer widths, input first. The middle layer is the bottleneck.
    pub widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Share of rows held out to monitor reconstruction.
    pub holdout_fraction: f64,
    pub seed: u64,
    /// Refuse data with zero variance in every dimension. Disable to fit
    /// such data anyway (it standardizes to all zeros).
    pub reject_degenerate: bool,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            widths: AUTOENCODER_WIDTHS.to_vec(),
            epochs: 100,
            batch_size: 16,
            learning_rate: 0.01,
            momentum: 0.9,
            holdout_fraction: 0.1,
            seed: 0,
            reject_degenerate: true,
        }
    }
}

impl AutoencoderConfig {
    fn validate(&self) -> Result<(), EmbeddingError> {
        let w = &self.widths;
        if w.len() < 3 || w.len() % 2 == 0 {
            return Err(EmbeddingError::Config("need an odd number of widths, at least 3".into()));
        }
        if w.first() != w.last() || w.contains(&0) {
            return Err(EmbeddingError::Config("output width must equal input width".into()));
        }
        if self.batch_size == 0 || !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(EmbeddingError::Config("bad batch size or holdout fraction".into()));
        }
        Ok(())
    }

    /// Number of layers from the input up to the bottleneck.
    pub fn encoder_depth(&self) -> usize {
        (self.widths.len() - 1) / 2
    }
}

/// Reconstruction errors on the standardized scale.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderMetrics {
    pub initial_train_mse: f64,
    /// Mean mini-batch loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub holdout_mse: Vec<f64>,
    /// Clean pass over the training rows after the last epoch.
    pub final_train_mse: f64,
    pub train_rows: usize,
    pub holdout_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub config: AutoencoderConfig,
    pub network: Network,
    pub scaler: Standardizer,
    pub metrics: AutoencoderMetrics,
}

fn to_matrix(data: &[RawEmbedding], dim: usize) -> Result<Array2<f64>, EmbeddingError> {
    let mut x = Array2::zeros((data.len(), dim));
    for (i, e) in data.iter().enumerate() {
        if e.vector.len() != dim {
            return Err(EmbeddingError::Dimension {
                expected: dim,
                got: e.vector.len(),
            });
        }
        if e.vector.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("embedding").into());
        }
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&e.vector[..]));
    }
    Ok(x)
}

/// Trains the autoencoder by mini-batch SGD with momentum on standardized
/// inputs. Standardization statistics come from the training rows only.
pub fn train_autoencoder(data: &[RawEmbedding], cfg: &AutoencoderConfig) -> Result<AutoencoderModel, EmbeddingError> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(EmbeddingError::TooFew(data.len()));
    }
    let x = to_matrix(data, cfg.widths[0])?;
    if cfg.reject_degenerate && Standardizer::is_degenerate(x.view()) {
        return Err(EmbeddingError::Degenerate);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_hold = (data.len() as f64 * cfg.holdout_fraction).floor() as usize;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rng);
    let (hold_idx, train_idx) = idx.split_at(n_hold);
    let train_raw = x.select(Axis(0), train_idx);
    let scaler = Standardizer::fit(train_raw.view());
    let train = scaler.transform(train_raw.view());
    let hold = scaler.transform(x.select(Axis(0), hold_idx).view());

    let mut network = Network::new(&cfg.widths, Activation::Tanh, Activation::Identity, &mut rng);
    let mut opt = SgdMomentum::new(cfg.learning_rate, cfg.momentum);
    let mut metrics = AutoencoderMetrics {
        initial_train_mse: network.loss(train.view(), train.view(), 0.0),
        train_rows: train_idx.len(),
        holdout_rows: n_hold,
        ..Default::default()
    };
    for epoch in 0..cfg.epochs {
        let loss = train_epoch(
            &mut network,
            &mut opt,
            train.view(),
            train.view(),
            0.0,
            cfg.batch_size,
            &mut rng,
        );
        if !loss.is_finite() {
            return Err(NnError::NonFinite("training loss").into());
        }
        metrics.epoch_loss.push(loss);
        if n_hold > 0 {
            metrics.holdout_mse.push(network.loss(hold.view(), hold.view(), 0.0));
        }
        log::debug!("autoencoder epoch {epoch}: loss {loss:.6}");
    }
    metrics.final_train_mse = network.loss(train.view(), train.view(), 0.0);
    Ok(AutoencoderModel {
        config: cfg.clone(),
        network,
        scaler,
        metrics,
    })
}

impl AutoencoderModel {
    pub fn input_dim(&self) -> usize {
        self.scaler.dim()
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.config.widths[self.config.encoder_depth()]
    }

    fn check_dim(&self, got: usize) -> Result<(), EmbeddingError> {
        if got != self.input_dim() {
            return Err(EmbeddingError::Dimension {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    /// Bottleneck activations for raw (unstandardized) rows.
    pub fn encode_matrix(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, EmbeddingError> {
        self.check_dim(x.ncols())?;
        let z = self.scaler.transform(x);
        Ok(self.network.forward_to(z.view(), self.config.encoder_depth()))
    }

    pub fn encode(&self, e: &RawEmbedding) -> Result<BottleneckFeature, EmbeddingError> {
        Ok(self.encode_all(std::slice::from_ref(e))?.remove(0))
    }

    pub fn encode_all(&self, data: &[RawEmbedding]) -> Result<Vec<BottleneckFeature>, EmbeddingError> {
        let x = to_matrix(data, self.input_dim())?;
        let codes = self.encode_matrix(x.view())?;
        Ok(data
            .iter()
            .zip(codes.rows())
            .map(|(e, c)| BottleneckFeature {
                id: e.id.clone(),
                vector: c.to_vec(),
            })
            .collect())
    }

    /// Decoder output on the standardized scale.
    pub fn decode_standardized(&self, codes: ArrayView2<f64>) -> Result<Array2<f64>, EmbeddingError> {
        let depth = self.config.encoder_depth();
        if codes.ncols() != self.bottleneck_dim() {
            return Err(EmbeddingError::Dimension {
                expected: self.bottleneck_dim(),
                got: codes.ncols(),
            });
        }
        let decoder = Network {
            layers: self.network.layers[depth..].to_vec(),
        };
        Ok(decoder.forward(codes))
    }

    /// Decoder output mapped back to the embedding scale.
    pub fn decode(&self, code: &BottleneckFeature) -> Result<Vec<f64>, EmbeddingError> {
        let codes = ndarray::ArrayView2::from_shape((1, code.vector.len()), &code.vector)
            .map_err(|_| EmbeddingError::Dimension {
                expected: self.bottleneck_dim(),
                got: code.vector.len(),
            })?;
        let z = self.decode_standardized(codes)?;
        Ok(self.scaler.inverse(z.view()).row(0).to_vec())
    }

    /// Mean squared reconstruction error on the standardized scale.
    pub fn reconstruction_mse(&self, data: &[RawEmbedding]) -> Result<f64, EmbeddingError> {
        let x = to_matrix(data, self.input_dim())?;
        let z = self.scaler.transform(x.view());
        Ok(mse(&self.network.forward(z.view()).view(), &z.view()))
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument::new(
            "autoencoder",
            &self.network,
            self.scaler.clone(),
            self.config.seed,
            serde_json::to_value(&self.config).expect("config serializes"),
            serde_json::to_value(&self.metrics).expect("metrics serialize"),
        )
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self, EmbeddingError> {
        let bad = |m: String| EmbeddingError::Nn(NnError::Document(m));
        if doc.kind != "autoencoder" {
            return Err(bad(format!("expected an autoencoder, found {}", doc.kind)));
        }
        let network = doc.network()?;
        let config: AutoencoderConfig = serde_json::from_value(doc.config.clone()).map_err(|e| bad(e.to_string()))?;
        if config.widths != network.widths() {
            return Err(bad("config widths differ from stored layers".into()));
        }
        let metrics = serde_json::from_value(doc.metrics.clone()).map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            config,
            network,
            scaler: doc.standardization.clone(),
            metrics,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        Ok(self.to_document().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        Self::from_document(&ModelDocument::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, dim: usize, seed: u64) -> Vec<RawEmbedding> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| RawEmbedding {
                id: format!("r{i}"),
                vector: (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
            })
            .collect()
    }

    fn small(seed: u64) -> AutoencoderConfig {
        AutoencoderConfig {
            widths: vec![16, 12, 4, 12, 16],
            epochs: 30,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let c = AutoencoderConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.learning_rate, c.momentum), (100, 16, 0.01, 0.9));
        assert_eq!(c.widths, vec![2048, 1028, 128, 1028, 2048]);
        assert_eq!(c.encoder_depth(), 2);
    }

    #[test]
    fn ingest_checks_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        let good = RawEmbedding {
            id: "a".into(),
            vector: vec![0.5; EMBEDDING_DIM],
        };
        write_embeddings(&p, &[good.clone()]).unwrap();
        assert_eq!(ingest_embeddings(&p).unwrap(), vec![good]);
        let short = RawEmbedding {
            id: "b".into(),
            vector: vec![0.5; EMBEDDING_DIM - 1],
        };
        write_embeddings(&p, &[short]).unwrap();
        let err = ingest_embeddings(&p).unwrap_err().to_string();
        assert!(err.contains("expected 2048"), "{err}");
    }

    #[test]
    fn baseline_separates_black_and_white() {
        let black = baseline_embed("b", &AerialImage::solid([0, 0, 0]));
        let white = baseline_embed("w", &AerialImage::solid([255, 255, 255]));
        assert_eq!(black.vector.len(), EMBEDDING_DIM);
        assert_eq!(black.vector, baseline_embed("b", &AerialImage::solid([0, 0, 0])).vector);
        // Per cell: [lo_r, hi_r, lo_g, hi_g, lo_b, hi_b, gradient].
        assert_eq!(&black.vector[..7], &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(&white.vector[..7], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(black.vector[1792..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn baseline_sees_edges() {
        let mut pixels = vec![0u8; 224 * 224 * 3];
        for y in 0..224 {
            for x in (0..224).step_by(2) {
                pixels[(y * 224 + x) * 3..(y * 224 + x) * 3 + 3].copy_from_slice(&[255, 255, 255]);
            }
        }
        let img = AerialImage::new(pixels, vec![]).unwrap();
        let e = baseline_embed("s", &img);
        // Stripes alternate every column: 13 of 26 neighbour pairs per row differ fully.
        assert!((e.vector[6] - 0.5).abs() < 1e-9, "{}", e.vector[6]);
        assert!((e.vector[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn training_reduces_loss_and_encodes_in_range() {
        let data = gaussian(64, 16, 1);
        let m = train_autoencoder(&data, &small(2)).unwrap();
        assert_eq!(m.metrics.holdout_rows, 6);
        assert_eq!(m.metrics.holdout_mse.len(), 30);
        assert!(m.metrics.final_train_mse < m.metrics.initial_train_mse);
        let codes = m.encode_all(&data).unwrap();
        assert!(codes.iter().all(|c| c.vector.len() == 4 && c.vector.iter().all(|v| v.abs() < 1.0)));
        assert_eq!(m.encode(&data[3]).unwrap(), codes[3]);
        assert!(matches!(
            m.encode(&gaussian(1, 15, 0)[0]),
            Err(EmbeddingError::Dimension { expected: 16, got: 15 })
        ));
    }

    #[test]
    fn reconstruction_agrees_with_recorded_loss() {
        let data = gaussian(64, 16, 3);
        let cfg = small(4);
        let m = train_autoencoder(&data, &cfg).unwrap();
        // Rebuild the training rows exactly as training split them.
        let mut idx: Vec<usize> = (0..64).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let train: Vec<RawEmbedding> = idx[6..].iter().map(|&i| data[i].clone()).collect();
        let direct = m.reconstruction_mse(&train).unwrap();
        assert!((direct - m.metrics.final_train_mse).abs() < 1e-12);
        // Encode then decode, compared on the standardized scale.
        let mut sum = 0.0;
        for e in &train {
            let back = m.decode(&m.encode(e).unwrap()).unwrap();
            sum += e
                .vector
                .iter()
                .zip(&back)
                .zip(&m.scaler.std)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum::<f64>()
                / 16.0;
        }
        let roundtrip = sum / train.len() as f64;
        assert!(roundtrip <= m.metrics.final_train_mse * 1.1, "{roundtrip}");
    }

    #[test]
    fn degenerate_data() {
        let data: Vec<RawEmbedding> = (0..20)
            .map(|i| RawEmbedding {
                id: i.to_string(),
                vector: vec![0.3; 16],
            })
            .collect();
        assert!(matches!(train_autoencoder(&data, &small(0)), Err(EmbeddingError::Degenerate)));
        let cfg = AutoencoderConfig {
            reject_degenerate: false,
            ..small(0)
        };
        let m = train_autoencoder(&data, &cfg).unwrap();
        assert!(m.metrics.final_train_mse < 1e-3);
        assert!(matches!(train_autoencoder(&data[..1], &cfg), Err(EmbeddingError::TooFew(1))));
    }

    #[test]
    fn reproducible_per_seed() {
        let data = gaussian(40, 16, 5);
        let a = train_autoencoder(&data, &small(9)).unwrap();
        let b = train_autoencoder(&data, &small(9)).unwrap();
        assert_eq!(a, b);
        let c = train_autoencoder(&data, &small(10)).unwrap();
        assert_ne!(a.network, c.network);
    }

    #[test]
    fn tiny_autoencoder_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = Network::new(&[8, 4, 2, 4, 8], Activation::Tanh, Activation::Identity, &mut rng);
        let x = Array2::from_shape_fn((5, 8), |_| rng.gen_range(-1.5..1.5));
        let r = gradient_check(&net, x.view(), x.view(), 0.0, 1e-5);
        assert_eq!(r.checked, net.param_count());
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn model_file_roundtrip() {
        let data = gaussian(24, 16, 6);
        let m = train_autoencoder(&data, &AutoencoderConfig { epochs: 3, ..small(1) }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ae.json");
        m.save(&p).unwrap();
        let back = AutoencoderModel::load(&p).unwrap();
        assert_eq!(back, m);
        let mut doc = m.to_document();
        doc.kind = "mlp".into();
        assert!(AutoencoderModel::from_document(&doc).is_err());
    }
}
