use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_finite, gradient_check, mse, train_epoch, Activation, Adam, GradCheckReport, Network,
    NnError, Standardizer,
};

/// Multi-layer perceptron regressor settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub n_hidden_layers: usize,
    /// Width shared by every hidden layer.
    pub units: usize,
    pub l2: f64,
    pub activation: Activation,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction held out for early stopping; 0 disables it.
    pub validation_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            n_hidden_layers: 1,
            units: 32,
            l2: 1e-3,
            activation: Activation::Relu,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 200,
            batch_size: 32,
            validation_fraction: 0.1,
            patience: 20,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(std::iter::repeat(self.units).take(self.n_hidden_layers));
        w.push(output);
        w
    }

    fn validate(&self) -> Result<(), NnError> {
        if !(1..=10).contains(&self.n_hidden_layers) {
            return Err(NnError::Config(format!(
                "n_hidden_layers {} outside 1..=10",
                self.n_hidden_layers
            )));
        }
        if self.units == 0 || self.batch_size == 0 {
            return Err(NnError::Config("units and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(NnError::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    /// Mean mini-batch training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation MSE per epoch (empty without early stopping).
    pub validation_loss: Vec<f64>,
    /// Epoch whose weights were kept (0-based).
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub network: Network,
    pub scaler: Standardizer,
    pub metrics: TrainingMetrics,
}

/// Trains an MLP on standardized inputs with mini-batch Adam.
///
/// With a validation fraction, a seeded slice of the rows is held out and the
/// weights from the best validation epoch are restored after `patience`
/// epochs without improvement.
pub fn fit(cfg: &MlpConfig, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<MlpModel, NnError> {
    cfg.validate()?;
    if x.nrows() == 0 || x.ncols() == 0 || y.ncols() == 0 {
        return Err(NnError::Empty);
    }
    if x.nrows() != y.nrows() {
        return Err(NnError::Rows {
            x: x.nrows(),
            y: y.nrows(),
        });
    }
    check_finite(x, "inputs")?;
    check_finite(y, "targets")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scaler = Standardizer::fit(x);
    let xs = scaler.transform(x);

    let n_val = (x.nrows() as f64 * cfg.validation_fraction).floor() as usize;
    let use_val = n_val >= 1 && n_val < x.nrows();
    let (train_x, train_y, val) = if use_val {
        let mut idx: Vec<usize> = (0..x.nrows()).collect();
        idx.shuffle(&mut rng);
        let (v, t) = idx.split_at(n_val);
        (
            xs.select(Axis(0), t),
            y.select(Axis(0), t),
            Some((xs.select(Axis(0), v), y.select(Axis(0), v))),
        )
    } else {
        (xs, y.to_owned(), None)
    };

    let mut network = Network::new(
        &cfg.widths(x.ncols(), y.ncols()),
        cfg.activation,
        Activation::Identity,
        &mut rng,
    );
    let mut opt = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut metrics = TrainingMetrics::default();
    let mut best: Option<(f64, Network)> = None;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        let loss = train_epoch(
            &mut network,
            &mut opt,
            train_x.view(),
            train_y.view(),
            cfg.l2,
            cfg.batch_size,
            &mut rng,
        );
        metrics.train_loss.push(loss);
        if !loss.is_finite() {
            return Err(NnError::NonFinite("training loss"));
        }
        if let Some((vx, vy)) = &val {
            let vloss = mse(&network.forward(vx.view()).view(), &vy.view());
            metrics.validation_loss.push(vloss);
            match &best {
                Some((b, _)) if vloss >= *b => {
                    stale += 1;
                    if stale >= cfg.patience {
                        break;
                    }
                }
                _ => {
                    best = Some((vloss, network.clone()));
                    metrics.best_epoch = epoch;
                    stale = 0;
                }
            }
        } else {
            metrics.best_epoch = epoch;
        }
    }
    if let Some((_, net)) = best {
        network = net;
    }
    Ok(MlpModel {
        config: cfg.clone(),
        network,
        scaler,
        metrics,
    })
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.scaler.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.network.output_dim()
    }

    /// Forward pass on raw (unstandardized) inputs. Outputs are not clamped.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(self.network.forward(self.scaler.transform(x).view()))
    }
}

/// Builds a freshly initialized network for `cfg` and checks its gradients on
/// one batch with central differences (h = 1e-5).
pub fn check_gradients(cfg: &MlpConfig, x: ArrayView2<f64>, y: ArrayView2<f64>) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = Network::new(
        &cfg.widths(x.ncols(), y.ncols()),
        cfg.activation,
        Activation::Identity,
        &mut rng,
    );
    gradient_check(&net, x, y, cfg.l2, 1e-5)
}
