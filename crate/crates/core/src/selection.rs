//! R², k-fold cross-validation and hyperparameter search.
//!
//! The search runs over a discrete grid of (hidden layers, units per layer).
//! Two strategies share one driver: seeded random search and a
//! Tree-structured Parzen Estimator that treats each dimension as an
//! independent categorical variable.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{ArrayView2, Axis};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{fit, MlpConfig, NnError};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("target has zero variance")]
    ZeroVariance,
    #[error("length mismatch: {y} targets vs {y_hat} predictions")]
    Length { y: usize, y_hat: usize },
    #[error("no values")]
    Empty,
    #[error("{n} rows cannot fill {k} folds")]
    TooFewRows { n: usize, k: usize },
    #[error("trial {trial}: {message}")]
    Objective { trial: usize, message: String },
    #[error("trial {trial}: non-finite score")]
    NonFiniteScore { trial: usize },
    #[error("trial log {path}: {message}")]
    Log { path: String, message: String },
    #[error("search space is empty")]
    EmptySpace,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Coefficient of determination `1 − Σ(y−ŷ)² / Σ(y−ȳ)²`.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64, SelectionError> {
    if y.len() != y_hat.len() {
        return Err(SelectionError::Length {
            y: y.len(),
            y_hat: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(SelectionError::Empty);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(SelectionError::ZeroVariance);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean of per-column R² for multi-output targets.
///
/// Columns whose target is constant have no R² and are left out of the
/// mean; the call fails only when every column is constant.
pub fn r2_columns(y: ArrayView2<f64>, y_hat: ArrayView2<f64>) -> Result<f64, SelectionError> {
    if y.dim() != y_hat.dim() {
        return Err(SelectionError::Length {
            y: y.len(),
            y_hat: y_hat.len(),
        });
    }
    if y.ncols() == 0 {
        return Err(SelectionError::Empty);
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for (a, b) in y.axis_iter(Axis(1)).zip(y_hat.axis_iter(Axis(1))) {
        match r2(&a.to_vec(), &b.to_vec()) {
            Ok(v) => {
                total += v;
                used += 1;
            }
            Err(SelectionError::ZeroVariance) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(SelectionError::ZeroVariance);
    }
    Ok(total / used as f64)
}

/// Seeded shuffle of `0..n` cut into `k` folds. The first `n % k` folds hold
/// one extra row.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, SelectionError> {
    if k < 2 || n < k {
        return Err(SelectionError::TooFewRows { n, k });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Trains on `k − 1` folds and scores R² on the held-out fold, for every
/// fold. Fold `i` trains with a seed derived from `cfg.seed`.
pub fn kfold_cv(
    k: usize,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &MlpConfig,
    seed: u64,
) -> Result<Vec<f64>, SelectionError> {
    let folds = fold_assignment(x.nrows(), k, seed)?;
    let mut scores = Vec::with_capacity(k);
    for (i, test) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let fold_cfg = MlpConfig {
            seed: derive_seed(cfg.seed, &format!("fold-{i}")),
            ..cfg.clone()
        };
        let model = fit(&fold_cfg, x.select(Axis(0), &train).view(), y.select(Axis(0), &train).view())?;
        let pred = model.predict(x.select(Axis(0), test).view())?;
        scores.push(r2_columns(y.select(Axis(0), test).view(), pred.view())?);
    }
    Ok(scores)
}

/// One point of the search grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hyper {
    pub layers: usize,
    pub units: usize,
}

impl Hyper {
    /// Weights and biases of an MLP with these hidden layers.
    pub fn param_count(&self, input_dim: usize, output_dim: usize) -> usize {
        let u = self.units;
        input_dim * u + u + (self.layers - 1) * (u * u + u) + u * output_dim + output_dim
    }

    pub fn apply(&self, base: &MlpConfig) -> MlpConfig {
        MlpConfig {
            n_hidden_layers: self.layers,
            units: self.units,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub layers: Vec<usize>,
    pub units: Vec<usize>,
}

impl Default for SearchSpace {
    /// 1..=10 hidden layers of 4..=1024 units (powers of two).
    fn default() -> Self {
        Self {
            layers: (1..=10).collect(),
            units: (2..=10).map(|p| 1usize << p).collect(),
        }
    }
}

impl SearchSpace {
    pub fn len(&self) -> usize {
        self.layers.len() * self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Configuration at a flat index, layer-major.
    pub fn at(&self, index: usize) -> Hyper {
        Hyper {
            layers: self.layers[index / self.units.len()],
            units: self.units[index % self.units.len()],
        }
    }

    pub fn index_of(&self, h: &Hyper) -> Option<usize> {
        let li = self.layers.iter().position(|&l| l == h.layers)?;
        let ui = self.units.iter().position(|&u| u == h.units)?;
        Some(li * self.units.len() + ui)
    }

    pub fn contains(&self, h: &Hyper) -> bool {
        self.index_of(h).is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Tpe,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub strategy: Strategy,
    pub n_iter: usize,
    /// Random trials before the density model takes over.
    pub n_startup: usize,
    /// Share of trials counted as good.
    pub gamma: f64,
    pub n_candidates: usize,
    pub seed: u64,
    /// Used only to break score ties by parameter count.
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            strategy: Strategy::Tpe,
            n_iter: 100,
            n_startup: 10,
            gamma: 0.25,
            n_candidates: 24,
            seed: 0,
            input_dim: 1,
            output_dim: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: Hyper,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
    /// Seed handed to the objective.
    pub seed: u64,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Hyper,
    pub best_score: f64,
    pub best_trial: usize,
    pub trials: Vec<Trial>,
}

/// Where to persist trials, and whether to continue an existing log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub path: PathBuf,
    pub resume: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn categorical_weights(values: &[usize], picks: &[usize]) -> Vec<f64> {
    // Laplace prior: one pseudo-count per category.
    let total = (picks.len() + values.len()) as f64;
    values
        .iter()
        .map(|v| (picks.iter().filter(|&&p| p == *v).count() as f64 + 1.0) / total)
        .collect()
}

/// Index of the next configuration to evaluate, never one already tried.
fn propose(space: &SearchSpace, s: &SearchSettings, trials: &[Trial], evaluated: &[bool]) -> usize {
    let t = trials.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s.seed, &format!("propose-{t}")));
    let open: Vec<usize> = (0..space.len()).filter(|&i| !evaluated[i]).collect();
    if s.strategy == Strategy::Random || t < s.n_startup {
        return *open.choose(&mut rng).expect("caller checks for remaining configs");
    }

    let mut order: Vec<&Trial> = trials.iter().collect();
    order.sort_by(|a, b| b.mean_score.total_cmp(&a.mean_score).then(a.index.cmp(&b.index)));
    let n_good = ((s.gamma * t as f64).ceil() as usize).clamp(1, t);
    let (good, bad) = order.split_at(n_good);
    let pick = |set: &[&Trial], f: fn(&Hyper) -> usize| set.iter().map(|t| f(&t.config)).collect::<Vec<_>>();
    let l_layers = categorical_weights(&space.layers, &pick(good, |h| h.layers));
    let g_layers = categorical_weights(&space.layers, &pick(bad, |h| h.layers));
    let l_units = categorical_weights(&space.units, &pick(good, |h| h.units));
    let g_units = categorical_weights(&space.units, &pick(bad, |h| h.units));
    let ratio = |li: usize, ui: usize| {
        (l_layers[li] / g_layers[li]).ln() + (l_units[ui] / g_units[ui]).ln()
    };

    let layer_dist = WeightedIndex::new(&l_layers).expect("positive weights");
    let unit_dist = WeightedIndex::new(&l_units).expect("positive weights");
    let mut best: Option<(f64, usize)> = None;
    for _ in 0..s.n_candidates {
        let (li, ui) = (layer_dist.sample(&mut rng), unit_dist.sample(&mut rng));
        let idx = li * space.units.len() + ui;
        if evaluated[idx] {
            continue;
        }
        let score = ratio(li, ui);
        if best.map_or(true, |(b, _)| score > b) {
            best = Some((score, idx));
        }
    }
    if let Some((_, idx)) = best {
        return idx;
    }
    // Every candidate was already tried: take the best untried point.
    let mut fallback = open[0];
    let mut fallback_score = f64::NEG_INFINITY;
    for &i in &open {
        let score = ratio(i / space.units.len(), i % space.units.len());
        if score > fallback_score {
            fallback_score = score;
            fallback = i;
        }
    }
    fallback
}

fn log_err(path: &Path, e: impl ToString) -> SelectionError {
    SelectionError::Log {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn read_log(path: &Path) -> Result<Vec<Trial>, SelectionError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(log_err(path, e)),
    };
    let mut text = String::new();
    BufReader::new(file).read_to_string(&mut text).map_err(|e| log_err(path, e))?;
    let mut trials = Vec::new();
    let mut lines = text.split('\n').peekable();
    while let Some(line) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Trial>(line) {
            Ok(t) => trials.push(t),
            // An interrupted write leaves an unterminated last line; drop it.
            Err(_) if lines.peek().is_none() => {
                log::warn!("{}: ignoring truncated final line", path.display());
            }
            Err(e) => return Err(log_err(path, e)),
        }
    }
    Ok(trials)
}

/// Runs a search. The objective receives a configuration and a seed and
/// returns per-fold scores; the trial score is their mean.
///
/// With a resumable log, logged trials are replayed through the proposal
/// step, which must reproduce them exactly; the search then continues where
/// the log stops. When `n_iter` is at least the grid size the whole grid is
/// evaluated once.
pub fn search<F>(
    space: &SearchSpace,
    settings: &SearchSettings,
    log: Option<&TrialLog>,
    mut objective: F,
) -> Result<SearchResult, SelectionError>
where
    F: FnMut(&Hyper, u64) -> Result<Vec<f64>, String>,
{
    if space.is_empty() {
        return Err(SelectionError::EmptySpace);
    }
    let n_iter = settings.n_iter.min(space.len());
    let mut evaluated = vec![false; space.len()];
    let mut trials: Vec<Trial> = Vec::new();

    let mut writer = None;
    if let Some(log) = log {
        if log.resume {
            for t in read_log(&log.path)? {
                let expected = propose(space, settings, &trials, &evaluated);
                let consistent = t.index == trials.len()
                    && space.index_of(&t.config) == Some(expected)
                    && !t.fold_scores.is_empty()
                    && (mean(&t.fold_scores) - t.mean_score).abs() <= 1e-12;
                if !consistent {
                    return Err(log_err(
                        &log.path,
                        format!("trial {} does not replay under the current settings", t.index),
                    ));
                }
                evaluated[expected] = true;
                trials.push(t);
            }
        }
        // Rewriting the replayed prefix also discards a truncated last line.
        let mut file = File::create(&log.path).map_err(|e| log_err(&log.path, e))?;
        for t in &trials {
            let line = serde_json::to_string(t).map_err(|e| log_err(&log.path, e))?;
            writeln!(file, "{line}").map_err(|e| log_err(&log.path, e))?;
        }
        writer = Some((file, log.path.clone()));
    }

    while trials.len() < n_iter {
        let index = trials.len();
        let pick = propose(space, settings, &trials, &evaluated);
        let config = space.at(pick);
        let seed = derive_seed(settings.seed, &format!("eval-{index}"));
        let fold_scores =
            objective(&config, seed).map_err(|message| SelectionError::Objective { trial: index, message })?;
        if fold_scores.is_empty() || fold_scores.iter().any(|v| !v.is_finite()) {
            return Err(SelectionError::NonFiniteScore { trial: index });
        }
        let trial = Trial {
            index,
            config,
            mean_score: mean(&fold_scores),
            fold_scores,
            seed,
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        log::debug!("trial {index} {:?}: {:.4}", trial.config, trial.mean_score);
        if let Some((file, path)) = writer.as_mut() {
            let line = serde_json::to_string(&trial).map_err(|e| log_err(path, e))?;
            writeln!(file, "{line}").map_err(|e| log_err(path, e))?;
            file.flush().map_err(|e| log_err(path, e))?;
        }
        evaluated[pick] = true;
        trials.push(trial);
    }

    let params = |h: &Hyper| h.param_count(settings.input_dim, settings.output_dim);
    let best = trials
        .iter()
        .min_by(|a, b| {
            b.mean_score
                .total_cmp(&a.mean_score)
                .then(params(&a.config).cmp(&params(&b.config)))
                .then(a.index.cmp(&b.index))
        })
        .expect("at least one trial")
        .clone();
    Ok(SearchResult {
        best: best.config,
        best_score: best.mean_score,
        best_trial: best.index,
        trials,
    })
}

/// TPE search without a log.
pub fn tpe_search<F>(space: &SearchSpace, n_iter: usize, seed: u64, objective: F) -> Result<SearchResult, SelectionError>
where
    F: FnMut(&Hyper, u64) -> Result<Vec<f64>, String>,
{
    let s = SearchSettings {
        n_iter,
        seed,
        ..Default::default()
    };
    search(space, &s, None, objective)
}

/// Seeded random search without a log.
pub fn random_search<F>(space: &SearchSpace, n_iter: usize, seed: u64, objective: F) -> Result<SearchResult, SelectionError>
where
    F: FnMut(&Hyper, u64) -> Result<Vec<f64>, String>,
{
    let s = SearchSettings {
        strategy: Strategy::Random,
        n_iter,
        seed,
        ..Default::default()
    };
    search(space, &s, None, objective)
}

/// Objective that scores an MLP configuration by k-fold CV R².
///
/// Folds come from `fold_seed` and stay fixed across trials so every
/// configuration sees the same partition.
pub fn mlp_cv_objective<'a>(
    x: ArrayView2<'a, f64>,
    y: ArrayView2<'a, f64>,
    base: &'a MlpConfig,
    k: usize,
    fold_seed: u64,
) -> impl FnMut(&Hyper, u64) -> Result<Vec<f64>, String> + 'a {
    move |h, seed| {
        let cfg = MlpConfig { seed, ..h.apply(base) };
        kfold_cv(k, x, y, &cfg, fold_seed).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn bowl(h: &Hyper, _: u64) -> Result<Vec<f64>, String> {
        let l = h.layers as f64;
        let u = (h.units as f64).log2();
        Ok(vec![1.0 - (l - 3.0).abs() / 10.0 - (u - 5.0).abs() / 10.0])
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(r2(&[2.0, 2.0], &[1.0, 3.0]), Err(SelectionError::ZeroVariance)));
        assert!(matches!(r2(&[1.0], &[]), Err(SelectionError::Length { .. })));
    }

    #[test]
    fn column_r2_skips_constant_targets() {
        let y = ndarray::array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let p = ndarray::array![[1.0, 4.0], [2.0, 6.0], [4.0, 5.0]];
        assert!((r2_columns(y.view(), p.view()).unwrap() - 0.5).abs() < 1e-15);
        let c = ndarray::array![[5.0], [5.0]];
        assert!(matches!(r2_columns(c.view(), c.view()), Err(SelectionError::ZeroVariance)));
    }

    #[test]
    fn fold_sizes() {
        let f = fold_assignment(100, 10, 1).unwrap();
        assert!(f.iter().all(|f| f.len() == 10));
        let f = fold_assignment(95, 10, 1).unwrap();
        let sizes: Vec<usize> = f.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![10, 10, 10, 10, 10, 9, 9, 9, 9, 9]);
        assert_eq!(f, fold_assignment(95, 10, 1).unwrap());
        assert!(matches!(fold_assignment(9, 10, 0), Err(SelectionError::TooFewRows { n: 9, k: 10 })));
    }

    #[test]
    fn default_space_has_90_configs() {
        let s = SearchSpace::default();
        assert_eq!(s.len(), 90);
        assert_eq!(s.at(0), Hyper { layers: 1, units: 4 });
        assert_eq!(s.at(89), Hyper { layers: 10, units: 1024 });
        assert_eq!(s.index_of(&Hyper { layers: 3, units: 32 }), Some(21));
    }

    #[test]
    fn tpe_finds_bowl_optimum() {
        let r = tpe_search(&SearchSpace::default(), 100, 3, bowl).unwrap();
        assert_eq!(r.best, Hyper { layers: 3, units: 32 });
        assert_eq!(r.trials.len(), 90);
        // The optimum shows up well before the grid is exhausted.
        let r = tpe_search(&SearchSpace::default(), 40, 3, bowl).unwrap();
        assert_eq!(r.best, Hyper { layers: 3, units: 32 }, "{:?}", r.trials.iter().map(|t| t.config).collect::<Vec<_>>());
    }

    #[test]
    fn trials_are_distinct_and_deterministic() {
        let space = SearchSpace::default();
        let a = tpe_search(&space, 60, 11, bowl).unwrap();
        let b = tpe_search(&space, 60, 11, bowl).unwrap();
        let ca: Vec<Hyper> = a.trials.iter().map(|t| t.config).collect();
        let cb: Vec<Hyper> = b.trials.iter().map(|t| t.config).collect();
        assert_eq!(ca, cb);
        let mut uniq = ca.clone();
        uniq.sort_by_key(|h| (h.layers, h.units));
        uniq.dedup();
        assert_eq!(uniq.len(), 60);
        let r = random_search(&space, 60, 11, bowl).unwrap();
        assert!(r.trials.iter().all(|t| space.contains(&t.config)));
    }

    #[test]
    fn ties_prefer_fewer_parameters() {
        let space = SearchSpace {
            layers: vec![1, 2],
            units: vec![4, 8],
        };
        let r = tpe_search(&space, 10, 0, |_, _| Ok(vec![0.5])).unwrap();
        assert_eq!(r.best, Hyper { layers: 1, units: 4 });
        assert_eq!(r.best_score, 0.5);
    }

    #[test]
    fn resume_continues_the_same_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        let space = SearchSpace::default();
        let full = tpe_search(&space, 30, 5, bowl).unwrap();

        let s = SearchSettings {
            n_iter: 12,
            seed: 5,
            ..Default::default()
        };
        let log = TrialLog {
            path: path.clone(),
            resume: false,
        };
        search(&space, &s, Some(&log), bowl).unwrap();
        let resumed = TrialLog { path: path.clone(), resume: true };
        let s30 = SearchSettings { n_iter: 30, ..s.clone() };
        let mut calls = 0;
        let r = search(&space, &s30, Some(&resumed), |h, seed| {
            calls += 1;
            bowl(h, seed)
        })
        .unwrap();
        assert_eq!(calls, 18);
        let configs = |r: &SearchResult| r.trials.iter().map(|t| t.config).collect::<Vec<_>>();
        assert_eq!(configs(&r), configs(&full));
        assert_eq!(read_log(&path).unwrap().len(), 30);

        // A different seed cannot replay the log.
        let other = SearchSettings { seed: 6, ..s30 };
        assert!(matches!(search(&space, &other, Some(&resumed), bowl), Err(SelectionError::Log { .. })));
    }

    #[test]
    fn resume_drops_an_interrupted_last_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        let space = SearchSpace::default();
        let s = SearchSettings {
            n_iter: 6,
            seed: 2,
            ..Default::default()
        };
        let log = TrialLog { path: path.clone(), resume: false };
        search(&space, &s, Some(&log), bowl).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = text.trim_end().rfind('\n').unwrap() + 20;
        std::fs::write(&path, &text[..cut]).unwrap();

        let resumed = TrialLog { path: path.clone(), resume: true };
        let mut calls = 0;
        let r = search(&space, &s, Some(&resumed), |h, seed| {
            calls += 1;
            bowl(h, seed)
        })
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(r.trials.len(), 6);
        assert_eq!(read_log(&path).unwrap(), r.trials);
        let garbled = format!("{}\n{}", &text[..cut], &text[cut..]);
        std::fs::write(&path, garbled).unwrap();
        assert!(search(&space, &s, Some(&resumed), bowl).is_err());
    }

    #[test]
    fn objective_errors_propagate() {
        let r = tpe_search(&SearchSpace::default(), 5, 0, |_, _| Err("boom".to_string()));
        assert!(matches!(r, Err(SelectionError::Objective { trial: 0, .. })));
        let r = tpe_search(&SearchSpace::default(), 5, 0, |_, _| Ok(vec![f64::NAN]));
        assert!(matches!(r, Err(SelectionError::NonFiniteScore { trial: 0 })));
    }

    #[test]
    fn cv_on_linear_data() {
        let x = Array2::from_shape_fn((60, 2), |(i, j)| ((i * 13 + j * 7) % 17) as f64 / 8.0 - 1.0);
        let y = x.map_axis(Axis(1), |r| r[0] - 2.0 * r[1]).insert_axis(Axis(1));
        let cfg = MlpConfig {
            units: 16,
            epochs: 150,
            batch_size: 8,
            learning_rate: 1e-2,
            seed: 1,
            ..Default::default()
        };
        let scores = kfold_cv(5, x.view(), y.view(), &cfg, 2).unwrap();
        assert_eq!(scores.len(), 5);
        assert!(mean(&scores) > 0.9, "{scores:?}");
    }

    proptest! {
        #[test]
        fn folds_partition_rows(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let folds = fold_assignment(n, k, seed).unwrap();
            let mut all: Vec<usize> = folds.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let max = folds.iter().map(Vec::len).max().unwrap();
            let min = folds.iter().map(Vec::len).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn r2_at_most_one(y in proptest::collection::vec(-10.0f64..10.0, 2..40), noise in -1.0f64..1.0) {
            let y_hat: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + noise * (i as f64).sin()).collect();
            if let Ok(v) = r2(&y, &y_hat) {
                prop_assert!(v <= 1.0);
            }
        }
    }
}
