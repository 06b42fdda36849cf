//! Feature assembly, the two-stage predictors and the experiment matrix.
//!
//! Stage one predicts the seven sound-source ratings (eSS) from acoustic
//! and/or aerial features. Stage two predicts one impression from a feature
//! combination, optionally including sound-source ratings that are either the
//! listeners' own (oracle) or stage-one estimates.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::acoustic::FEATURE_LEN;
use crate::data::{DataError, DatasetManifest, ImpressionPair, SoundSourceScores, NUM_SOURCES};
use crate::embedding::BOTTLENECK_DIM;
use crate::nn::{fit, MlpConfig, MlpModel, NnError};
use crate::seed::derive_seed;
use crate::selection::{
    mlp_cv_objective, r2_columns, search, Hyper, SearchResult, SearchSettings, SearchSpace, SelectionError, Strategy,
    TrialLog,
};
use crate::ssqp::impressions_from_attributes;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{combo} needs the {part} part")]
    MissingPart { combo: FeatureCombo, part: &'static str },
    #[error("{part} part has {got} values, expected {expected}")]
    PartLength { part: &'static str, expected: usize, got: usize },
    #[error("combo has no SS slot: {0}")]
    NoSsSlot(FeatureCombo),
    #[error("{0} needs a sound-source origin")]
    SsRequired(FeatureCombo),
    #[error("sound-source predictor takes {expected}, got one for {got}")]
    PredictorMismatch { expected: SsInput, got: SsInput },
    #[error("leakage guard: row {row} carries {found} sound-source values where {expected} was requested")]
    Leakage { row: usize, expected: String, found: String },
    #[error("empty training set")]
    Empty,
    #[error("unknown name {0:?}")]
    UnknownName(String),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
}

macro_rules! string_enum {
    ($ty:ident { $($variant:ident => $name:expr),+ $(,)? }) => {
        impl $ty {
            pub fn name(&self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
        impl FromStr for $ty {
            type Err = PipelineError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(PipelineError::UnknownName(other.to_string())),
                }
            }
        }
        impl From<$ty> for String {
            fn from(v: $ty) -> String {
                v.name().to_string()
            }
        }
        impl TryFrom<String> for $ty {
            type Error = PipelineError;
            fn try_from(s: String) -> Result<Self, Self::Error> {
                s.parse()
            }
        }
    };
}

/// Input features of an impression model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FeatureCombo {
    Es,
    EsSs,
    Ap,
    ApSs,
    EsAp,
    EsApSs,
}

string_enum!(FeatureCombo {
    Es => "ES",
    EsSs => "ES+SS",
    Ap => "AP",
    ApSs => "AP+SS",
    EsAp => "ES+AP",
    EsApSs => "ES+AP+SS",
});

impl FeatureCombo {
    pub const ALL: [FeatureCombo; 6] = [Self::Es, Self::EsSs, Self::Ap, Self::ApSs, Self::EsAp, Self::EsApSs];
    pub const WITH_SS: [FeatureCombo; 3] = [Self::EsSs, Self::ApSs, Self::EsApSs];

    pub fn has_es(self) -> bool {
        matches!(self, Self::Es | Self::EsSs | Self::EsAp | Self::EsApSs)
    }

    pub fn has_ap(self) -> bool {
        matches!(self, Self::Ap | Self::ApSs | Self::EsAp | Self::EsApSs)
    }

    pub fn has_ss(self) -> bool {
        matches!(self, Self::EsSs | Self::ApSs | Self::EsApSs)
    }

    pub fn dim(self) -> usize {
        usize::from(self.has_es()) * FEATURE_LEN
            + usize::from(self.has_ap()) * BOTTLENECK_DIM
            + usize::from(self.has_ss()) * NUM_SOURCES
    }
}

/// Features a sound-source predictor reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SsInput {
    Es,
    Ap,
    EsAp,
}

string_enum!(SsInput {
    Es => "ES",
    Ap => "AP",
    EsAp => "ES+AP",
});

impl SsInput {
    pub const ALL: [SsInput; 3] = [Self::Es, Self::Ap, Self::EsAp];

    pub fn combo(self) -> FeatureCombo {
        match self {
            Self::Es => FeatureCombo::Es,
            Self::Ap => FeatureCombo::Ap,
            Self::EsAp => FeatureCombo::EsAp,
        }
    }
}

/// Where sound-source values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SsSource {
    Oracle,
    Estimated(SsInput),
}

impl SsSource {
    pub const ALL_ESTIMATED: [SsSource; 3] = [
        Self::Estimated(SsInput::Es),
        Self::Estimated(SsInput::Ap),
        Self::Estimated(SsInput::EsAp),
    ];
}

impl fmt::Display for SsSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Oracle => f.write_str("oracle"),
            Self::Estimated(i) => write!(f, "eSS[{i}]"),
        }
    }
}

impl FromStr for SsSource {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "oracle" {
            return Ok(Self::Oracle);
        }
        s.strip_prefix("eSS[")
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| PipelineError::UnknownName(s.to_string()))?
            .parse()
            .map(Self::Estimated)
    }
}

impl From<SsSource> for String {
    fn from(v: SsSource) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for SsSource {
    type Error = PipelineError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Impression {
    Pleasantness,
    Eventfulness,
}

string_enum!(Impression {
    Pleasantness => "P",
    Eventfulness => "E",
});

impl Impression {
    pub const BOTH: [Impression; 2] = [Self::Pleasantness, Self::Eventfulness];

    pub fn of(self, pair: &ImpressionPair) -> f64 {
        match self {
            Self::Pleasantness => pair.p,
            Self::Eventfulness => pair.e,
        }
    }
}

/// Seven sound-source values in [0, 1] tagged with their origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsPart {
    pub values: [f64; NUM_SOURCES],
    pub origin: SsSource,
}

impl SsPart {
    /// Listener ratings mapped from 1..5 onto [0, 1].
    pub fn oracle(scores: &SoundSourceScores) -> Self {
        Self {
            values: scores.scaled(),
            origin: SsSource::Oracle,
        }
    }

    /// Predictor output clamped to [0, 1].
    pub fn estimated(raw: &[f64], input: SsInput) -> Self {
        Self {
            values: std::array::from_fn(|i| raw[i].clamp(0.0, 1.0)),
            origin: SsSource::Estimated(input),
        }
    }
}

/// An assembled input row and the provenance of its SS slot.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub ss_origin: Option<SsSource>,
}

fn checked<'a>(part: Option<&'a [f64]>, name: &'static str, len: usize, combo: FeatureCombo) -> Result<&'a [f64], PipelineError> {
    let v = part.ok_or(PipelineError::MissingPart { combo, part: name })?;
    if v.len() != len {
        return Err(PipelineError::PartLength {
            part: name,
            expected: len,
            got: v.len(),
        });
    }
    Ok(v)
}

/// Concatenates ES ∥ AP ∥ SS for the parts the combo uses; other parts are
/// ignored.
pub fn assemble(
    combo: FeatureCombo,
    es: Option<&[f64]>,
    ap: Option<&[f64]>,
    ss: Option<&SsPart>,
) -> Result<FeatureVector, PipelineError> {
    let mut values = Vec::with_capacity(combo.dim());
    if combo.has_es() {
        values.extend_from_slice(checked(es, "ES", FEATURE_LEN, combo)?);
    }
    if combo.has_ap() {
        values.extend_from_slice(checked(ap, "AP", BOTTLENECK_DIM, combo)?);
    }
    let mut ss_origin = None;
    if combo.has_ss() {
        let part = ss.ok_or(PipelineError::MissingPart { combo, part: "SS" })?;
        values.extend_from_slice(&part.values);
        ss_origin = Some(part.origin);
    }
    debug_assert_eq!(values.len(), combo.dim());
    Ok(FeatureVector { values, ss_origin })
}

/// One recording with whatever features are available.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub es: Option<Vec<f64>>,
    pub ap: Option<Vec<f64>>,
    pub sources: SoundSourceScores,
    pub impression: ImpressionPair,
}

/// Joins manifest entries with feature vectors by id. Entries may lack
/// features; combos that need them fail at assembly time.
pub fn build_samples(
    manifest: &DatasetManifest,
    es: &HashMap<String, Vec<f64>>,
    ap: &HashMap<String, Vec<f64>>,
) -> Result<Vec<Sample>, PipelineError> {
    manifest
        .entries
        .iter()
        .map(|e| {
            Ok(Sample {
                id: e.recording.id.clone(),
                es: es.get(&e.recording.id).cloned(),
                ap: ap.get(&e.recording.id).cloned(),
                sources: e.sources,
                impression: impressions_from_attributes(&e.attributes).map_err(DataError::from)?,
            })
        })
        .collect()
}

/// Hyperparameter search settings shared by both stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoSettings {
    pub space: SearchSpace,
    pub strategy: Strategy,
    pub n_iter: usize,
    pub folds: usize,
    /// Everything except depth, width and seed.
    pub base: MlpConfig,
    /// Skip the search and train this configuration directly.
    pub fixed: Option<Hyper>,
    /// Persist search trials here. Not part of the settings fingerprint.
    #[serde(skip)]
    pub trial_log: Option<TrialLog>,
}

impl Default for HpoSettings {
    fn default() -> Self {
        Self {
            space: SearchSpace::default(),
            strategy: Strategy::Tpe,
            n_iter: 100,
            folds: 10,
            base: MlpConfig::default(),
            fixed: None,
            trial_log: None,
        }
    }
}

/// A model chosen by search (or fixed) and refit on the full training set.
#[derive(Debug, Clone)]
pub struct Selected {
    pub model: MlpModel,
    pub config: Hyper,
    /// Mean CV R² of the chosen configuration; absent when fixed.
    pub cv_score: Option<f64>,
    pub search: Option<SearchResult>,
}

fn select_and_fit(x: &Array2<f64>, y: &Array2<f64>, hpo: &HpoSettings, seed: u64) -> Result<Selected, PipelineError> {
    if x.nrows() == 0 {
        return Err(PipelineError::Empty);
    }
    let (config, cv_score, result) = match hpo.fixed {
        Some(h) => (h, None, None),
        None => {
            let settings = SearchSettings {
                strategy: hpo.strategy,
                n_iter: hpo.n_iter,
                seed: derive_seed(seed, "search"),
                input_dim: x.ncols(),
                output_dim: y.ncols(),
                ..Default::default()
            };
            let objective = mlp_cv_objective(x.view(), y.view(), &hpo.base, hpo.folds, derive_seed(seed, "folds"));
            let r = search(&hpo.space, &settings, hpo.trial_log.as_ref(), objective)?;
            (r.best, Some(r.best_score), Some(r))
        }
    };
    let cfg = MlpConfig {
        seed: derive_seed(seed, "final"),
        ..config.apply(&hpo.base)
    };
    let model = fit(&cfg, x.view(), y.view())?;
    Ok(Selected {
        model,
        config,
        cv_score,
        search: result,
    })
}

fn stack(rows: &[FeatureVector]) -> Array2<f64> {
    let dim = rows.first().map_or(0, |r| r.values.len());
    Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i].values[j])
}

/// Multi-output predictor of the seven sound-source ratings.
#[derive(Debug, Clone)]
pub struct SsPredictor {
    pub input: SsInput,
    pub selected: Selected,
}

impl SsPredictor {
    /// Clamped estimates for one sample.
    pub fn estimate(&self, s: &Sample) -> Result<SsPart, PipelineError> {
        Ok(self.estimate_all(std::slice::from_ref(s))?.remove(0))
    }

    pub fn estimate_all(&self, samples: &[Sample]) -> Result<Vec<SsPart>, PipelineError> {
        let rows = samples
            .iter()
            .map(|s| assemble(self.input.combo(), s.es.as_deref(), s.ap.as_deref(), None))
            .collect::<Result<Vec<_>, _>>()?;
        let pred = self.selected.model.predict(stack(&rows).view())?;
        Ok(pred
            .rows()
            .into_iter()
            .map(|r| SsPart::estimated(&r.to_vec(), self.input))
            .collect())
    }
}

fn ss_targets(samples: &[Sample]) -> Array2<f64> {
    Array2::from_shape_fn((samples.len(), NUM_SOURCES), |(i, j)| samples[i].sources.scaled()[j])
}

/// Trains the stage-one regressor on listener ratings scaled to [0, 1].
pub fn train_sound_source_predictor(
    input: SsInput,
    train: &[Sample],
    hpo: &HpoSettings,
    seed: u64,
) -> Result<SsPredictor, PipelineError> {
    let rows = train
        .iter()
        .map(|s| assemble(input.combo(), s.es.as_deref(), s.ap.as_deref(), None))
        .collect::<Result<Vec<_>, _>>()?;
    let selected = select_and_fit(&stack(&rows), &ss_targets(train), hpo, seed)?;
    Ok(SsPredictor { input, selected })
}

/// Mean per-class R² of the clamped estimates.
pub fn evaluate_sound_source_predictor(p: &SsPredictor, test: &[Sample]) -> Result<f64, PipelineError> {
    let parts = p.estimate_all(test)?;
    let pred = Array2::from_shape_fn((test.len(), NUM_SOURCES), |(i, j)| parts[i].values[j]);
    Ok(r2_columns(ss_targets(test).view(), pred.view())?)
}

/// Builds impression-model inputs for a combo and SS origin. With an eSS
/// origin every SS slot is filled from `predictor`, at training and test time.
pub fn impression_features(
    combo: FeatureCombo,
    ss_source: Option<SsSource>,
    samples: &[Sample],
    predictor: Option<&SsPredictor>,
) -> Result<Vec<FeatureVector>, PipelineError> {
    let parts: Vec<Option<SsPart>> = match (combo.has_ss(), ss_source) {
        (false, Some(_)) => return Err(PipelineError::NoSsSlot(combo)),
        (true, None) => return Err(PipelineError::SsRequired(combo)),
        (false, None) => vec![None; samples.len()],
        (true, Some(SsSource::Oracle)) => samples.iter().map(|s| Some(SsPart::oracle(&s.sources))).collect(),
        (true, Some(SsSource::Estimated(input))) => {
            let p = predictor.ok_or(PipelineError::SsRequired(combo))?;
            if p.input != input {
                return Err(PipelineError::PredictorMismatch {
                    expected: input,
                    got: p.input,
                });
            }
            p.estimate_all(samples)?.into_iter().map(Some).collect()
        }
    };
    samples
        .iter()
        .zip(&parts)
        .map(|(s, ss)| assemble(combo, s.es.as_deref(), s.ap.as_deref(), ss.as_ref()))
        .collect()
}

/// Rejects any row whose SS provenance differs from the requested origin.
pub fn check_provenance(rows: &[FeatureVector], ss_source: Option<SsSource>) -> Result<(), PipelineError> {
    let label = |o: Option<SsSource>| o.map_or("no".to_string(), |s| s.to_string());
    match rows.iter().position(|r| r.ss_origin != ss_source) {
        Some(row) => Err(PipelineError::Leakage {
            row,
            expected: label(ss_source),
            found: label(rows[row].ss_origin),
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct ImpressionModel {
    pub combo: FeatureCombo,
    pub ss_source: Option<SsSource>,
    /// Target columns, in output order.
    pub impressions: Vec<Impression>,
    pub selected: Selected,
}

/// Fits an impression model on pre-assembled rows after the leakage check.
pub fn fit_impression_rows(
    combo: FeatureCombo,
    ss_source: Option<SsSource>,
    impressions: &[Impression],
    rows: &[FeatureVector],
    targets: &[ImpressionPair],
    hpo: &HpoSettings,
    seed: u64,
) -> Result<ImpressionModel, PipelineError> {
    check_provenance(rows, ss_source)?;
    let y = Array2::from_shape_fn((targets.len(), impressions.len()), |(i, j)| impressions[j].of(&targets[i]));
    let selected = select_and_fit(&stack(rows), &y, hpo, seed)?;
    Ok(ImpressionModel {
        combo,
        ss_source,
        impressions: impressions.to_vec(),
        selected,
    })
}

/// Trains one impression model (or a joint model when several impressions
/// are given).
pub fn train_impression_predictor(
    combo: FeatureCombo,
    ss_source: Option<SsSource>,
    impressions: &[Impression],
    train: &[Sample],
    predictor: Option<&SsPredictor>,
    hpo: &HpoSettings,
    seed: u64,
) -> Result<ImpressionModel, PipelineError> {
    let rows = impression_features(combo, ss_source, train, predictor)?;
    let targets: Vec<ImpressionPair> = train.iter().map(|s| s.impression).collect();
    fit_impression_rows(combo, ss_source, impressions, &rows, &targets, hpo, seed)
}

impl ImpressionModel {
    /// Test R² per impression, on predictions clamped to [-1, 1].
    pub fn evaluate(&self, test: &[Sample], predictor: Option<&SsPredictor>) -> Result<Vec<f64>, PipelineError> {
        let rows = impression_features(self.combo, self.ss_source, test, predictor)?;
        check_provenance(&rows, self.ss_source)?;
        let pred = self.selected.model.predict(stack(&rows).view())?.mapv(|v| v.clamp(-1.0, 1.0));
        self.impressions
            .iter()
            .enumerate()
            .map(|(j, imp)| {
                let y: Vec<f64> = test.iter().map(|s| imp.of(&s.impression)).collect();
                Ok(crate::selection::r2(&y, &pred.column(j).to_vec())?)
            })
            .collect()
    }
}

/// Published reference scores kept in the report for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCell {
    pub key: String,
    pub r2: f64,
}

pub fn reference_cells() -> Vec<ReferenceCell> {
    [
        ("P/ES+SS/oracle", 0.659),
        ("E/AP+SS/oracle", 0.769),
        ("P/ES+SS/eSS[ES+AP]", 0.601),
        ("E/ES+SS/eSS[AP]", 0.742),
    ]
    .into_iter()
    .map(|(k, r)| ReferenceCell { key: k.into(), r2: r })
    .collect()
}

pub fn cell_key(impression: Impression, combo: FeatureCombo, ss_source: Option<SsSource>) -> String {
    let src = ss_source.map_or("none".to_string(), |s| s.to_string());
    format!("{impression}/{combo}/{src}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub hpo: HpoSettings,
    pub master_seed: u64,
    pub impressions: Vec<Impression>,
    /// The 6 combos × impressions with listener SS.
    pub oracle_cells: bool,
    /// The 3 SS combos × 3 estimated sources × impressions.
    pub estimated_cells: bool,
    /// One two-output model per (combo, source) instead of one per impression.
    pub joint: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            hpo: HpoSettings::default(),
            master_seed: 0,
            impressions: Impression::BOTH.to_vec(),
            oracle_cells: true,
            estimated_cells: true,
            joint: false,
        }
    }
}

impl ExperimentSettings {
    /// SHA-256 of the settings as JSON, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("settings serialize");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub impression: Impression,
    pub combo: FeatureCombo,
    pub ss_source: Option<SsSource>,
    pub status: CellStatus,
    pub test_r2: Option<f64>,
    pub error: Option<String>,
    pub config: Option<Hyper>,
    pub cv_r2: Option<f64>,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    /// Test R² minus the oracle ES+SS cell of the same impression.
    pub delta_vs_es_ss: Option<f64>,
    /// Test R² minus the best oracle SS cell of the same impression.
    pub delta_vs_best_oracle_ss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSummary {
    pub input: SsInput,
    pub status: CellStatus,
    pub config: Option<Hyper>,
    pub cv_r2: Option<f64>,
    /// Mean per-class R² on the test set.
    pub test_r2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub fingerprint: String,
    pub settings: ExperimentSettings,
    pub n_train: usize,
    pub n_test: usize,
    pub predictors: Vec<PredictorSummary>,
    /// Keyed `impression/combo/ss_source`.
    pub cells: BTreeMap<String, CellResult>,
    pub reference: Vec<ReferenceCell>,
}

struct Task {
    combo: FeatureCombo,
    ss_source: Option<SsSource>,
    impressions: Vec<Impression>,
}

fn task_label(t: &Task) -> String {
    let imps: Vec<&str> = t.impressions.iter().map(|i| i.name()).collect();
    format!("{}|{}", imps.join(","), cell_key(Impression::Pleasantness, t.combo, t.ss_source))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// Per-cell trial logs, one JSON-lines file per search under `dir`.
#[derive(Debug, Clone, Copy)]
pub struct TrialLogDir<'a> {
    pub dir: &'a Path,
    pub resume: bool,
}

impl TrialLogDir<'_> {
    fn hpo_for(&self, base: &HpoSettings, label: &str) -> HpoSettings {
        let name: String = label
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        HpoSettings {
            trial_log: Some(TrialLog {
                path: self.dir.join(format!("{name}.jsonl")),
                resume: self.resume,
            }),
            ..base.clone()
        }
    }
}

fn hpo_for(s: &ExperimentSettings, logs: Option<TrialLogDir>, label: &str) -> HpoSettings {
    match logs {
        Some(l) => l.hpo_for(&s.hpo, label),
        None => s.hpo.clone(),
    }
}

fn run_task(
    t: &Task,
    train: &[Sample],
    test: &[Sample],
    predictor: Option<&Result<SsPredictor, String>>,
    s: &ExperimentSettings,
    logs: Option<TrialLogDir>,
) -> Vec<CellResult> {
    let label = task_label(t);
    let seed = derive_seed(s.master_seed, &format!("cell/{label}"));
    let hpo = hpo_for(s, logs, &format!("cell/{label}"));
    let started = now();
    let outcome = (|| -> Result<(ImpressionModel, Vec<f64>), String> {
        let p = match predictor {
            Some(Ok(p)) => Some(p),
            Some(Err(e)) => return Err(format!("sound-source predictor failed: {e}")),
            None => None,
        };
        let m = train_impression_predictor(t.combo, t.ss_source, &t.impressions, train, p, &hpo, seed)
            .map_err(|e| e.to_string())?;
        let scores = m.evaluate(test, p).map_err(|e| e.to_string())?;
        Ok((m, scores))
    })();
    let finished = now();
    t.impressions
        .iter()
        .enumerate()
        .map(|(j, &impression)| {
            let base = CellResult {
                impression,
                combo: t.combo,
                ss_source: t.ss_source,
                status: CellStatus::Failed,
                test_r2: None,
                error: None,
                config: None,
                cv_r2: None,
                seed,
                started: started.clone(),
                finished: finished.clone(),
                delta_vs_es_ss: None,
                delta_vs_best_oracle_ss: None,
            };
            match &outcome {
                Ok((m, scores)) if scores[j].is_finite() => CellResult {
                    status: CellStatus::Ok,
                    test_r2: Some(scores[j]),
                    config: Some(m.selected.config),
                    cv_r2: m.selected.cv_score,
                    ..base
                },
                Ok(_) => CellResult {
                    error: Some("non-finite test R²".into()),
                    ..base
                },
                Err(e) => CellResult {
                    error: Some(e.clone()),
                    ..base
                },
            }
        })
        .collect()
}

fn fill_deltas(cells: &mut BTreeMap<String, CellResult>) {
    let oracle: Vec<(Impression, FeatureCombo, f64)> = cells
        .values()
        .filter(|c| c.ss_source == Some(SsSource::Oracle))
        .filter_map(|c| c.test_r2.map(|r| (c.impression, c.combo, r)))
        .collect();
    for c in cells.values_mut() {
        let (Some(SsSource::Estimated(_)), Some(r)) = (c.ss_source, c.test_r2) else {
            continue;
        };
        let same = oracle.iter().filter(|o| o.0 == c.impression);
        c.delta_vs_es_ss = same
            .clone()
            .find(|o| o.1 == FeatureCombo::EsSs)
            .map(|o| r - o.2);
        c.delta_vs_best_oracle_ss = same.map(|o| o.2).reduce(f64::max).map(|best| r - best);
    }
}

/// Runs every requested cell. Cells run in parallel, each with a seed derived
/// from the master seed and its key; a failed cell is recorded and the rest
/// continue.
pub fn run_experiment_matrix(train: &[Sample], test: &[Sample], s: &ExperimentSettings) -> ExperimentReport {
    run_experiment_matrix_logged(train, test, s, None)
}

/// [`run_experiment_matrix`] with every search logged under a directory.
/// With `resume`, logged trials are replayed instead of re-evaluated.
pub fn run_experiment_matrix_logged(
    train: &[Sample],
    test: &[Sample],
    s: &ExperimentSettings,
    logs: Option<TrialLogDir>,
) -> ExperimentReport {
    let predictors: BTreeMap<SsInput, Result<SsPredictor, String>> = if s.estimated_cells {
        SsInput::ALL
            .par_iter()
            .map(|&input| {
                let seed = derive_seed(s.master_seed, &format!("ss/{input}"));
                let hpo = hpo_for(s, logs, &format!("ss/{input}"));
                let p = train_sound_source_predictor(input, train, &hpo, seed).map_err(|e| e.to_string());
                (input, p)
            })
            .collect()
    } else {
        BTreeMap::new()
    };

    let groups: Vec<Vec<Impression>> = if s.joint {
        vec![s.impressions.clone()]
    } else {
        s.impressions.iter().map(|&i| vec![i]).collect()
    };
    let mut tasks = Vec::new();
    let mut push = |combo, ss_source| {
        for g in &groups {
            tasks.push(Task {
                combo,
                ss_source,
                impressions: g.clone(),
            });
        }
    };
    if s.oracle_cells {
        for combo in FeatureCombo::ALL {
            push(combo, combo.has_ss().then_some(SsSource::Oracle));
        }
    }
    if s.estimated_cells {
        for combo in FeatureCombo::WITH_SS {
            for src in SsSource::ALL_ESTIMATED {
                push(combo, Some(src));
            }
        }
    }

    let results: Vec<CellResult> = tasks
        .par_iter()
        .flat_map_iter(|t| {
            let p = match t.ss_source {
                Some(SsSource::Estimated(input)) => predictors.get(&input),
                _ => None,
            };
            run_task(t, train, test, p, s, logs)
        })
        .collect();
    let mut cells: BTreeMap<String, CellResult> = results
        .into_iter()
        .map(|c| (cell_key(c.impression, c.combo, c.ss_source), c))
        .collect();
    fill_deltas(&mut cells);

    let predictors = predictors
        .iter()
        .map(|(&input, p)| match p {
            Ok(p) => {
                let test_r2 = evaluate_sound_source_predictor(p, test);
                PredictorSummary {
                    input,
                    status: if test_r2.is_ok() { CellStatus::Ok } else { CellStatus::Failed },
                    config: Some(p.selected.config),
                    cv_r2: p.selected.cv_score,
                    error: test_r2.as_ref().err().map(|e| e.to_string()),
                    test_r2: test_r2.ok(),
                }
            }
            Err(e) => PredictorSummary {
                input,
                status: CellStatus::Failed,
                config: None,
                cv_r2: None,
                test_r2: None,
                error: Some(e.clone()),
            },
        })
        .collect();

    ExperimentReport {
        fingerprint: s.fingerprint(),
        settings: s.clone(),
        n_train: train.len(),
        n_test: test.len(),
        predictors,
        cells,
        reference: reference_cells(),
    }
}

impl ExperimentReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.values().filter(|c| c.status == CellStatus::Failed).count()
    }

    /// Aligned plain-text summary.
    pub fn table(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:+.3}"));
        let mut rows = vec![[
            "impression".to_string(),
            "combo".into(),
            "ss_source".into(),
            "test_r2".into(),
            "cv_r2".into(),
            "layers x units".into(),
            "d(ES+SS)".into(),
            "d(best SS)".into(),
        ]];
        for c in self.cells.values() {
            rows.push([
                c.impression.to_string(),
                c.combo.to_string(),
                c.ss_source.map_or("none".into(), |s| s.to_string()),
                match c.status {
                    CellStatus::Ok => fmt_opt(c.test_r2),
                    CellStatus::Failed => "FAILED".into(),
                },
                fmt_opt(c.cv_r2),
                c.config.map_or("-".into(), |h| format!("{} x {}", h.layers, h.units)),
                fmt_opt(c.delta_vs_es_ss),
                fmt_opt(c.delta_vs_best_oracle_ss),
            ]);
        }
        let widths: Vec<usize> = (0..8).map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        for p in &self.predictors {
            out.push_str(&format!(
                "sound-source predictor {}: test R² {} (cv {})\n",
                p.input,
                fmt_opt(p.test_r2),
                fmt_opt(p.cv_r2)
            ));
        }
        out.push_str("reference:");
        for r in &self.reference {
            out.push_str(&format!(" {}={:.3}", r.key, r.r2));
        }
        out.push('\n');
        out
    }
}

/// Splits a sample set by index lists, as produced by the data split.
pub fn take(samples: &[Sample], idx: &[usize]) -> Vec<Sample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

/// Mean of the test R² over cells matching a predicate; `None` when nothing
/// matched or a matching cell failed.
pub fn mean_r2<F: Fn(&CellResult) -> bool>(report: &ExperimentReport, pred: F) -> Option<f64> {
    let v: Vec<Option<f64>> = report.cells.values().filter(|c| pred(c)).map(|c| c.test_r2).collect();
    if v.is_empty() || v.iter().any(Option::is_none) {
        return None;
    }
    Some(v.iter().flatten().sum::<f64>() / v.len() as f64)
}
