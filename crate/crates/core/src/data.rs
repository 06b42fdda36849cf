//! Recording metadata, annotations and dataset manifests.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, MAX_LATITUDE};
use crate::ssqp::{Scale, SsqpError};

/// Zoom level used to index recordings by quadkey.
pub const RECORDING_ZOOM: u8 = 20;

/// Number of sound-source classes annotated per recording.
pub const NUM_SOURCES: usize = 7;

/// Display names of the sound-source classes, S1..S7.
pub const SOURCE_NAMES: [&str; NUM_SOURCES] = [
    "Technology-traffic",
    "Technology-others",
    "Human-voice",
    "Human-others",
    "Nature-creature",
    "Nature-others",
    "Noise",
];

/// Attribute abbreviation, English term and the two Japanese display terms.
pub const ATTRIBUTE_LABELS: [(&str, &str, &str); 8] = [
    ("pl", "Pleasant", "楽しい，心地よい"),
    ("ev", "Eventful", "出来事が多い，賑やかな"),
    ("ca", "Calm", "落ち着いた，静かな"),
    ("vi", "Vibrant", "活気がある，ワクワクさせる"),
    ("an", "Annoying", "騒々しい，イライラさせる"),
    ("un", "Uneventful", "これといった事がない，平穏無事な"),
    ("ch", "Chaotic", "無秩序な，雑然とした"),
    ("mo", "Monotonous", "単調な，退屈な"),
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("field {field}: {message} at row {row}")]
    Invalid {
        row: usize,
        field: &'static str,
        message: String,
    },
    #[error("duplicate id {id:?} at row {row}")]
    DuplicateId { row: usize, id: String },
    #[error("audio file {path} for id {id:?} not found (row {row})")]
    MissingAudio { row: usize, id: String, path: PathBuf },
    #[error("requested {requested} entries but only {available} available")]
    InsufficientEntries { requested: usize, available: usize },
    #[error(transparent)]
    Ssqp(#[from] SsqpError),
    #[error(transparent)]
    Geo(#[from] geo::GeoError),
}

/// One 10-second clip plus where and when it was recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub id: String,
    pub audio_path: String,
    pub latitude: f64,
    pub longitude: f64,
    pub datetime: String,
    pub quadkey: String,
}

impl Recording {
    /// Builds a recording and derives its zoom-20 quadkey.
    pub fn new(
        id: impl Into<String>,
        audio_path: impl Into<String>,
        latitude: f64,
        longitude: f64,
        datetime: impl Into<String>,
    ) -> Result<Self, DataError> {
        let quadkey = geo::latlon_to_quadkey(latitude, longitude, RECORDING_ZOOM)?;
        Ok(Self {
            id: id.into(),
            audio_path: audio_path.into(),
            latitude,
            longitude,
            datetime: datetime.into(),
            quadkey,
        })
    }
}

/// Q1 audibility ratings, 1 (not at all) ..= 5 (dominates completely).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SoundSourceScores(pub [u8; NUM_SOURCES]);

impl SoundSourceScores {
    pub fn new(scores: [u8; NUM_SOURCES]) -> Result<Self, DataError> {
        for (i, &s) in scores.iter().enumerate() {
            if !(1..=5).contains(&s) {
                return Err(DataError::Invalid {
                    row: 0,
                    field: SOURCE_FIELDS[i],
                    message: format!("score {s} out of range 1..5"),
                });
            }
        }
        Ok(Self(scores))
    }

    pub fn get(&self, class: usize) -> u8 {
        self.0[class]
    }

    /// Ratings mapped from 1..5 onto [0, 1] as `(s - 1) / 4`.
    pub fn scaled(&self) -> [f64; NUM_SOURCES] {
        self.0.map(|s| f64::from(s - 1) / 4.0)
    }
}

const SOURCE_FIELDS: [&str; NUM_SOURCES] = ["s1", "s2", "s3", "s4", "s5", "s6", "s7"];

/// Q2 ratings of the eight soundscape attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeScores {
    pub pl: u8,
    pub ev: u8,
    pub ca: u8,
    pub vi: u8,
    pub an: u8,
    pub un: u8,
    pub ch: u8,
    pub mo: u8,
    pub scale: Scale,
}

impl AttributeScores {
    /// Values in display order pl, ev, ca, vi, an, un, ch, mo.
    pub fn values(&self) -> [u8; 8] {
        [self.pl, self.ev, self.ca, self.vi, self.an, self.un, self.ch, self.mo]
    }

    pub fn from_values(values: [u8; 8], scale: Scale) -> Self {
        let [pl, ev, ca, vi, an, un, ch, mo] = values;
        Self {
            pl,
            ev,
            ca,
            vi,
            an,
            un,
            ch,
            mo,
            scale,
        }
    }

    pub fn validate(&self) -> Result<(), SsqpError> {
        let max = self.scale.points();
        for ((name, _, _), value) in ATTRIBUTE_LABELS.iter().zip(self.values()) {
            if !(1..=max).contains(&value) {
                return Err(SsqpError::ScoreOutOfRange {
                    attribute: name,
                    value,
                    max,
                });
            }
        }
        Ok(())
    }
}

/// Normalized Pleasantness and Eventfulness, each in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpressionPair {
    pub p: f64,
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub recording: Recording,
    pub sources: SoundSourceScores,
    pub attributes: AttributeScores,
    /// Overall assessment (1..7). Stored, never used for training.
    pub q3: Option<u8>,
    /// Appropriateness (1..7). Stored, never used for training.
    pub q4: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.recording.id.as_str())
    }
}

/// Flat row of the manifest file, CSV or JSON-lines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub audio_path: String,
    pub lat: f64,
    pub lon: f64,
    pub datetime: String,
    pub s1: i64,
    pub s2: i64,
    pub s3: i64,
    pub s4: i64,
    pub s5: i64,
    pub s6: i64,
    pub s7: i64,
    pub pl: i64,
    pub ev: i64,
    pub ca: i64,
    pub vi: i64,
    pub an: i64,
    pub un: i64,
    pub ch: i64,
    pub mo: i64,
    pub q3: Option<i64>,
    pub q4: Option<i64>,
    pub scale: i64,
}

impl From<&ManifestEntry> for ManifestRow {
    fn from(e: &ManifestEntry) -> Self {
        let s = e.sources.0.map(i64::from);
        let a = e.attributes.values().map(i64::from);
        Self {
            id: e.recording.id.clone(),
            audio_path: e.recording.audio_path.clone(),
            lat: e.recording.latitude,
            lon: e.recording.longitude,
            datetime: e.recording.datetime.clone(),
            s1: s[0],
            s2: s[1],
            s3: s[2],
            s4: s[3],
            s5: s[4],
            s6: s[5],
            s7: s[6],
            pl: a[0],
            ev: a[1],
            ca: a[2],
            vi: a[3],
            an: a[4],
            un: a[5],
            ch: a[6],
            mo: a[7],
            q3: e.q3.map(i64::from),
            q4: e.q4.map(i64::from),
            scale: i64::from(e.attributes.scale.points()),
        }
    }
}

fn score(row: usize, field: &'static str, value: i64, max: u8) -> Result<u8, DataError> {
    if (1..=i64::from(max)).contains(&value) {
        Ok(value as u8)
    } else {
        Err(DataError::Invalid {
            row,
            field,
            message: format!("score {value} out of range 1..{max}"),
        })
    }
}

fn valid_datetime(s: &str) -> bool {
    chrono::DateTime::parse_from_rfc3339(s).is_ok()
        || chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").is_ok()
        || chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f").is_ok()
        || chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
}

impl ManifestRow {
    /// Type-checks the row. `row` is the 1-based data row number used in errors.
    pub fn into_entry(self, row: usize) -> Result<ManifestEntry, DataError> {
        let invalid = |field: &'static str, message: String| DataError::Invalid {
            row,
            field,
            message,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("id", "empty id".into()));
        }
        if !(-MAX_LATITUDE..=MAX_LATITUDE).contains(&self.lat) {
            return Err(invalid("lat", format!("latitude {} outside web-mercator range", self.lat)));
        }
        if !(-180.0..180.0).contains(&self.lon) {
            return Err(invalid("lon", format!("longitude {} outside [-180, 180)", self.lon)));
        }
        if !valid_datetime(&self.datetime) {
            return Err(invalid("datetime", format!("not ISO-8601: {:?}", self.datetime)));
        }
        let scale = match self.scale {
            5 => Scale::FivePoint,
            7 => Scale::SevenPoint,
            other => return Err(invalid("scale", format!("unsupported scale {other}"))),
        };
        let raw_sources = [self.s1, self.s2, self.s3, self.s4, self.s5, self.s6, self.s7];
        let mut sources = [0u8; NUM_SOURCES];
        for (i, v) in raw_sources.into_iter().enumerate() {
            sources[i] = score(row, SOURCE_FIELDS[i], v, 5)?;
        }
        let raw_attrs = [
            self.pl, self.ev, self.ca, self.vi, self.an, self.un, self.ch, self.mo,
        ];
        let mut attrs = [0u8; 8];
        for (i, v) in raw_attrs.into_iter().enumerate() {
            attrs[i] = score(row, ATTRIBUTE_LABELS[i].0, v, scale.points())?;
        }
        let q3 = self.q3.map(|v| score(row, "q3", v, 7)).transpose()?;
        let q4 = self.q4.map(|v| score(row, "q4", v, 7)).transpose()?;
        let recording = Recording::new(self.id, self.audio_path, self.lat, self.lon, self.datetime)?;
        Ok(ManifestEntry {
            recording,
            sources: SoundSourceScores(sources),
            attributes: AttributeScores::from_values(attrs, scale),
            q3,
            q4,
        })
    }
}

/// How `load_manifest_with` treats the referenced audio files.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Directory audio paths are resolved against; defaults to the manifest's directory.
    pub audio_root: Option<PathBuf>,
    /// Fail when a referenced audio file does not exist.
    pub check_audio: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            audio_root: None,
            check_audio: true,
        }
    }
}

/// Loads a CSV or JSON-lines manifest (chosen by extension: `.jsonl`/`.json`
/// are JSON-lines, anything else CSV) and checks audio files exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    load_manifest_with(path, &LoadOptions::default())
}

pub fn load_manifest_with(path: &Path, opts: &LoadOptions) -> Result<DatasetManifest, DataError> {
    let rows = read_rows(path)?;
    let root = opts
        .audio_root
        .clone()
        .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        let row_no = i + 1;
        let entry = row.into_entry(row_no)?;
        if !seen.insert(entry.recording.id.clone()) {
            return Err(DataError::DuplicateId {
                row: row_no,
                id: entry.recording.id,
            });
        }
        if opts.check_audio {
            let audio = root.join(&entry.recording.audio_path);
            if !audio.is_file() {
                return Err(DataError::MissingAudio {
                    row: row_no,
                    id: entry.recording.id,
                    path: audio,
                });
            }
        }
        entries.push(entry);
    }
    Ok(DatasetManifest { entries })
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("json") | Some("ndjson")
    )
}

fn read_rows(path: &Path) -> Result<Vec<ManifestRow>, DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    if is_jsonl(path) {
        let mut rows = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let row: ManifestRow = serde_json::from_str(&line).map_err(|e| DataError::Parse {
                row: i + 1,
                message: e.to_string(),
            })?;
            rows.push(row);
        }
        Ok(rows)
    } else {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        reader
            .deserialize()
            .enumerate()
            .map(|(i, r)| {
                r.map_err(|e| DataError::Parse {
                    row: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

/// Writes the manifest as CSV, or JSON-lines when the extension says so.
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    if is_jsonl(path) {
        let mut w = std::io::BufWriter::new(file);
        for e in &manifest.entries {
            let line = serde_json::to_string(&ManifestRow::from(e)).expect("row serializes");
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)?;
    } else {
        let mut w = csv::Writer::from_writer(file);
        for e in &manifest.entries {
            w.serialize(ManifestRow::from(e)).map_err(|e| DataError::Parse {
                row: 0,
                message: e.to_string(),
            })?;
        }
        w.flush().map_err(io)?;
    }
    Ok(())
}

/// Predicate identifying recordings dominated by recording noise alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseRule {
    /// Minimum S7 rating for a clip to count as noise-dominated.
    pub min_noise: u8,
    /// Every other class must be rated at most this.
    pub max_other: u8,
}

impl Default for NoiseRule {
    fn default() -> Self {
        Self {
            min_noise: 4,
            max_other: 1,
        }
    }
}

impl NoiseRule {
    pub fn is_noise_only(&self, s: &SoundSourceScores) -> bool {
        s.0[6] >= self.min_noise && s.0[..6].iter().all(|&v| v <= self.max_other)
    }
}

/// Drops noise-only recordings.
pub fn cleanse_noise_only(manifest: &DatasetManifest, rule: &NoiseRule) -> DatasetManifest {
    DatasetManifest {
        entries: manifest
            .entries
            .iter()
            .filter(|e| !rule.is_noise_only(&e.sources))
            .cloned()
            .collect(),
    }
}

/// Seeded uniform split into disjoint training and test sets.
pub fn train_test_split(
    manifest: &DatasetManifest,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest), DataError> {
    let (train, test) = split_indices(manifest.len(), n_train, n_test, seed)?;
    let pick = |idx: &[usize]| DatasetManifest {
        entries: idx.iter().map(|&i| manifest.entries[i].clone()).collect(),
    };
    Ok((pick(&train), pick(&test)))
}

/// Index form of [`train_test_split`].
pub fn split_indices(
    n: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    let requested = n_train + n_test;
    if requested > n {
        return Err(DataError::InsufficientEntries {
            requested,
            available: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx[n_train..requested].to_vec();
    idx.truncate(n_train);
    Ok((idx, test))
}
