//! Plain-text `key = value` run configuration.
//!
//! Values are layered: built-in defaults, then the `--config` file, then
//! command-line flags. The resolved set is written next to every output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;

use soundscape_core::pipeline::{FeatureCombo, Impression, SsInput, SsSource};
use soundscape_core::selection::{Hyper, Strategy};
use soundscape_core::PercentileConvention;

/// How a key's value is checked at validation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Path,
    Text,
    Uint,
    Float,
    Bool,
    UintList,
    Strategy,
    Combo,
    SsSource,
    SsInput,
    Impressions,
    Percentile,
    Hyper,
}

/// Every recognized key with its default (if any) and kind.
const KEYS: &[(&str, Option<&str>, Kind)] = &[
    ("manifest", None, Kind::Path),
    ("audio_root", None, Kind::Path),
    ("features", None, Kind::Path),
    ("bottlenecks", None, Kind::Path),
    ("embeddings", None, Kind::Path),
    ("images", None, Kind::Path),
    ("model", None, Kind::Path),
    ("ss_model", None, Kind::Path),
    ("cache_dir", None, Kind::Path),
    ("tile_url", None, Kind::Text),
    ("tile_dir", None, Kind::Path),
    ("out", None, Kind::Path),
    ("seed", Some("0"), Kind::Uint),
    ("split_seed", Some("0"), Kind::Uint),
    ("n_train", Some("599"), Kind::Uint),
    ("n_test", Some("200"), Kind::Uint),
    ("noise_min", Some("4"), Kind::Uint),
    ("noise_max_other", Some("1"), Kind::Uint),
    ("strategy", Some("tpe"), Kind::Strategy),
    ("n_iter", Some("100"), Kind::Uint),
    ("folds", Some("10"), Kind::Uint),
    ("layers", Some("1,2,3,4,5,6,7,8,9,10"), Kind::UintList),
    ("units", Some("4,8,16,32,64,128,256,512,1024"), Kind::UintList),
    ("fixed", None, Kind::Hyper),
    ("epochs", Some("200"), Kind::Uint),
    ("batch_size", Some("32"), Kind::Uint),
    ("learning_rate", Some("0.001"), Kind::Float),
    ("l2", Some("0.001"), Kind::Float),
    ("patience", Some("20"), Kind::Uint),
    ("validation_fraction", Some("0.1"), Kind::Float),
    ("combo", Some("ES+SS"), Kind::Combo),
    ("ss_source", Some("oracle"), Kind::SsSource),
    ("ss_input", Some("ES+AP"), Kind::SsInput),
    ("impressions", Some("P,E"), Kind::Impressions),
    ("oracle_only", Some("false"), Kind::Bool),
    ("joint", Some("false"), Kind::Bool),
    ("silence_floor", Some("-100"), Kind::Float),
    ("calibration_offset", Some("0"), Kind::Float),
    ("percentile", Some("statistical"), Kind::Percentile),
    ("any_sample_rate", Some("false"), Kind::Bool),
    ("ae_epochs", Some("100"), Kind::Uint),
    ("ae_batch_size", Some("16"), Kind::Uint),
    ("ae_learning_rate", Some("0.01"), Kind::Float),
    ("ae_momentum", Some("0.9"), Kind::Float),
    ("ae_holdout", Some("0.1"), Kind::Float),
    ("synth_count", Some("800"), Kind::Uint),
    ("synth_attribute_noise", Some("0.6"), Kind::Float),
    ("synth_embedding_noise", Some("1"), Kind::Float),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, _, kind)| *kind)
}

/// Parses a string into any type with a string-backed serde form.
pub fn parse_serde<T: DeserializeOwned>(v: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(v.to_string())).map_err(|e| anyhow!("{v:?}: {e}"))
}

/// `3x32` → three hidden layers of 32 units.
pub fn parse_hyper(v: &str) -> Result<Hyper> {
    let (l, u) = v
        .split_once('x')
        .ok_or_else(|| anyhow!("expected LAYERSxUNITS, got {v:?}"))?;
    Ok(Hyper {
        layers: l.trim().parse()?,
        units: u.trim().parse()?,
    })
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().with_context(|| format!("list item {s:?}")))
        .collect()
}

fn check(kind: Kind, v: &str) -> Result<()> {
    match kind {
        Kind::Path | Kind::Text => Ok(()),
        Kind::Uint => v.parse::<u64>().map(drop).map_err(Into::into),
        Kind::Float => {
            let f: f64 = v.parse()?;
            if f.is_finite() {
                Ok(())
            } else {
                bail!("not finite")
            }
        }
        Kind::Bool => v.parse::<bool>().map(drop).map_err(Into::into),
        Kind::UintList => {
            if parse_list::<usize>(v)?.is_empty() {
                bail!("empty list")
            }
            Ok(())
        }
        Kind::Strategy => parse_serde::<Strategy>(v).map(drop),
        Kind::Combo => v.parse::<FeatureCombo>().map(drop).map_err(|e| anyhow!("{e}")),
        Kind::SsSource => v.parse::<SsSource>().map(drop).map_err(|e| anyhow!("{e}")),
        Kind::SsInput => v.parse::<SsInput>().map(drop).map_err(|e| anyhow!("{e}")),
        Kind::Impressions => {
            let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            if items.is_empty() {
                bail!("empty list");
            }
            for i in items {
                i.parse::<Impression>().map_err(|e| anyhow!("{e}"))?;
            }
            Ok(())
        }
        Kind::Percentile => parse_serde::<PercentileConvention>(v).map(drop),
        Kind::Hyper => parse_hyper(v).map(drop),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn defaults() -> Self {
        Self {
            values: KEYS
                .iter()
                .filter_map(|(k, d, _)| d.map(|d| (k.to_string(), d.to_string())))
                .collect(),
        }
    }

    /// Sets one key, checking the key is known and the value parses.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let kind = kind_of(key).ok_or_else(|| anyhow!("unknown config key {key:?}"))?;
        let value = value.trim();
        check(kind, value).with_context(|| format!("invalid value for {key}"))?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), n + 1))?;
            self.set(k.trim(), v).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }

    /// A path that must be set and exist.
    pub fn existing_path(&self, key: &str) -> Result<PathBuf> {
        let p = self.path(key).ok_or_else(|| anyhow!("missing required setting {key}"))?;
        if !p.exists() {
            bail!("{key}: {} does not exist", p.display());
        }
        Ok(p)
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        self.path("out").ok_or_else(|| anyhow!("missing required setting out"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key).ok_or_else(|| anyhow!("missing required setting {key}"))?;
        v.parse::<T>().map_err(|e| anyhow!("{key}: {e}"))
    }

    pub fn list(&self, key: &str) -> Result<Vec<usize>> {
        parse_list(self.raw(key).ok_or_else(|| anyhow!("missing required setting {key}"))?)
    }

    pub fn impressions(&self) -> Result<Vec<Impression>> {
        let v = self.raw("impressions").unwrap_or("P,E");
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<Impression>().map_err(|e| anyhow!("{e}")))
            .collect()
    }

    pub fn hyper(&self, key: &str) -> Result<Option<Hyper>> {
        self.raw(key).map(parse_hyper).transpose()
    }

    /// The resolved settings as `key = value` lines, sorted by key.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Writes `resolved-config.txt` into `dir`.
    pub fn snapshot(&self, dir: &Path) -> Result<PathBuf> {
        let p = dir.join("resolved-config.txt");
        fs::write(&p, self.render()).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}
