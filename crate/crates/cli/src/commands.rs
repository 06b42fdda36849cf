use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use soundscape_core::acoustic::{extract, load_audio};
use soundscape_core::data::{cleanse_noise_only, load_manifest_with, split_indices, LoadOptions};
use soundscape_core::embedding::{
    baseline_embed, ingest_embeddings, train_autoencoder, write_bottlenecks, AutoencoderConfig, AutoencoderModel,
    RawEmbedding, BOTTLENECK_DIM,
};
use soundscape_core::geo::{dedup_plans, fetch_and_stitch, plan_aerial_window, AerialImage, CachedTileClient, DirTileClient, TileClient};
use soundscape_core::pipeline::{
    build_samples, evaluate_sound_source_predictor, run_experiment_matrix_logged, take, train_impression_predictor,
    train_sound_source_predictor, ExperimentSettings, FeatureCombo, HpoSettings, Sample, Selected, SsInput, SsPredictor,
    SsSource, TrialLogDir,
};
use soundscape_core::records::{read_records, write_records, VectorRecord};
use soundscape_core::selection::{SearchSpace, Strategy, TrialLog};
use soundscape_core::synth::{generate, SynthRecipe};
use soundscape_core::{
    derive_seed, DatasetManifest, ExtractionConfig, MlpConfig, MlpModel, NoiseRule, PercentileConvention, FEATURE_LEN,
};

use crate::config::{parse_serde, RunConfig};

#[derive(Debug, Clone, Copy)]
pub enum Cmd {
    ExtractFeatures,
    FetchTiles,
    Embed,
    TrainSs,
    TrainImpression,
    Experiment,
    Synth,
}

pub fn execute(cmd: Cmd, cfg: &RunConfig, resume: bool) -> Result<()> {
    let out = cfg.out_dir()?;
    // Inputs are checked before anything is written.
    match cmd {
        Cmd::ExtractFeatures | Cmd::FetchTiles => {
            cfg.existing_path("manifest")?;
        }
        Cmd::Embed => {
            for key in ["embeddings", "images"] {
                if cfg.raw(key).is_some() {
                    cfg.existing_path(key)?;
                }
            }
        }
        Cmd::TrainSs | Cmd::TrainImpression | Cmd::Experiment => {
            cfg.existing_path("manifest")?;
            for key in ["features", "bottlenecks", "ss_model"] {
                if cfg.raw(key).is_some() {
                    cfg.existing_path(key)?;
                }
            }
        }
        Cmd::Synth => {}
    }
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    cfg.snapshot(&out)?;
    match cmd {
        Cmd::ExtractFeatures => extract_features(cfg, &out),
        Cmd::FetchTiles => fetch_tiles(cfg, &out),
        Cmd::Embed => embed(cfg, &out),
        Cmd::TrainSs => train_ss(cfg, &out, resume),
        Cmd::TrainImpression => train_impression(cfg, &out, resume),
        Cmd::Experiment => experiment(cfg, &out, resume),
        Cmd::Synth => synth(cfg, &out),
    }
}

#[derive(Debug, Serialize)]
struct Failure {
    id: String,
    path: String,
    error: String,
}

/// Writes `failures.json`; non-fatal, the command still succeeds.
fn report_failures(out: &Path, failures: &[Failure], total: usize) -> Result<()> {
    let p = out.join("failures.json");
    let doc = json!({ "total": total, "failed": failures.len(), "failures": failures });
    fs::write(&p, serde_json::to_string_pretty(&doc)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    if failures.is_empty() {
        info!("all {total} items processed");
    } else {
        warn!("{} of {total} items failed; see {}", failures.len(), p.display());
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let opts = LoadOptions {
        audio_root: cfg.path("audio_root"),
        check_audio: false,
    };
    Ok(load_manifest_with(&cfg.existing_path("manifest")?, &opts)?)
}

fn audio_root(cfg: &RunConfig) -> Result<PathBuf> {
    if let Some(r) = cfg.path("audio_root") {
        return Ok(r);
    }
    let m = cfg.existing_path("manifest")?;
    Ok(m.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn extraction_config(cfg: &RunConfig) -> Result<ExtractionConfig> {
    let any_rate: bool = cfg.get("any_sample_rate")?;
    Ok(ExtractionConfig {
        calibration_offset: cfg.get("calibration_offset")?,
        silence_floor: cfg.get("silence_floor")?,
        percentile: parse_serde::<PercentileConvention>(cfg.raw("percentile").unwrap_or("statistical"))?,
        required_sample_rate: if any_rate {
            None
        } else {
            ExtractionConfig::default().required_sample_rate
        },
    })
}

fn extract_features(cfg: &RunConfig, out: &Path) -> Result<()> {
    let m = manifest(cfg)?;
    let root = audio_root(cfg)?;
    let ecfg = extraction_config(cfg)?;
    let total = m.len();
    let step = (total / 10).max(1);
    let done = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<Result<VectorRecord, Failure>> = m
        .entries
        .par_iter()
        .map(|e| {
            let path = root.join(&e.recording.audio_path);
            let r = load_audio(&path)
                .and_then(|w| extract(&w, &ecfg))
                .map(|f| VectorRecord::new(e.recording.id.clone(), f.values))
                .map_err(|err| Failure {
                    id: e.recording.id.clone(),
                    path: path.display().to_string(),
                    error: err.to_string(),
                });
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            if n % step == 0 || n == total {
                info!("extracted {n}/{total}");
            }
            if let Err(f) = &r {
                warn!("{}: {}", f.id, f.error);
            }
            r
        })
        .collect();
    let (ok, failed): (Vec<_>, Vec<_>) = results.into_iter().partition(Result::is_ok);
    let records: Vec<VectorRecord> = ok.into_iter().filter_map(Result::ok).collect();
    let failures: Vec<Failure> = failed.into_iter().filter_map(Result::err).collect();
    write_records(&out.join("features.jsonl"), &records)?;
    report_failures(out, &failures, total)
}

fn fetch_with<C: TileClient>(client: &C, cfg: &RunConfig, out: &Path) -> Result<()> {
    let m = manifest(cfg)?;
    let images = out.join("images");
    fs::create_dir_all(&images)?;
    let mut plans = Vec::new();
    let mut failures = Vec::new();
    let mut planned = Vec::new();
    for e in &m.entries {
        match plan_aerial_window(e.recording.latitude, e.recording.longitude) {
            Ok(p) => {
                plans.push(p);
                planned.push(e);
            }
            Err(err) => failures.push(Failure {
                id: e.recording.id.clone(),
                path: String::new(),
                error: err.to_string(),
            }),
        }
    }
    let (unique, index) = dedup_plans(&plans);
    info!("{} recordings share {} distinct windows", planned.len(), unique.len());
    let stitched: Vec<Result<AerialImage, String>> = unique
        .par_iter()
        .map(|p| fetch_and_stitch(client, p).map_err(|e| e.to_string()))
        .collect();
    for (e, &u) in planned.iter().zip(&index) {
        let path = images.join(format!("{}.png", e.recording.id));
        let r = match &stitched[u] {
            Ok(img) => img.save_png(&path).map_err(|err| err.to_string()),
            Err(err) => Err(err.clone()),
        };
        if let Err(error) = r {
            warn!("{}: {error}", e.recording.id);
            failures.push(Failure {
                id: e.recording.id.clone(),
                path: path.display().to_string(),
                error,
            });
        }
    }
    failures.sort_by(|a, b| a.id.cmp(&b.id));
    report_failures(out, &failures, m.len())
}

fn fetch_tiles(cfg: &RunConfig, out: &Path) -> Result<()> {
    let cache = cfg.path("cache_dir").unwrap_or_else(|| out.join("tile-cache"));
    if let Some(dir) = cfg.path("tile_dir") {
        return fetch_with(&CachedTileClient::new(DirTileClient::new(dir), cache), cfg, out);
    }
    let Some(url) = cfg.raw("tile_url") else {
        bail!("fetch-tiles needs tile_url or tile_dir");
    };
    http_fetch(url, cache, cfg, out)
}

#[cfg(feature = "http")]
fn http_fetch(url: &str, cache: PathBuf, cfg: &RunConfig, out: &Path) -> Result<()> {
    use soundscape_core::geo::HttpTileClient;
    fetch_with(&CachedTileClient::new(HttpTileClient::new(url), cache), cfg, out)
}

#[cfg(not(feature = "http"))]
fn http_fetch(_url: &str, _cache: PathBuf, _cfg: &RunConfig, _out: &Path) -> Result<()> {
    bail!("built without HTTP support; use tile_dir")
}

fn load_images(dir: &Path) -> Result<Vec<RawEmbedding>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    paths
        .par_iter()
        .map(|p| {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let img = AerialImage::load_png(p).with_context(|| format!("loading {}", p.display()))?;
            Ok(baseline_embed(id, &img))
        })
        .collect()
}

fn embed(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = match (cfg.path("embeddings"), cfg.path("images")) {
        (Some(p), _) => ingest_embeddings(&p)?,
        (None, Some(dir)) => load_images(&dir)?,
        (None, None) => bail!("embed needs embeddings or images"),
    };
    if data.is_empty() {
        bail!("no embeddings to encode");
    }
    let model_path = cfg.path("model").unwrap_or_else(|| out.join("autoencoder.json"));
    let model = if cfg.raw("model").is_some() && model_path.exists() {
        info!("loading autoencoder {}", model_path.display());
        AutoencoderModel::load(&model_path)?
    } else {
        let ac = AutoencoderConfig {
            epochs: cfg.get("ae_epochs")?,
            batch_size: cfg.get("ae_batch_size")?,
            learning_rate: cfg.get("ae_learning_rate")?,
            momentum: cfg.get("ae_momentum")?,
            holdout_fraction: cfg.get("ae_holdout")?,
            seed: derive_seed(cfg.get("seed")?, "autoencoder"),
            ..Default::default()
        };
        info!("training autoencoder on {} embeddings", data.len());
        let m = train_autoencoder(&data, &ac)?;
        m.save(&model_path)?;
        m
    };
    let codes = model.encode_all(&data)?;
    write_bottlenecks(&out.join("bottlenecks.jsonl"), &codes)?;
    info!("wrote {} bottleneck features", codes.len());
    Ok(())
}

fn hpo(cfg: &RunConfig) -> Result<HpoSettings> {
    Ok(HpoSettings {
        space: SearchSpace {
            layers: cfg.list("layers")?,
            units: cfg.list("units")?,
        },
        strategy: parse_serde::<Strategy>(cfg.raw("strategy").unwrap_or("tpe"))?,
        n_iter: cfg.get("n_iter")?,
        folds: cfg.get("folds")?,
        base: MlpConfig {
            epochs: cfg.get("epochs")?,
            batch_size: cfg.get("batch_size")?,
            learning_rate: cfg.get("learning_rate")?,
            l2: cfg.get("l2")?,
            patience: cfg.get("patience")?,
            validation_fraction: cfg.get("validation_fraction")?,
            ..Default::default()
        },
        fixed: cfg.hyper("fixed")?,
        trial_log: None,
    })
}

fn features(path: Option<PathBuf>, dim: usize) -> Result<HashMap<String, Vec<f64>>> {
    let Some(p) = path else { return Ok(HashMap::new()) };
    Ok(read_records(&p, Some(dim))?.into_iter().map(|r| (r.id, r.vector)).collect())
}

/// Loads, cleanses and splits the labelled data.
fn dataset(cfg: &RunConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let rule = NoiseRule {
        min_noise: cfg.get("noise_min")?,
        max_other: cfg.get("noise_max_other")?,
    };
    let all = manifest(cfg)?;
    let m = cleanse_noise_only(&all, &rule);
    if m.len() < all.len() {
        info!("dropped {} noise-only recordings", all.len() - m.len());
    }
    let es = features(cfg.path("features"), FEATURE_LEN)?;
    let ap = features(cfg.path("bottlenecks"), BOTTLENECK_DIM)?;
    let samples = build_samples(&m, &es, &ap)?;
    let (n_train, n_test): (usize, usize) = (cfg.get("n_train")?, cfg.get("n_test")?);
    let (tr, te) = split_indices(samples.len(), n_train, n_test, cfg.get("split_seed")?)
        .context("set n_train and n_test to fit the dataset")?;
    Ok((take(&samples, &tr), take(&samples, &te)))
}

fn trial_log(out: &Path, name: &str, resume: bool) -> TrialLog {
    TrialLog {
        path: out.join(name),
        resume,
    }
}

fn train_ss(cfg: &RunConfig, out: &Path, resume: bool) -> Result<()> {
    let (train, test) = dataset(cfg)?;
    let input: SsInput = cfg.get("ss_input")?;
    let hpo = HpoSettings {
        trial_log: Some(trial_log(out, "ss-trials.jsonl", resume)),
        ..hpo(cfg)?
    };
    let seed = derive_seed(cfg.get("seed")?, &format!("ss/{input}"));
    let p = train_sound_source_predictor(input, &train, &hpo, seed)?;
    let test_r2 = evaluate_sound_source_predictor(&p, &test)?;
    p.selected.model.save(&out.join("ss-model.json"))?;
    write_json(
        &out.join("ss-summary.json"),
        &json!({
            "input": input,
            "config": p.selected.config,
            "cv_r2": p.selected.cv_score,
            "test_r2": test_r2,
            "n_train": train.len(),
            "n_test": test.len(),
            "seed": seed,
        }),
    )?;
    info!("sound-source predictor {input}: test R² {test_r2:.3}");
    Ok(())
}

fn load_ss_predictor(path: &Path, input: SsInput) -> Result<SsPredictor> {
    let model = MlpModel::load(path)?;
    let expected = input.combo().dim();
    if model.input_dim() != expected {
        bail!("{}: model reads {} values, {input} provides {expected}", path.display(), model.input_dim());
    }
    let config = soundscape_core::Hyper {
        layers: model.config.n_hidden_layers,
        units: model.config.units,
    };
    Ok(SsPredictor {
        input,
        selected: Selected {
            model,
            config,
            cv_score: None,
            search: None,
        },
    })
}

fn train_impression(cfg: &RunConfig, out: &Path, resume: bool) -> Result<()> {
    let (train, test) = dataset(cfg)?;
    let combo: FeatureCombo = cfg.get("combo")?;
    let ss_source = if combo.has_ss() { Some(cfg.get::<SsSource>("ss_source")?) } else { None };
    let impressions = cfg.impressions()?;
    let seed: u64 = cfg.get("seed")?;
    let hpo = hpo(cfg)?;
    let predictor = match ss_source {
        Some(SsSource::Estimated(input)) => Some(match cfg.path("ss_model") {
            Some(p) => load_ss_predictor(&p, input)?,
            None => {
                let hpo_ss = HpoSettings {
                    trial_log: Some(trial_log(out, "ss-trials.jsonl", resume)),
                    ..hpo.clone()
                };
                train_sound_source_predictor(input, &train, &hpo_ss, derive_seed(seed, &format!("ss/{input}")))?
            }
        }),
        _ => None,
    };
    let hpo_imp = HpoSettings {
        trial_log: Some(trial_log(out, "impression-trials.jsonl", resume)),
        ..hpo
    };
    let m = train_impression_predictor(
        combo,
        ss_source,
        &impressions,
        &train,
        predictor.as_ref(),
        &hpo_imp,
        derive_seed(seed, "impression"),
    )?;
    let scores = m.evaluate(&test, predictor.as_ref())?;
    m.selected.model.save(&out.join("impression-model.json"))?;
    let test_r2: serde_json::Map<String, serde_json::Value> =
        impressions.iter().zip(&scores).map(|(i, s)| (i.to_string(), json!(s))).collect();
    write_json(
        &out.join("impression-summary.json"),
        &json!({
            "combo": combo,
            "ss_source": ss_source,
            "impressions": impressions,
            "config": m.selected.config,
            "cv_r2": m.selected.cv_score,
            "test_r2": test_r2,
            "n_train": train.len(),
            "n_test": test.len(),
            "seed": seed,
        }),
    )?;
    for (i, s) in impressions.iter().zip(&scores) {
        info!("{i} from {combo} ({}): test R² {s:.3}", ss_source.map_or("none".into(), |s| s.to_string()));
    }
    Ok(())
}

fn experiment(cfg: &RunConfig, out: &Path, resume: bool) -> Result<()> {
    let (train, test) = dataset(cfg)?;
    let oracle_only: bool = cfg.get("oracle_only")?;
    let settings = ExperimentSettings {
        hpo: hpo(cfg)?,
        master_seed: cfg.get("seed")?,
        impressions: cfg.impressions()?,
        oracle_cells: true,
        estimated_cells: !oracle_only,
        joint: cfg.get("joint")?,
    };
    let trials = out.join("trials");
    fs::create_dir_all(&trials)?;
    let logs = TrialLogDir { dir: &trials, resume };
    let report = run_experiment_matrix_logged(&train, &test, &settings, Some(logs));
    write_json(&out.join("report.json"), &report)?;
    let table = report.table();
    fs::write(out.join("table.txt"), &table)?;
    print!("{table}");
    let failed = report.failed_cells();
    if failed > 0 {
        for (key, c) in report.cells.iter().filter(|(_, c)| c.error.is_some()) {
            warn!("{key}: {}", c.error.as_deref().unwrap_or_default());
        }
        warn!("{failed} of {} cells failed", report.cells.len());
    }
    info!("report {} ({} cells, fingerprint {})", out.join("report.json").display(), report.cells.len(), report.fingerprint);
    Ok(())
}

fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let recipe = SynthRecipe {
        attribute_noise: cfg.get("synth_attribute_noise")?,
        embedding_noise: cfg.get("synth_embedding_noise")?,
        ..Default::default()
    };
    let n: usize = cfg.get("synth_count")?;
    if n == 0 {
        return Err(anyhow!("synth_count must be positive"));
    }
    let o = generate(n, &recipe, cfg.get("seed")?, out)?;
    write_json(&out.join("recipe.json"), &recipe)?;
    info!("wrote {} recordings, {} and {}", o.recordings.len(), o.manifest.display(), o.embeddings.display());
    Ok(())
}
