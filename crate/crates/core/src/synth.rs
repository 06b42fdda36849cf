//! Synthetic recordings with known ground truth.
//!
//! Each recording mixes seven procedural stems, one per sound-source class,
//! at levels drawn from the class ratings. Ratings come back out by
//! quantizing the mixing gains. Attribute scores follow a circumplex rule on
//! two latent values that are linear in the ratings, plus optional Gaussian
//! noise before rounding. Proxy image embeddings are a fixed random linear
//! map of the ratings plus Gaussian noise.
//!
//! Because attribute noise is independent of everything a model can see,
//! the best achievable R² given the true ratings is known in closed form
//! ([`ideal_r2`]).

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::acoustic::filter::butterworth_bandpass;
use crate::acoustic::{extract, write_wav, AcousticFeature, AudioError, ExtractionConfig, Waveform};
use crate::data::{
    write_manifest, AttributeScores, DataError, DatasetManifest, ImpressionPair, ManifestEntry, Recording,
    SoundSourceScores, NUM_SOURCES,
};
use crate::embedding::{write_embeddings, EmbeddingError, RawEmbedding, EMBEDDING_DIM};
use crate::seed::derive_seed;
use crate::ssqp::{NormalizationFactor, Scale};

/// Circumplex angle of each attribute, in `AttributeScores::values` order
/// (pl, ev, ca, vi, an, un, ch, mo), in degrees.
pub const ATTRIBUTE_ANGLES: [f64; 8] = [0.0, 90.0, 315.0, 45.0, 180.0, 270.0, 135.0, 225.0];

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecipe {
    pub sample_rate: u32,
    pub seconds: usize,
    /// RMS level in dBFS of a stem rated 2, 3, 4 and 5. Rating 1 is silent.
    pub rating_levels_db: [f64; 4],
    /// Uniform jitter (± dB) around the rating level.
    pub gain_jitter_db: f64,
    /// RMS level of the white background noise, dBFS.
    pub background_db: f64,
    /// Pleasantness latent: `intercept + Σ coef · (s − 1) / 4`.
    pub p_coef: [f64; NUM_SOURCES],
    pub p_intercept: f64,
    pub e_coef: [f64; NUM_SOURCES],
    pub e_intercept: f64,
    /// Attribute mean is `4 + radius · (p cos θ + e sin θ)`.
    pub radius: f64,
    /// Standard deviation of Gaussian noise added before rounding.
    pub attribute_noise: f64,
    /// Scale of the ratings signal in the proxy embedding.
    pub embedding_gain: f64,
    /// Standard deviation of additive embedding noise.
    pub embedding_noise: f64,
    /// Seeds the fixed embedding matrix.
    pub embedding_seed: u64,
}

impl Default for SynthRecipe {
    fn default() -> Self {
        Self {
            sample_rate: 32_000,
            seconds: 10,
            rating_levels_db: [-48.0, -40.0, -32.0, -24.0],
            gain_jitter_db: 1.5,
            background_db: -60.0,
            //        traffic tech   voice human bird  water noise
            p_coef: [-0.5, -0.3, 0.05, 0.0, 0.5, 0.3, -0.35],
            p_intercept: 0.15,
            e_coef: [0.25, 0.1, 0.5, 0.4, 0.1, -0.15, 0.0],
            e_intercept: -0.6,
            radius: 3.0,
            attribute_noise: 0.6,
            embedding_gain: 1.0,
            embedding_noise: 1.0,
            embedding_seed: 7,
        }
    }
}

impl SynthRecipe {
    /// Rating implied by a stem gain: the highest rating whose level minus
    /// 4 dB the gain reaches. `None` (silent) is rating 1.
    pub fn quantize_gain(&self, gain_db: Option<f64>) -> u8 {
        let Some(g) = gain_db else { return 1 };
        let mut rating = 1;
        for (k, level) in self.rating_levels_db.iter().enumerate() {
            if g >= level - 4.0 {
                rating = k as u8 + 2;
            }
        }
        rating
    }

    /// Latent (p, e) for a set of ratings.
    pub fn latents(&self, s: &SoundSourceScores) -> (f64, f64) {
        let x = s.scaled();
        let dot = |c: &[f64; NUM_SOURCES]| c.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        (self.p_intercept + dot(&self.p_coef), self.e_intercept + dot(&self.e_coef))
    }

    /// Pre-noise attribute means in `AttributeScores::values` order.
    pub fn attribute_means(&self, s: &SoundSourceScores) -> [f64; 8] {
        let (p, e) = self.latents(s);
        ATTRIBUTE_ANGLES.map(|deg| {
            let t = deg.to_radians();
            4.0 + self.radius * (p * t.cos() + e * t.sin())
        })
    }
}

/// Attribute rounding on the 7-point scale.
fn to_score(v: f64) -> u8 {
    v.round().clamp(1.0, 7.0) as u8
}

/// Weights of the attributes in P and E, divided by the 7-point factor.
fn impression_weights() -> ([f64; 8], [f64; 8]) {
    let c = (PI / 4.0).cos();
    let n = NormalizationFactor::for_scale(Scale::SevenPoint).value;
    // pl, ev, ca, vi, an, un, ch, mo
    let p = [1.0, 0.0, c, c, -1.0, 0.0, -c, -c].map(|w| w / n);
    let e = [0.0, 1.0, -c, c, 0.0, -1.0, c, -c].map(|w| w / n);
    (p, e)
}

/// Mean and variance of `clamp(round(mu + σ z), 1, 7)`.
fn rounded_moments(mu: f64, sigma: f64) -> (f64, f64) {
    if sigma == 0.0 {
        return (f64::from(to_score(mu)), 0.0);
    }
    let d = NormalDist::new(mu, sigma).expect("positive sigma");
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for j in 1..=7 {
        let lo = if j == 1 { f64::NEG_INFINITY } else { j as f64 - 0.5 };
        let hi = if j == 7 { f64::INFINITY } else { j as f64 + 0.5 };
        let pr = d.cdf(hi) - d.cdf(lo);
        m1 += pr * j as f64;
        m2 += pr * (j * j) as f64;
    }
    (m1, m2 - m1 * m1)
}

/// Conditional mean and variance of (P, E) given the ratings.
pub fn impression_moments(recipe: &SynthRecipe, s: &SoundSourceScores) -> ((f64, f64), (f64, f64)) {
    let (wp, we) = impression_weights();
    let mut p = (0.0, 0.0);
    let mut e = (0.0, 0.0);
    for (k, mu) in recipe.attribute_means(s).iter().enumerate() {
        // Attributes receive independent noise, so variances add.
        let (m, v) = rounded_moments(*mu, recipe.attribute_noise);
        p.0 += wp[k] * m;
        p.1 += wp[k] * wp[k] * v;
        e.0 += we[k] * m;
        e.1 += we[k] * we[k] * v;
    }
    (p, e)
}

/// Highest expected R² any predictor can reach on recordings with these
/// ratings: `1 − E[Var(y|s)] / Var(y)`, with the total variance split into
/// the spread of conditional means plus the mean conditional variance.
pub fn ideal_r2(recipe: &SynthRecipe, sources: &[SoundSourceScores]) -> ImpressionPair {
    let moments: Vec<_> = sources.iter().map(|s| impression_moments(recipe, s)).collect();
    let n = moments.len() as f64;
    let bound = |get: fn(&((f64, f64), (f64, f64))) -> (f64, f64)| {
        let mean = moments.iter().map(|m| get(m).0).sum::<f64>() / n;
        let between = moments.iter().map(|m| (get(m).0 - mean).powi(2)).sum::<f64>() / n;
        let within = moments.iter().map(|m| get(m).1).sum::<f64>() / n;
        1.0 - within / (between + within)
    };
    ImpressionPair {
        p: bound(|m| m.0),
        e: bound(|m| m.1),
    }
}

/// Everything generated for one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub entry: ManifestEntry,
    /// Stem gains in dBFS; `None` for silent stems.
    pub gains_db: [Option<f64>; NUM_SOURCES],
    pub embedding: RawEmbedding,
}

fn unit_rms(mut v: Vec<f64>) -> Vec<f64> {
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    if rms > 0.0 {
        v.iter_mut().for_each(|x| *x /= rms);
    }
    v
}

fn white(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn band_noise(n: usize, fs: f64, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    butterworth_bandpass(3, lo, hi, fs).apply(&white(n, rng))
}

/// Procedural stem for one class, normalized to unit RMS.
///
/// Classes in order: road traffic (80–350 Hz noise), machinery (tone
/// complex near 500 Hz), voices (1 kHz band noise with 4 Hz syllable
/// modulation), footsteps (2 kHz bursts), birds (4–6 kHz chirps), water
/// (noise around 8 kHz) and microphone rumble (gated 40–90 Hz noise).
pub fn stem(class: usize, n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = |i: usize| i as f64 / fs;
    let v = match class {
        0 => band_noise(n, fs, 80.0, 350.0, rng),
        1 => {
            let phase: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..2.0 * PI));
            (0..n)
                .map(|i| {
                    let a = 1.0 + 0.3 * (2.0 * PI * 0.5 * t(i)).sin();
                    a * [420.0, 500.0, 610.0]
                        .iter()
                        .zip(phase)
                        .map(|(f, ph)| (2.0 * PI * f * t(i) + ph).sin())
                        .sum::<f64>()
                })
                .collect()
        }
        2 => {
            let rate = rng.gen_range(3.0..5.0);
            let ph = rng.gen_range(0.0..2.0 * PI);
            band_noise(n, fs, 750.0, 1350.0, rng)
                .into_iter()
                .enumerate()
                .map(|(i, x)| x * (0.5 + 0.5 * (2.0 * PI * rate * t(i) + ph).sin()).powi(2))
                .collect()
        }
        3 => {
            let carrier = band_noise(n, fs, 1500.0, 2700.0, rng);
            let mut env = vec![0.0; n];
            let step = (fs * 0.45) as usize;
            let mut start = rng.gen_range(0..step);
            while start < n {
                for (k, e) in env[start..n.min(start + (fs * 0.08) as usize)].iter_mut().enumerate() {
                    *e = (-(k as f64) / (fs * 0.02)).exp();
                }
                start += step + rng.gen_range(0..step / 3);
            }
            carrier.iter().zip(&env).map(|(c, e)| c * e).collect()
        }
        4 => {
            let mut out = vec![0.0; n];
            let mut start = rng.gen_range(0..(fs * 0.3) as usize);
            while start < n {
                let len = (fs * rng.gen_range(0.08..0.2)) as usize;
                let (f0, f1) = (rng.gen_range(4200.0..5000.0), rng.gen_range(5000.0..5800.0));
                let mut phase = 0.0;
                for (k, o) in out[start..n.min(start + len)].iter_mut().enumerate() {
                    let frac = k as f64 / len as f64;
                    phase += 2.0 * PI * (f0 + (f1 - f0) * frac) / fs;
                    *o = (PI * frac).sin() * phase.sin();
                }
                start += len + (fs * rng.gen_range(0.1..0.5)) as usize;
            }
            out
        }
        5 => band_noise(n, fs, 6000.0, 11000.0, rng),
        6 => {
            let rumble = band_noise(n, fs, 40.0, 90.0, rng);
            let ph = rng.gen_range(0.0..2.0 * PI);
            rumble
                .into_iter()
                .enumerate()
                .map(|(i, x)| x * (0.2 + ((2.0 * PI * 0.3 * t(i) + ph).sin()).max(0.0)))
                .collect()
        }
        _ => panic!("no stem for class {class}"),
    };
    unit_rms(v)
}

/// Fixed `2048 × 7` map from centred ratings to the embedding.
fn embedding_matrix(recipe: &SynthRecipe) -> Vec<[f64; NUM_SOURCES]> {
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.embedding_seed);
    let scale = 1.0 / (NUM_SOURCES as f64).sqrt();
    (0..EMBEDDING_DIM)
        .map(|_| std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal) * scale))
        .collect()
}

fn recording_id(index: usize) -> String {
    format!("syn{index:05}")
}

/// Ratings, gains, attributes, metadata and embedding for one recording.
/// Audio is rendered separately by [`render_audio`].
fn describe(recipe: &SynthRecipe, matrix: &[[f64; NUM_SOURCES]], seed: u64, index: usize) -> SynthRecording {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("rec-{index}")));
    let mut gains = [None; NUM_SOURCES];
    for g in &mut gains {
        let rating: usize = rng.gen_range(1..=5);
        if rating > 1 {
            let j = recipe.gain_jitter_db;
            *g = Some(recipe.rating_levels_db[rating - 2] + rng.gen_range(-j..=j));
        }
    }
    let sources = SoundSourceScores(gains.map(|g| recipe.quantize_gain(g)));
    let means = recipe.attribute_means(&sources);
    let noise = Normal::new(0.0, recipe.attribute_noise.max(0.0)).expect("finite noise");
    let values = means.map(|m| to_score(m + if recipe.attribute_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 }));
    let attributes = AttributeScores::from_values(values, Scale::SevenPoint);

    let x = sources.scaled().map(|v| v - 0.5);
    let vector = matrix
        .iter()
        .map(|row| {
            let signal: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            recipe.embedding_gain * signal + recipe.embedding_noise * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();

    let id = recording_id(index);
    let lat = 34.60 + rng.gen_range(0.0..0.1);
    let lon = 133.85 + rng.gen_range(0.0..0.1);
    let datetime = format!("2016-{:02}-{:02}T{:02}:00:00", rng.gen_range(1..=12), rng.gen_range(1..=28), rng.gen_range(6..=20));
    let recording = Recording::new(id.clone(), format!("audio/{id}.wav"), lat, lon, datetime).expect("latitude in range");
    SynthRecording {
        entry: ManifestEntry {
            recording,
            sources,
            attributes,
            q3: None,
            q4: None,
        },
        gains_db: gains,
        embedding: RawEmbedding { id, vector },
    }
}

/// Mixes the stems at the recording's gains over a background noise floor.
pub fn render_audio(recipe: &SynthRecipe, seed: u64, rec: &SynthRecording) -> Waveform {
    let fs = f64::from(recipe.sample_rate);
    let n = recipe.sample_rate as usize * recipe.seconds;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("audio-{}", rec.entry.recording.id)));
    let bg = 10f64.powf(recipe.background_db / 20.0);
    let mut mix: Vec<f64> = white(n, &mut rng).into_iter().map(|v| v * bg).collect();
    for (class, gain) in rec.gains_db.iter().enumerate() {
        // Every stem is drawn so the random stream does not depend on which
        // classes are present.
        let s = stem(class, n, fs, &mut rng);
        if let Some(g) = gain {
            let a = 10f64.powf(g / 20.0);
            mix.iter_mut().zip(&s).for_each(|(m, v)| *m += a * v);
        }
    }
    Waveform::new(mix, recipe.sample_rate)
}

/// Describes `n` recordings without rendering audio.
pub fn describe_all(n: usize, recipe: &SynthRecipe, seed: u64) -> Vec<SynthRecording> {
    let matrix = embedding_matrix(recipe);
    (0..n).into_par_iter().map(|i| describe(recipe, &matrix, seed, i)).collect()
}

/// A recording with its acoustic feature, audio discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub recording: SynthRecording,
    pub feature: AcousticFeature,
}

/// Generates `n` recordings and extracts their acoustic features in memory,
/// in parallel.
pub fn generate_features(n: usize, recipe: &SynthRecipe, seed: u64, cfg: &ExtractionConfig) -> Result<Vec<SynthSample>, SynthError> {
    describe_all(n, recipe, seed)
        .into_par_iter()
        .map(|rec| {
            let feature = extract(&render_audio(recipe, seed, &rec), cfg)?;
            Ok(SynthSample { recording: rec, feature })
        })
        .collect()
}

/// Paths written by [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub audio_dir: PathBuf,
    pub recordings: Vec<SynthRecording>,
}

/// Writes `audio/<id>.wav`, `manifest.csv` and `embeddings.jsonl` under `dir`.
pub fn generate(n: usize, recipe: &SynthRecipe, seed: u64, dir: &Path) -> Result<SynthOutput, SynthError> {
    let audio_dir = dir.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| SynthError::Io {
        path: audio_dir.clone(),
        message: e.to_string(),
    })?;
    let recordings = describe_all(n, recipe, seed);
    recordings.par_iter().try_for_each(|rec| {
        let path = dir.join(&rec.entry.recording.audio_path);
        write_wav(&path, &render_audio(recipe, seed, rec))
    })?;
    let manifest = dir.join("manifest.csv");
    write_manifest(
        &manifest,
        &DatasetManifest {
            entries: recordings.iter().map(|r| r.entry.clone()).collect(),
        },
    )?;
    let embeddings = dir.join("embeddings.jsonl");
    let emb: Vec<RawEmbedding> = recordings.iter().map(|r| r.embedding.clone()).collect();
    write_embeddings(&embeddings, &emb)?;
    Ok(SynthOutput {
        manifest,
        embeddings,
        audio_dir,
        recordings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::{per_second_levels, CHANNELS};
    use crate::ssqp::impressions_from_attributes;

    #[test]
    fn quantization_rule() {
        let r = SynthRecipe::default();
        assert_eq!(r.quantize_gain(None), 1);
        for (k, level) in r.rating_levels_db.iter().enumerate() {
            for j in [-r.gain_jitter_db, 0.0, r.gain_jitter_db] {
                assert_eq!(r.quantize_gain(Some(level + j)), k as u8 + 2);
            }
        }
        let gains = [Some(-24.0), None, None, None, None, None, None];
        assert_eq!(gains.map(|g| r.quantize_gain(g)), [5, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn weights_match_the_impression_formula() {
        let (wp, we) = impression_weights();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let v: [u8; 8] = std::array::from_fn(|_| rng.gen_range(1..=7));
            let want = impressions_from_attributes(&AttributeScores::from_values(v, Scale::SevenPoint)).unwrap();
            let p: f64 = wp.iter().zip(v).map(|(w, a)| w * f64::from(a)).sum();
            let e: f64 = we.iter().zip(v).map(|(w, a)| w * f64::from(a)).sum();
            assert!((p - want.p).abs() < 1e-12 && (e - want.e).abs() < 1e-12);
        }
    }

    #[test]
    fn rounded_moments_by_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (mu, sigma) in [(4.3, 0.6), (6.8, 1.0), (1.2, 0.4)] {
            let (m, v) = rounded_moments(mu, sigma);
            let draws: Vec<f64> = (0..200_000)
                .map(|_| f64::from(to_score(mu + sigma * rng.sample::<f64, _>(StandardNormal))))
                .collect();
            let sm = draws.iter().sum::<f64>() / draws.len() as f64;
            let sv = draws.iter().map(|d| (d - sm).powi(2)).sum::<f64>() / draws.len() as f64;
            assert!((m - sm).abs() < 0.01 && (v - sv).abs() < 0.01, "{mu} {sigma}: {m} {v} vs {sm} {sv}");
        }
    }

    #[test]
    fn noiseless_targets_are_a_function_of_ratings() {
        let recipe = SynthRecipe {
            attribute_noise: 0.0,
            ..Default::default()
        };
        let recs = describe_all(300, &recipe, 3);
        for r in &recs {
            let want = recipe.attribute_means(&r.entry.sources).map(to_score);
            assert_eq!(r.entry.attributes.values(), want);
        }
        let sources: Vec<_> = recs.iter().map(|r| r.entry.sources).collect();
        let ideal = ideal_r2(&recipe, &sources);
        assert_eq!((ideal.p, ideal.e), (1.0, 1.0));
        let noisy = ideal_r2(&SynthRecipe::default(), &sources);
        assert!(noisy.p < 1.0 && noisy.p > 0.5 && noisy.e > 0.5, "{noisy:?}");
    }

    #[test]
    fn attributes_stay_on_scale() {
        for r in describe_all(500, &SynthRecipe::default(), 4) {
            r.entry.attributes.validate().unwrap();
            assert_eq!(r.embedding.vector.len(), EMBEDDING_DIM);
        }
    }

    #[test]
    fn bird_stem_peaks_in_upper_octaves() {
        let recipe = SynthRecipe::default();
        let mut rec = describe_all(1, &recipe, 5).remove(0);
        rec.gains_db = [None, None, None, None, Some(-24.0), None, None];
        let w = render_audio(&recipe, 5, &rec);
        let levels = per_second_levels(&w, &ExtractionConfig::default()).unwrap();
        for row in &levels.rows {
            let top = (1..CHANNELS).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            // Channels 7 and 8 are the 4 kHz and 8 kHz bands.
            assert!(top == 7 || top == 8, "{row:?}");
        }
    }

    #[test]
    fn each_stem_lands_in_its_band() {
        // Dominant octave channel (1 = 62.5 Hz .. 8 = 8 kHz) per class.
        let expect = [[2, 3, 4], [4, 4, 4], [5, 5, 5], [6, 6, 6], [7, 7, 7], [8, 8, 8], [1, 1, 1]];
        let fs = 32_000.0;
        for (class, allowed) in expect.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(class as u64);
            let s: Vec<f64> = stem(class, 320_000, fs, &mut rng).iter().map(|v| v * 0.05).collect();
            let levels = per_second_levels(&Waveform::new(s, 32_000), &ExtractionConfig::default()).unwrap();
            let mean: Vec<f64> = (1..CHANNELS).map(|c| levels.channel(c).iter().sum::<f64>() / 10.0).collect();
            let top = 1 + (0..8).max_by(|&a, &b| mean[a].total_cmp(&mean[b])).unwrap();
            assert!(allowed.contains(&top), "class {class}: {mean:?}");
        }
    }

    #[test]
    fn generate_is_byte_identical() {
        let recipe = SynthRecipe {
            seconds: 10,
            ..Default::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let out = generate(3, &recipe, 9, a.path()).unwrap();
        generate(3, &recipe, 9, b.path()).unwrap();
        for rel in ["manifest.csv", "embeddings.jsonl", "audio/syn00000.wav", "audio/syn00002.wav"] {
            assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{rel}");
        }
        let m = crate::data::load_manifest(&out.manifest).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.entries[1], out.recordings[1].entry);
    }
}
