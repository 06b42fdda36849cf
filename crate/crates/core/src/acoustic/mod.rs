//! 126-dimensional acoustic features from 10-second recordings.
//!
//! Each second yields nine levels: the A-weighted equivalent level followed by
//! eight unweighted octave-band levels (62.5 Hz .. 8 kHz). The feature vector
//! holds the 10×9 per-second levels (second-major) followed by four
//! statistics per channel (mean, 10th, 50th and 90th percentile).

pub mod filter;
mod wav;

pub use filter::{a_weighting_amplitude, octave_edges, OCTAVE_CENTERS};
pub use wav::{load_audio, write_wav};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sample rate of the source recordings.
pub const EXPECTED_SAMPLE_RATE: u32 = 32_000;
pub const SECONDS: usize = 10;
/// L_Aeq plus eight octave bands.
pub const CHANNELS: usize = 9;
pub const STATS: usize = 4;
pub const RAW_LEN: usize = SECONDS * CHANNELS;
pub const FEATURE_LEN: usize = CHANNELS * (SECONDS + STATS);
pub const DEFAULT_SILENCE_FLOOR: f64 = -100.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("mono required, got {0} channels")]
    NotMono(u16),
    #[error("unsupported encoding: {0}")]
    Encoding(String),
    #[error("truncated or corrupt audio: {0}")]
    Truncated(String),
    #[error("sample rate {got} Hz, expected {expected} Hz")]
    SampleRate { got: u32, expected: u32 },
    #[error("audio too short: {got} samples, need {need}")]
    TooShort { got: usize, need: usize },
    #[error("frequency must be positive, got {0}")]
    Frequency(f64),
    #[error("feature has {0} values, expected {FEATURE_LEN}")]
    FeatureLength(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// Samples in [-1, 1].
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }
}

/// A-weighting gain in dB, normalized to 0 dB at 1 kHz.
pub fn a_weighting_gain(frequency: f64) -> Result<f64, AudioError> {
    if !(frequency > 0.0) || !frequency.is_finite() {
        return Err(AudioError::Frequency(frequency));
    }
    Ok(20.0 * a_weighting_amplitude(frequency).log10())
}

/// How the three percentile statistics are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileConvention {
    /// Ordinary percentiles: the p10 slot holds the 10th percentile.
    #[default]
    Statistical,
    /// Acoustic exceedance levels: the p10 slot holds L10, the level exceeded
    /// 10% of the time (the 90th percentile), and so on.
    Exceedance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Added to every dBFS level.
    pub calibration_offset: f64,
    /// Lower clamp for levels, applied after calibration.
    pub silence_floor: f64,
    pub percentile: PercentileConvention,
    /// Reject input at any other rate. `None` accepts any rate.
    pub required_sample_rate: Option<u32>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            calibration_offset: 0.0,
            silence_floor: DEFAULT_SILENCE_FLOOR,
            percentile: PercentileConvention::Statistical,
            required_sample_rate: Some(EXPECTED_SAMPLE_RATE),
        }
    }
}

/// Per-second levels in dB; column 0 is L_Aeq, columns 1..=8 the octave bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSecondLevels {
    pub rows: [[f64; CHANNELS]; SECONDS],
}

impl PerSecondLevels {
    pub fn channel(&self, ch: usize) -> [f64; SECONDS] {
        std::array::from_fn(|s| self.rows[s][ch])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticFeature {
    pub values: Vec<f64>,
}

impl AcousticFeature {
    pub fn new(values: Vec<f64>) -> Result<Self, AudioError> {
        if values.len() != FEATURE_LEN {
            return Err(AudioError::FeatureLength(values.len()));
        }
        Ok(Self { values })
    }

    pub fn raw(&self, second: usize, channel: usize) -> f64 {
        self.values[second * CHANNELS + channel]
    }

    /// Statistic `k` (0 mean, 1 p10, 2 p50, 3 p90) of a channel.
    pub fn stat(&self, channel: usize, k: usize) -> f64 {
        self.values[RAW_LEN + channel * STATS + k]
    }
}

fn level(mean_square: f64, cfg: &ExtractionConfig) -> f64 {
    let db = if mean_square > 0.0 {
        10.0 * mean_square.log10() + cfg.calibration_offset
    } else {
        f64::NEG_INFINITY
    };
    db.max(cfg.silence_floor)
}

/// Computes L_Aeq and octave-band levels for each of the first ten seconds.
///
/// A-weighting is applied per one-second frame in the frequency domain with
/// the analytic curve. Octave bands run through the Butterworth filterbank
/// continuously over the ten seconds.
pub fn per_second_levels(w: &Waveform, cfg: &ExtractionConfig) -> Result<PerSecondLevels, AudioError> {
    if let Some(expected) = cfg.required_sample_rate {
        if w.sample_rate != expected {
            return Err(AudioError::SampleRate {
                got: w.sample_rate,
                expected,
            });
        }
    }
    let frame = w.sample_rate as usize;
    let need = frame * SECONDS;
    if w.samples.len() < need {
        return Err(AudioError::TooShort {
            got: w.samples.len(),
            need,
        });
    }
    let signal = &w.samples[..need];
    let fs = f64::from(w.sample_rate);
    let mut rows = [[0.0; CHANNELS]; SECONDS];

    let fft = FftPlanner::new().plan_fft_forward(frame);
    let weights: Vec<f64> = (0..frame)
        .map(|k| {
            let bin = k.min(frame - k) as f64;
            a_weighting_amplitude(bin * fs / frame as f64).powi(2)
        })
        .collect();
    let mut buf = vec![Complex64::new(0.0, 0.0); frame];
    for (s, chunk) in signal.chunks_exact(frame).enumerate() {
        buf.iter_mut()
            .zip(chunk)
            .for_each(|(b, &x)| *b = Complex64::new(x, 0.0));
        fft.process(&mut buf);
        // Parseval: mean(x²) = Σ|X_k|² / N².
        let power: f64 = buf.iter().zip(&weights).map(|(b, w)| b.norm_sqr() * w).sum();
        rows[s][0] = level(power / (frame as f64 * frame as f64), cfg);
    }

    for (band, f) in filter::octave_filterbank(fs).iter().enumerate() {
        let y = f.apply(signal);
        for (s, chunk) in y.chunks_exact(frame).enumerate() {
            let ms = chunk.iter().map(|v| v * v).sum::<f64>() / frame as f64;
            rows[s][band + 1] = level(ms, cfg);
        }
    }
    Ok(PerSecondLevels { rows })
}

/// Linear-interpolation percentile at position `p·(n−1)` of the sorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Flattens the levels and appends per-channel statistics.
pub fn summarize(levels: &PerSecondLevels, convention: PercentileConvention) -> AcousticFeature {
    let mut values = Vec::with_capacity(FEATURE_LEN);
    for row in &levels.rows {
        values.extend_from_slice(row);
    }
    let qs = match convention {
        PercentileConvention::Statistical => [0.10, 0.50, 0.90],
        PercentileConvention::Exceedance => [0.90, 0.50, 0.10],
    };
    for ch in 0..CHANNELS {
        let col = levels.channel(ch);
        values.push(col.iter().sum::<f64>() / SECONDS as f64);
        values.extend(qs.iter().map(|&q| percentile(&col, q)));
    }
    AcousticFeature { values }
}

/// Full extraction: levels, then summary statistics.
pub fn extract(w: &Waveform, cfg: &ExtractionConfig) -> Result<AcousticFeature, AudioError> {
    per_second_levels(w, cfg).map(|l| summarize(&l, cfg.percentile))
}
