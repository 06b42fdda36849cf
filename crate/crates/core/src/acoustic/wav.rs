use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioError, Waveform};

fn io_err(path: &Path, e: impl ToString) -> AudioError {
    AudioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Reads a mono 16-bit PCM WAV file, scaling samples by 1/32768.
pub fn load_audio(path: &Path) -> Result<Waveform, AudioError> {
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => io_err(path, e),
        hound::Error::IoError(e) => AudioError::Truncated(e.to_string()),
        other => AudioError::Encoding(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::NotMono(spec.channels));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::Encoding(format!(
            "{:?} {}-bit, need 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let declared = reader.len() as usize;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AudioError::Truncated(e.to_string()))?;
    if samples.len() < declared {
        return Err(AudioError::Truncated(format!(
            "{} of {declared} samples",
            samples.len()
        )));
    }
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Writes a mono 16-bit PCM WAV file; samples outside [-1, 1) are clipped.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<(), AudioError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| io_err(path, e))?;
    for &s in &w.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| io_err(path, e))?;
    }
    writer.finalize().map_err(|e| io_err(path, e))
}
