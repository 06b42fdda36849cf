//! Deterministic fixtures shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use soundscape_core::acoustic::EXPECTED_SAMPLE_RATE;
use soundscape_core::Waveform;

/// Ten seconds of white noise at the expected sample rate.
pub fn white_noise(seed: u64, amplitude: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 10 * EXPECTED_SAMPLE_RATE as usize;
    let samples = (0..n).map(|_| amplitude * rng.sample::<f64, _>(StandardNormal)).collect();
    Waveform::new(samples, EXPECTED_SAMPLE_RATE)
}

/// Rows of uniform inputs with a smooth nonlinear single target.
pub fn regression(rows: usize, cols: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0f64..1.0));
    let y = Array2::from_shape_fn((rows, 1), |(i, _)| {
        let r = x.row(i);
        (r[0] * 1.5).tanh() - 0.5 * r[1 % cols] * r[2 % cols]
    });
    (x, y)
}

/// Gaussian rows of the given width.
pub fn gaussian_rows(rows: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}
