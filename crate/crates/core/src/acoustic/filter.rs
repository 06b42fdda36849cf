//! IIR octave-band filters and the A-weighting curve.

use std::f64::consts::PI;

use num_complex::Complex64;

/// Centre frequencies of the octave bands, in Hz.
pub const OCTAVE_CENTERS: [f64; 8] = [62.5, 125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];

/// Order of the Butterworth low-pass prototype behind each band filter.
/// The band-pass realization has twice as many poles.
pub const BAND_PROTOTYPE_ORDER: usize = 6;

// Pole frequencies of the analog A-weighting network (Hz).
const A_POLE_1: f64 = 20.598997;
const A_POLE_2: f64 = 107.65265;
const A_POLE_3: f64 = 737.86223;
const A_POLE_4: f64 = 12194.217;

fn a_weighting_response(f: f64) -> f64 {
    let f2 = f * f;
    let num = A_POLE_4 * A_POLE_4 * f2 * f2;
    let den = (f2 + A_POLE_1 * A_POLE_1)
        * ((f2 + A_POLE_2 * A_POLE_2) * (f2 + A_POLE_3 * A_POLE_3)).sqrt()
        * (f2 + A_POLE_4 * A_POLE_4);
    num / den
}

/// Linear amplitude of the A-weighting curve, exactly 1 at 1 kHz. Zero at DC.
pub fn a_weighting_amplitude(f: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    a_weighting_response(f) / a_weighting_response(1000.0)
}

/// Octave band edges `center · 2^(±1/2)`.
pub fn octave_edges(center: f64) -> (f64, f64) {
    (center / 2f64.sqrt(), center * 2f64.sqrt())
}

/// Direct-form-II transposed biquad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// Denominator with a0 = 1 omitted.
    pub a: [f64; 2],
}

impl Biquad {
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
    pub sample_rate: f64,
}

impl SosFilter {
    /// Magnitude response at `freq` Hz.
    pub fn magnitude(&self, freq: f64) -> f64 {
        let omega = 2.0 * PI * freq / self.sample_rate;
        self.sections
            .iter()
            .map(|s| s.response(omega).norm())
            .product()
    }

    /// Filters a signal from zero initial state.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut out = input.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in out.iter_mut() {
                let x = *v;
                let y = s.b[0] * x + z1;
                z1 = s.b[1] * x - s.a[0] * y + z2;
                z2 = s.b[2] * x - s.a[1] * y;
                *v = y;
            }
        }
        out
    }
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    (2.0 * fs + s) / (2.0 * fs - s)
}

/// Butterworth band-pass between `low` and `high` Hz.
///
/// The prototype has `order` poles; each maps to one complex pole pair after
/// the low-pass to band-pass transform, so the result has `order` sections,
/// each with zeros at DC and Nyquist. Edges are prewarped and every section is
/// scaled to unit gain at the geometric centre, which makes the cascade peak at
/// exactly 0 dB.
pub fn butterworth_bandpass(order: usize, low: f64, high: f64, fs: f64) -> SosFilter {
    assert!(order >= 1 && 0.0 < low && low < high && high < fs / 2.0);
    let w1 = 2.0 * fs * (PI * low / fs).tan();
    let w2 = 2.0 * fs * (PI * high / fs).tan();
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;
    let center = 2.0 * (w0 / (2.0 * fs)).atan();

    let mut sections = Vec::with_capacity(order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta) * bw;
        let disc = (p * p - 4.0 * w0 * w0).sqrt();
        for s in [(p + disc) / 2.0, (p - disc) / 2.0] {
            if s.im <= 0.0 {
                continue;
            }
            let z = bilinear(s, fs);
            let mut sec = Biquad {
                b: [1.0, 0.0, -1.0],
                a: [-2.0 * z.re, z.norm_sqr()],
            };
            let g = sec.response(center).norm();
            sec.b.iter_mut().for_each(|c| *c /= g);
            sections.push(sec);
        }
    }
    debug_assert_eq!(sections.len(), order);
    SosFilter {
        sections,
        sample_rate: fs,
    }
}

/// One filter per octave band, in `OCTAVE_CENTERS` order.
pub fn octave_filterbank(fs: f64) -> Vec<SosFilter> {
    OCTAVE_CENTERS
        .iter()
        .map(|&c| {
            let (lo, hi) = octave_edges(c);
            butterworth_bandpass(BAND_PROTOTYPE_ORDER, lo, hi, fs)
        })
        .collect()
}
