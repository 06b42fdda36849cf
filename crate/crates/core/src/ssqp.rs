//! Pleasantness / Eventfulness from the eight soundscape attributes.
//!
//! The attributes sit on a circumplex: Pleasant and Annoying on the horizontal
//! axis, Eventful and Uneventful on the vertical one, and the four diagonal
//! terms projected onto both axes with weight cos(π/4).

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;
use thiserror::Error;

use crate::data::{AttributeScores, ImpressionPair};

#[derive(Debug, Error, PartialEq)]
pub enum SsqpError {
    #[error("unsupported rating scale {0} (expected 5 or 7)")]
    UnsupportedScale(u32),
    #[error("attribute {attribute} = {value} out of range 1..{max}")]
    ScoreOutOfRange {
        attribute: &'static str,
        value: u8,
        max: u8,
    },
}

/// Number of points on the attribute rating scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scale {
    FivePoint,
    SevenPoint,
}

impl Scale {
    pub fn from_points(points: u32) -> Result<Self, SsqpError> {
        match points {
            5 => Ok(Scale::FivePoint),
            7 => Ok(Scale::SevenPoint),
            other => Err(SsqpError::UnsupportedScale(other)),
        }
    }

    pub fn points(self) -> u8 {
        match self {
            Scale::FivePoint => 5,
            Scale::SevenPoint => 7,
        }
    }

    /// Largest possible difference between two ratings on this scale.
    pub fn span(self) -> f64 {
        f64::from(self.points() - 1)
    }
}

/// Divisor that maps the raw projections onto [-1, 1].
///
/// With span `d = points - 1` the extreme numerator is `d + cos(π/4)·2d`,
/// which is `d + √(2d²)`: `6 + √72` on the 7-point scale and `4 + √32` on the
/// 5-point one. The exhaustive search in the tests confirms the 5-point value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationFactor {
    pub scale: Scale,
    pub value: f64,
}

impl NormalizationFactor {
    pub fn for_scale(scale: Scale) -> Self {
        let d = scale.span();
        Self {
            scale,
            value: d + (2.0 * d * d).sqrt(),
        }
    }
}

/// Normalization factor for a scale given by its number of points.
pub fn normalization_factor(points: u32) -> Result<f64, SsqpError> {
    Scale::from_points(points).map(|s| NormalizationFactor::for_scale(s).value)
}

/// Raw (unnormalized) projections of an attribute tuple onto the two axes.
fn projections(a: &AttributeScores) -> (f64, f64) {
    let f = |v: u8| f64::from(v);
    let diag = FRAC_PI_4.cos();
    let p = (f(a.pl) - f(a.an)) + diag * (f(a.ca) - f(a.ch) + f(a.vi) - f(a.mo));
    let e = (f(a.ev) - f(a.un)) + diag * (f(a.ch) - f(a.ca) + f(a.vi) - f(a.mo));
    (p, e)
}

/// Computes the normalized (P, E) pair for one attribute tuple.
pub fn impressions_from_attributes(attrs: &AttributeScores) -> Result<ImpressionPair, SsqpError> {
    attrs.validate()?;
    let n = NormalizationFactor::for_scale(attrs.scale).value;
    let (p, e) = projections(attrs);
    Ok(ImpressionPair { p: p / n, e: e / n })
}
