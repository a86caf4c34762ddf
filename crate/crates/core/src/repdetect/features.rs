//! Window features and their discretization.

use serde::{Deserialize, Serialize};

use super::DetectError;
use crate::stats;

/// Default template length in samples.
pub const TEMPLATE_LEN: usize = 50;

/// The shared repetition template: a V made of two half-cosine limbs,
/// z-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct RepTemplate {
    values: Vec<f64>,
}

impl RepTemplate {
    pub fn v_shape(len: usize) -> Self {
        assert!(len >= 3, "template needs at least 3 samples");
        let raw: Vec<f64> = (0..len)
            .map(|i| {
                let u = i as f64 / (len - 1) as f64;
                0.5 * (1.0 + (std::f64::consts::TAU * u).cos())
            })
            .collect();
        Self {
            values: stats::znormalize(&raw).expect("V template is not constant"),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for RepTemplate {
    fn default() -> Self {
        Self::v_shape(TEMPLATE_LEN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Corr,
    Rom,
    Std,
    Gradient,
}

impl Feature {
    pub const ALL: [Feature; 4] = [Feature::Corr, Feature::Rom, Feature::Std, Feature::Gradient];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Corr => "corr",
            Feature::Rom => "rom",
            Feature::Std => "std",
            Feature::Gradient => "gradient",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub corr: f64,
    pub rom: f64,
    pub std: f64,
    pub gradient: f64,
}

impl WindowFeatures {
    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::Corr => self.corr,
            Feature::Rom => self.rom,
            Feature::Std => self.std,
            Feature::Gradient => self.gradient,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.corr, self.rom, self.std, self.gradient]
    }
}

/// corr: Pearson correlation of the window (resampled to the template
/// length) with the template, 0 for a constant window; rom: max - min;
/// std: sample standard deviation; gradient: share of positive first
/// differences.
pub fn extract_features(window: &[f64], template: &RepTemplate) -> Result<WindowFeatures, DetectError> {
    if window.len() < 3 {
        return Err(DetectError::WindowTooShort(window.len()));
    }
    let resampled = stats::resample_linear(window, template.len());
    let corr = stats::pearson(&resampled, template.values()).unwrap_or(0.0);
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let rising = window.windows(2).filter(|w| w[1] > w[0]).count();
    Ok(WindowFeatures {
        corr,
        rom: hi - lo,
        std: stats::sample_std(window),
        gradient: rising as f64 / (window.len() - 1) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    Low = 0,
    Medium = 1,
    High = 2,
}

impl Symbol {
    pub const ALL: [Symbol; 3] = [Symbol::Low, Symbol::Medium, Symbol::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

/// Per-feature pair of increasing thresholds `(c1, c2)`.
pub type Cutpoints = [(f64, f64); 4];

/// Left-closed bins: low below c1, medium in [c1, c2), high from c2.
pub fn discretize_value(value: f64, (c1, c2): (f64, f64)) -> Symbol {
    if value < c1 {
        Symbol::Low
    } else if value < c2 {
        Symbol::Medium
    } else {
        Symbol::High
    }
}

pub fn discretize_with(features: &WindowFeatures, cutpoints: &Cutpoints) -> [Symbol; 4] {
    let v = features.as_array();
    std::array::from_fn(|i| discretize_value(v[i], cutpoints[i]))
}
