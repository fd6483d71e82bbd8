//! Random-feature embeddings shared by every client.
//!
//! Continuous variables use cosine features whose inner products approximate
//! a Gaussian kernel with per-variable bandwidth; the discrete surrogate
//! variable uses signed-hash features realizing the delta kernel in
//! expectation (or an exact scaled one-hot when the feature count allows).
//! All draws are pure functions of `(seed, variable index)`, so broadcasting
//! a `FeatureSpec` makes every client embed identically.

use crate::seedstream::stream;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const TAU: f64 = std::f64::consts::TAU;

/// Per-variable kind and kernel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VariableKind {
    Continuous { sigma: f64 },
    Discrete { k: usize },
}

/// How the delta kernel for discrete variables is realized at finite `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscreteMode {
    /// Random ±1 signs scaled by 1/√h; unbiased for the delta kernel at any h.
    #[default]
    Signed,
    /// Exact delta kernel; requires h ≥ number of categories.
    OneHot,
}

/// Broadcast description of the shared feature maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub h: usize,
    pub seed: u64,
    pub variables: Vec<VariableKind>,
    #[serde(default)]
    pub discrete: DiscreteMode,
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(Error::InvalidConfig("feature count h must be ≥ 1".into()));
        }
        for (j, v) in self.variables.iter().enumerate() {
            match v {
                VariableKind::Continuous { sigma } => {
                    if !(*sigma > 0.0) || !sigma.is_finite() {
                        return Err(Error::InvalidConfig(format!(
                            "variable {j}: bandwidth must be positive and finite, got {sigma}"
                        )));
                    }
                }
                VariableKind::Discrete { k } => {
                    if *k == 0 {
                        return Err(Error::InvalidConfig(format!(
                            "variable {j}: discrete variable needs ≥ 1 category"
                        )));
                    }
                    if self.discrete == DiscreteMode::OneHot && *k > self.h {
                        return Err(Error::InvalidConfig(format!(
                            "variable {j}: one-hot features need h ≥ {k}, have h = {}",
                            self.h
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn d_prime(&self) -> usize {
        self.variables.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feature spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: FeatureSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Cosine feature map for one continuous variable: frequencies already
/// scaled by 1/σ, phases in [0, 2π).
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousFeatureMap {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Delta-kernel feature map: one row of length h per category.
/// Rows hold ±1 signs (scaled at embed time) or one-hot indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFeatureMap {
    pub rows: Vec<Vec<f64>>,
    scale: f64,
}

impl DiscreteFeatureMap {
    pub fn categories(&self) -> usize {
        self.rows.len()
    }

    /// Embedded row for 1-based category `k`.
    pub fn embedded_row(&self, k: usize) -> Result<Vec<f64>> {
        let row = self
            .rows
            .get(k.wrapping_sub(1))
            .ok_or_else(|| Error::Input(format!("category {k} out of 1..={}", self.rows.len())))?;
        Ok(row.iter().map(|s| s * self.scale).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Continuous(ContinuousFeatureMap),
    Discrete(DiscreteFeatureMap),
}

/// All per-variable maps drawn from one spec.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    pub h: usize,
    pub maps: Vec<FeatureMap>,
}

const CONT_STREAM: u64 = 0x00C0;
const DISC_STREAM: u64 = 0x00D1;

/// Draws the per-variable maps. Identical `(seed, spec)` gives identical maps.
pub fn draw_feature_maps(spec: &FeatureSpec) -> Result<FeatureMaps> {
    spec.validate()?;
    let h = spec.h;
    let maps = spec
        .variables
        .iter()
        .enumerate()
        .map(|(j, kind)| match kind {
            VariableKind::Continuous { sigma } => {
                let mut rng = stream(spec.seed, &[CONT_STREAM, j as u64]);
                let w: Vec<f64> = (0..h)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) / sigma)
                    .collect();
                let b: Vec<f64> = (0..h).map(|_| rng.random_range(0.0..TAU)).collect();
                FeatureMap::Continuous(ContinuousFeatureMap { w, b })
            }
            VariableKind::Discrete { k } => {
                let rows = match spec.discrete {
                    DiscreteMode::Signed => {
                        let mut rng = stream(spec.seed, &[DISC_STREAM, j as u64]);
                        (0..*k)
                            .map(|_| {
                                (0..h)
                                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                                    .collect()
                            })
                            .collect()
                    }
                    DiscreteMode::OneHot => (0..*k)
                        .map(|cat| {
                            let mut row = vec![0.0; h];
                            row[cat] = 1.0;
                            row
                        })
                        .collect(),
                };
                let scale = match spec.discrete {
                    DiscreteMode::Signed => 1.0 / (h as f64).sqrt(),
                    DiscreteMode::OneHot => 1.0,
                };
                FeatureMap::Discrete(DiscreteFeatureMap { rows, scale })
            }
        })
        .collect();
    Ok(FeatureMaps { h, maps })
}

impl FeatureMaps {
    pub fn d_prime(&self) -> usize {
        self.maps.len()
    }

    /// Embeds one sample of variable `var` into `out` (length h).
    ///
    /// Discrete variables expect a 1-based integer category stored as f64.
    pub fn embed_into(&self, var: usize, value: f64, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.h);
        match self
            .maps
            .get(var)
            .ok_or_else(|| Error::Input(format!("variable index {var} out of range")))?
        {
            FeatureMap::Continuous(m) => {
                if !value.is_finite() {
                    return Err(Error::Input(format!(
                        "non-finite sample {value} for variable {var}"
                    )));
                }
                let scale = (2.0 / self.h as f64).sqrt();
                for j in 0..self.h {
                    out[j] = scale * (m.w[j] * value + m.b[j]).cos();
                }
            }
            FeatureMap::Discrete(m) => {
                let k = value as usize;
                if value.fract() != 0.0 || k == 0 || k > m.rows.len() {
                    return Err(Error::Input(format!(
                        "variable {var}: expected category in 1..={}, got {value}",
                        m.rows.len()
                    )));
                }
                let row = &m.rows[k - 1];
                for j in 0..self.h {
                    out[j] = row[j] * m.scale;
                }
            }
        }
        Ok(())
    }

    pub fn embed(&self, var: usize, value: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.h];
        self.embed_into(var, value, &mut out)?;
        Ok(out)
    }

    /// Sum of member embeddings; the empty set maps to the zero vector.
    pub fn embed_set(&self, members: &[(usize, f64)]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.h];
        let mut buf = vec![0.0; self.h];
        for &(var, value) in members {
            self.embed_into(var, value, &mut buf)?;
            for j in 0..self.h {
                acc[j] += buf[j];
            }
        }
        Ok(acc)
    }

    /// Delta-feature rows of the (single) discrete variable, already scaled.
    pub fn discrete_rows(&self, var: usize) -> Result<Vec<Vec<f64>>> {
        match self.maps.get(var) {
            Some(FeatureMap::Discrete(m)) => {
                (1..=m.rows.len()).map(|k| m.embedded_row(k)).collect()
            }
            _ => Err(Error::Input(format!("variable {var} is not discrete"))),
        }
    }
}
