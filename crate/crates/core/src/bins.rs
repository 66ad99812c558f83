//! Bin schema, Gaussian target quantization, and coarse/fine decoding.
//!
//! The unit interval is split into `N` equal-width bins. Bin `j` is scored by
//! its center `(2j + 1) / (2N)`, so the boundaries between neighbouring bins
//! sit at `j / N`. A scalar label `y` becomes a distribution over bins by
//! integrating `N(y, sigma^2)` over each bin's Voronoi cell, with the tails
//! beyond the outermost boundaries folded into the edge bins.

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for a probability vector to count as normalized.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Below this standard deviation the Gaussian is treated as a point mass.
pub const DEGENERATE_SIGMA: f64 = 1e-5;

/// Equal-width partition of `[0, 1]` with bin centers as scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct BinSchema {
    centers: Vec<f64>,
    midpoints: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SchemaRepr {
    n_bins: usize,
}

impl TryFrom<SchemaRepr> for BinSchema {
    type Error = Error;

    fn try_from(repr: SchemaRepr) -> Result<Self> {
        BinSchema::new(repr.n_bins)
    }
}

impl From<BinSchema> for SchemaRepr {
    fn from(schema: BinSchema) -> Self {
        SchemaRepr {
            n_bins: schema.n_bins(),
        }
    }
}

impl BinSchema {
    pub fn new(n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::InvalidSchema(format!(
                "need at least 2 bins, got {n_bins}"
            )));
        }
        let n = n_bins as f64;
        let centers = (0..n_bins)
            .map(|j| (2 * j + 1) as f64 / (2.0 * n))
            .collect();
        let midpoints = (1..n_bins).map(|j| j as f64 / n).collect();
        Ok(BinSchema { centers, midpoints })
    }

    pub fn n_bins(&self) -> usize {
        self.centers.len()
    }

    /// Scores `f(b_j)`, strictly increasing inside `(0, 1)`.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// The `N - 1` inner boundaries `(f(b_j) + f(b_{j+1})) / 2`.
    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.centers[bin]
    }

    /// Bin whose cell `(m_{j-1}, m_j]` contains `y`; a value sitting exactly
    /// on a boundary belongs to the lower bin.
    pub fn bin_of(&self, y: f64) -> usize {
        self.midpoints.partition_point(|&m| m < y)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n_bins() {
            return Err(Error::SchemaMismatch {
                expected: self.n_bins(),
                got: len,
            });
        }
        Ok(())
    }
}

/// Equal-width schema with `n_bins` bins.
pub fn make_schema(n_bins: usize) -> Result<BinSchema> {
    BinSchema::new(n_bins)
}

/// Probability vector over the bins of a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BinDistribution {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for BinDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        BinDistribution::new(probs)
    }
}

impl From<BinDistribution> for Vec<f64> {
    fn from(dist: BinDistribution) -> Self {
        dist.probs
    }
}

impl BinDistribution {
    /// Validates non-negativity and unit mass.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty distribution".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::Domain(format!(
                "probabilities must be finite and non-negative, got {p}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Domain(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(BinDistribution { probs })
    }

    /// Normalizes non-negative weights with positive total.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain(format!(
                "weights must have a positive finite total, got {total}"
            )));
        }
        BinDistribution::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn one_hot(n_bins: usize, bin: usize) -> Self {
        let mut probs = vec![0.0; n_bins];
        probs[bin] = 1.0;
        BinDistribution { probs }
    }

    pub fn uniform(n_bins: usize) -> Self {
        BinDistribution {
            probs: vec![1.0 / n_bins as f64; n_bins],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        BinDistribution { probs }
    }
}

/// Standard deviation of the Gaussian placed around a scalar label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantizeParams {
    sigma: f64,
}

impl QuantizeParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(QuantizeParams { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl TryFrom<f64> for QuantizeParams {
    type Error = Error;

    fn try_from(sigma: f64) -> Result<Self> {
        QuantizeParams::new(sigma)
    }
}

impl From<QuantizeParams> for f64 {
    fn from(params: QuantizeParams) -> Self {
        params.sigma
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Mass of the standard normal on `(lo, hi]`, computed on the side of zero
/// where the tail subtraction keeps its relative precision.
fn std_normal_mass(lo: f64, hi: f64) -> f64 {
    let upper = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
    if lo >= 0.0 {
        upper(lo) - upper(hi)
    } else {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    }
}

/// Quantizes `N(y, sigma^2)` onto the schema's bins.
pub fn quantize_scalar(
    y: f64,
    params: QuantizeParams,
    schema: &BinSchema,
) -> Result<BinDistribution> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!("label {y} outside [0, 1]")));
    }
    let n = schema.n_bins();
    let sigma = params.sigma();
    if sigma < DEGENERATE_SIGMA {
        return Ok(BinDistribution::one_hot(n, schema.bin_of(y)));
    }
    let z: Vec<f64> = schema.midpoints().iter().map(|m| (m - y) / sigma).collect();
    let mut probs = Vec::with_capacity(n);
    for j in 0..n {
        let lo = if j == 0 { f64::NEG_INFINITY } else { z[j - 1] };
        let hi = if j == n - 1 { f64::INFINITY } else { z[j] };
        probs.push(std_normal_mass(lo, hi).max(0.0));
    }
    Ok(BinDistribution::from_raw(probs))
}

/// Expected-label decode: `sum_j f(b_j) p_j`.
pub fn expected_decode(dist: &BinDistribution, schema: &BinSchema) -> Result<f64> {
    schema.check(dist.len())?;
    Ok(dot(dist.probs(), schema.centers()))
}

/// Argmax bin and its center; ties go to the lower index.
pub fn greedy_decode(dist: &BinDistribution, schema: &BinSchema) -> Result<(usize, f64)> {
    schema.check(dist.len())?;
    let bin = argmax(dist.probs());
    Ok((bin, schema.center(bin)))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// First index of the maximum.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
