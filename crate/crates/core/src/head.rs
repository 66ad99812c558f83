//! The affine-plus-softmax probability head and the featurizers feeding it.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bins::{BinDistribution, BinSchema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "feature vector has non-finite entries".into(),
            ));
        }
        Ok(FeatureVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Weights are stored row-major as `d` rows of `n_bins` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub dim: usize,
    pub n_bins: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(dim: usize, n_bins: usize) -> Self {
        HeadParams {
            dim,
            n_bins,
            weights: vec![0.0; dim * n_bins],
            bias: vec![0.0; n_bins],
        }
    }

    /// Gaussian initialization with standard deviation `scale`; bias starts at zero.
    pub fn random(dim: usize, n_bins: usize, scale: f64, seed: u64) -> Self {
        let mut head = HeadParams::zeros(dim, n_bins);
        if scale > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, scale).expect("positive scale");
            for w in &mut head.weights {
                *w = normal.sample(&mut rng);
            }
        }
        head
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.dim * self.n_bins {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.n_bins,
                got: self.weights.len(),
            });
        }
        if self.bias.len() != self.n_bins {
            return Err(Error::DimensionMismatch {
                expected: self.n_bins,
                got: self.bias.len(),
            });
        }
        if self
            .weights
            .iter()
            .chain(&self.bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Numeric("head parameters are not finite".into()));
        }
        Ok(())
    }

    pub fn logits(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        let mut out = self.bias.clone();
        for (row, &xi) in self.weights.chunks_exact(self.n_bins).zip(&x.values) {
            if xi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        Ok(out)
    }

    /// Accumulates `dL/dW += x g^T` and `dL/db += g` for a logit gradient `g`.
    pub(crate) fn accumulate_grad(
        grad: &mut HeadParams,
        x: &FeatureVector,
        logit_grad: &[f64],
        scale: f64,
    ) {
        for (b, g) in grad.bias.iter_mut().zip(logit_grad) {
            *b += scale * g;
        }
        for (row, &xi) in grad.weights.chunks_exact_mut(grad.n_bins).zip(&x.values) {
            if xi == 0.0 {
                continue;
            }
            for (w, g) in row.iter_mut().zip(logit_grad) {
                *w += scale * xi * g;
            }
        }
    }

    pub fn check_schema(&self, schema: &BinSchema) -> Result<()> {
        if schema.n_bins() != self.n_bins {
            return Err(Error::SchemaMismatch {
                expected: self.n_bins,
                got: schema.n_bins(),
            });
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Predicted bin distribution for one feature vector.
pub fn forward(head: &HeadParams, x: &FeatureVector) -> Result<BinDistribution> {
    let logits = head.logits(x)?;
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    Ok(BinDistribution::from_raw(softmax(&logits)))
}

/// Maps a (context, proposition) pair to a feature vector.
pub trait Featurizer: Send + Sync {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn featurize(&self, id: &str, context: &str, proposition: &str) -> Result<FeatureVector>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(FNV_PRIME);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Bag-of-tokens hashing into `d` buckets, l2-normalized.
///
/// Context and proposition tokens hash into separate namespaces, so the same
/// word on either side lands in different buckets.
pub fn hashed_featurizer(
    context: &str,
    proposition: &str,
    d: usize,
    seed: u64,
) -> Result<FeatureVector> {
    if d < 8 {
        return Err(Error::Domain(format!(
            "feature dimension must be at least 8, got {d}"
        )));
    }
    let mut values = vec![0.0; d];
    let mut count = 0usize;
    for (tag, text) in [(b'c', context), (b'p', proposition)] {
        for tok in tokens(text) {
            let mut key = Vec::with_capacity(tok.len() + 2);
            key.push(tag);
            key.push(b':');
            key.extend_from_slice(tok.as_bytes());
            values[(fnv1a(seed, &key) % d as u64) as usize] += 1.0;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyInput(
            "context and proposition have no tokens".into(),
        ));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(FeatureVector { values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashedFeaturizer {
    pub dim: usize,
    pub seed: u64,
}

impl Featurizer for HashedFeaturizer {
    fn name(&self) -> &'static str {
        "hashed"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn featurize(&self, _id: &str, context: &str, proposition: &str) -> Result<FeatureVector> {
        hashed_featurizer(context, proposition, self.dim, self.seed)
    }
}

/// Looks features up by instance id from a precomputed table.
#[derive(Debug, Clone)]
pub struct PrecomputedFeaturizer {
    dim: usize,
    table: HashMap<String, FeatureVector>,
}

impl PrecomputedFeaturizer {
    pub fn new(table: HashMap<String, FeatureVector>) -> Result<Self> {
        let dim = table.values().next().map(FeatureVector::dim).unwrap_or(0);
        if let Some((id, v)) = table.iter().find(|(_, v)| v.dim() != dim) {
            return Err(Error::Config(format!(
                "precomputed features for `{id}` have dimension {}, expected {dim}",
                v.dim()
            )));
        }
        Ok(PrecomputedFeaturizer { dim, table })
    }
}

impl Featurizer for PrecomputedFeaturizer {
    fn name(&self) -> &'static str {
        "precomputed"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn featurize(&self, id: &str, _context: &str, _proposition: &str) -> Result<FeatureVector> {
        self.table
            .get(id)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no precomputed features for `{id}`")))
    }
}
