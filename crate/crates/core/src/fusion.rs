//! Multi-annotator label fusion: agreement filtering, confidence-weighted
//! mixtures of quantized Gaussians, and the logistic label transform.

use serde::{Deserialize, Serialize};

use crate::bins::{quantize_scalar, BinDistribution, BinSchema, QuantizeParams};
use crate::error::{Error, Result};

/// `K` estimates of one instance with their judge confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAnnotationSet {
    pub instance_id: String,
    pub estimates: Vec<f64>,
    pub confidences: Vec<f64>,
    #[serde(default)]
    pub rationales: Vec<Option<String>>,
}

impl SyntheticAnnotationSet {
    pub fn new(
        instance_id: impl Into<String>,
        estimates: Vec<f64>,
        confidences: Vec<f64>,
    ) -> Result<Self> {
        let set = SyntheticAnnotationSet {
            instance_id: instance_id.into(),
            estimates,
            confidences,
            rationales: Vec::new(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimates.is_empty() {
            return Err(Error::EmptyInput(format!(
                "`{}` has no estimates",
                self.instance_id
            )));
        }
        if self.estimates.len() != self.confidences.len() {
            return Err(Error::DimensionMismatch {
                expected: self.estimates.len(),
                got: self.confidences.len(),
            });
        }
        if let Some(v) = self
            .estimates
            .iter()
            .chain(&self.confidences)
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Domain(format!(
                "`{}`: estimates and confidences must lie in [0, 1], got {v}",
                self.instance_id
            )));
        }
        Ok(())
    }

    pub fn discrepancy(&self) -> f64 {
        discrepancy(&self.estimates).expect("validated sets are non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub alpha: f64,
    pub discrepancy_threshold: f64,
    pub sigma: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            alpha: 2.0,
            discrepancy_threshold: 0.2,
            sigma: 0.05,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.discrepancy_threshold) {
            return Err(Error::Config(format!(
                "discrepancy_threshold must lie in [0, 1], got {}",
                self.discrepancy_threshold
            )));
        }
        QuantizeParams::new(self.sigma).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Spread `max - min` of the estimates.
pub fn discrepancy(estimates: &[f64]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput("no estimates".into()));
    }
    let max = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = estimates.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Stable split into (discrepancy <= threshold, discrepancy > threshold).
pub fn partition_by_agreement(
    sets: Vec<SyntheticAnnotationSet>,
    threshold: f64,
) -> (Vec<SyntheticAnnotationSet>, Vec<SyntheticAnnotationSet>) {
    sets.into_iter().partition(|s| s.discrepancy() <= threshold)
}

/// `pi_k = c_k^alpha / sum_j c_j^alpha`.
pub fn confidence_weights(confidences: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if confidences.is_empty() {
        return Err(Error::EmptyInput("no confidences".into()));
    }
    // 0^0 is 1 here, so alpha = 0 always yields uniform weights.
    let powered: Vec<f64> = confidences
        .iter()
        .map(|c| if alpha == 0.0 { 1.0 } else { c.powf(alpha) })
        .collect();
    let total: f64 = powered.iter().sum();
    if total > 0.0 && total.is_finite() {
        return Ok(powered.into_iter().map(|p| p / total).collect());
    }
    if confidences.iter().all(|c| *c == 0.0) {
        return Err(Error::DegenerateConfidence { alpha });
    }
    // Every non-zero power underflowed: renormalize in log space.
    let logs: Vec<f64> = confidences
        .iter()
        .map(|c| {
            if *c > 0.0 {
                alpha * c.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Mixture of per-estimate quantized Gaussians weighted by sharpened confidences.
pub fn fuse_confidence_weighted(
    set: &SyntheticAnnotationSet,
    config: &FusionConfig,
    schema: &BinSchema,
) -> Result<BinDistribution> {
    set.validate()?;
    let weights = confidence_weights(&set.confidences, config.alpha)?;
    let params = QuantizeParams::new(config.sigma)?;
    let mut mix = vec![0.0; schema.n_bins()];
    for (&y, &w) in set.estimates.iter().zip(&weights) {
        let q = quantize_scalar(y, params, schema)?;
        for (m, p) in mix.iter_mut().zip(q.probs()) {
            *m += w * p;
        }
    }
    BinDistribution::new(mix)
}

/// Monotone logistic map between an annotation scale and probabilities:
/// `forward(x) = 1 / (1 + exp(-scale (x - offset)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticTransform {
    pub scale: f64,
    pub offset: f64,
}

impl Default for LogisticTransform {
    fn default() -> Self {
        LogisticTransform {
            scale: 1.0,
            offset: 0.0,
        }
    }
}

/// Clip used before taking a logit.
pub const LOGIT_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverted {
    pub value: f64,
    /// Set when the input had to be clipped into `[LOGIT_CLIP, 1 - LOGIT_CLIP]`.
    pub clipped: bool,
}

impl LogisticTransform {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite() && self.offset.is_finite()) {
            return Err(Error::Config(format!(
                "logistic transform needs a positive scale and finite offset, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-self.scale * (x - self.offset)).exp())
    }

    /// Logit direction; inputs at or beyond the open interval's ends are clipped.
    pub fn inverse(&self, p: f64) -> Inverted {
        let clipped_p = p.clamp(LOGIT_CLIP, 1.0 - LOGIT_CLIP);
        Inverted {
            value: self.offset + (clipped_p / (1.0 - clipped_p)).ln() / self.scale,
            clipped: clipped_p != p,
        }
    }
}
