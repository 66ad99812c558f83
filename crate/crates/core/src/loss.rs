//! Training objectives over bin logits and their analytic gradients.

use serde::{Deserialize, Serialize};

use crate::bins::{dot, BinDistribution, BinSchema};
use crate::error::{Error, Result};
use crate::head::{log_softmax, softmax};

fn check_finite(logits: &[f64]) -> Result<()> {
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    Ok(())
}

fn check_len(schema: &BinSchema, len: usize) -> Result<()> {
    if len != schema.n_bins() {
        return Err(Error::SchemaMismatch {
            expected: schema.n_bins(),
            got: len,
        });
    }
    Ok(())
}

/// Forward KL `D(target || softmax(logits))` and its logit gradient `p - q`.
pub fn kl_direct_loss(target: &BinDistribution, logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_finite(logits)?;
    if target.len() != logits.len() {
        return Err(Error::SchemaMismatch {
            expected: target.len(),
            got: logits.len(),
        });
    }
    let log_p = log_softmax(logits);
    let loss: f64 = target
        .probs()
        .iter()
        .zip(&log_p)
        .filter(|(q, _)| **q > 0.0)
        .map(|(q, lp)| q * (q.ln() - lp))
        .sum();
    let grad = log_p
        .iter()
        .zip(target.probs())
        .map(|(lp, q)| lp.exp() - q)
        .collect();
    // Rounding can leave a -1e-17 residue on a perfect match.
    Ok((loss.max(0.0), grad))
}

/// Expected decode from logits plus its gradient `p_i (f(b_i) - y_hat)`.
pub fn expected_decode_logits(logits: &[f64], schema: &BinSchema) -> Result<(f64, Vec<f64>)> {
    check_finite(logits)?;
    check_len(schema, logits.len())?;
    let p = softmax(logits);
    let y_hat = dot(&p, schema.centers());
    let grad = p
        .iter()
        .zip(schema.centers())
        .map(|(pi, f)| pi * (f - y_hat))
        .collect();
    Ok((y_hat, grad))
}

/// Sign of the gold ordering of a pair: `+1` when the first item is higher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderSign {
    #[serde(rename = "a_higher")]
    FirstHigher,
    #[serde(rename = "b_higher")]
    SecondHigher,
}

impl OrderSign {
    pub fn value(self) -> f64 {
        match self {
            OrderSign::FirstHigher => 1.0,
            OrderSign::SecondHigher => -1.0,
        }
    }

    pub fn from_scores(a: f64, b: f64) -> Option<Self> {
        if a > b {
            Some(OrderSign::FirstHigher)
        } else if b > a {
            Some(OrderSign::SecondHigher)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginLoss {
    pub loss: f64,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
    pub decoded_a: f64,
    pub decoded_b: f64,
}

/// Hinge `max(0, delta - sign (y_a - y_b))` on expected decodes.
///
/// The subgradient is zero wherever the hinge is clamped, including the kink.
pub fn margin_rank_loss(
    logits_a: &[f64],
    logits_b: &[f64],
    sign: OrderSign,
    delta: f64,
    schema: &BinSchema,
) -> Result<MarginLoss> {
    let (ya, ga) = expected_decode_logits(logits_a, schema)?;
    let (yb, gb) = expected_decode_logits(logits_b, schema)?;
    let s = sign.value();
    let raw = delta - s * (ya - yb);
    if raw > 0.0 {
        Ok(MarginLoss {
            loss: raw,
            grad_a: ga.iter().map(|g| -s * g).collect(),
            grad_b: gb.iter().map(|g| s * g).collect(),
            decoded_a: ya,
            decoded_b: yb,
        })
    } else {
        let n = schema.n_bins();
        Ok(MarginLoss {
            loss: 0.0,
            grad_a: vec![0.0; n],
            grad_b: vec![0.0; n],
            decoded_a: ya,
            decoded_b: yb,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseReference {
    pub loss: f64,
    /// Gradient from differentiating the loss: `(y_hat - s) p_i (f(b_i) - y_hat)`.
    pub grad: Vec<f64>,
    /// Commonly quoted variant with `(f(b_i) - s)` in place of `(f(b_i) - y_hat)`;
    /// kept only for comparison, it is not the derivative of `loss`.
    pub quoted_grad: Vec<f64>,
    pub decoded: f64,
}

/// Squared error `0.5 (y_hat - s)^2` of the expected decode against a scalar.
pub fn mse_loss_reference(logits: &[f64], target: f64, schema: &BinSchema) -> Result<MseReference> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::Domain(format!("target {target} outside [0, 1]")));
    }
    let (y_hat, decode_grad) = expected_decode_logits(logits, schema)?;
    let p = softmax(logits);
    let residual = y_hat - target;
    Ok(MseReference {
        loss: 0.5 * residual * residual,
        grad: decode_grad.iter().map(|g| residual * g).collect(),
        quoted_grad: p
            .iter()
            .zip(schema.centers())
            .map(|(pi, f)| residual * pi * (f - target))
            .collect(),
        decoded: y_hat,
    })
}
