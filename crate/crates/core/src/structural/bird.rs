//! Factor/condition traces aggregated into an outcome distribution.

use serde::{Deserialize, Serialize};

use super::scorer::{checked_score, Scorer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirdFactor {
    pub name: String,
    pub conditions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirdTrace {
    pub id: String,
    pub context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub additional_sentence: Option<String>,
    pub factors: Vec<BirdFactor>,
    pub outcomes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<usize>,
}

impl BirdTrace {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGraph(format!("trace `{}`: {m}", self.id)));
        if self.factors.is_empty() {
            return bad("needs at least one factor".into());
        }
        if let Some(f) = self.factors.iter().find(|f| f.conditions.is_empty()) {
            return bad(format!("factor `{}` has no conditions", f.name));
        }
        if self.outcomes.len() < 2 {
            return bad("needs at least two outcomes".into());
        }
        if let Some(g) = self.gold.filter(|g| *g >= self.outcomes.len()) {
            return bad(format!("gold outcome {g} out of range"));
        }
        Ok(())
    }

    fn conditioning_context(&self) -> String {
        match &self.additional_sentence {
            Some(extra) if !extra.is_empty() => format!("{} {}", self.context, extra),
            _ => self.context.clone(),
        }
    }
}

/// Condition weights are normalized within each factor, factors are weighted
/// equally, and the per-outcome totals are renormalized over outcomes.
pub fn score_bird(trace: &BirdTrace, scorer: &dyn Scorer) -> Result<Vec<f64>> {
    trace.validate()?;
    let context = trace.conditioning_context();
    let mut raw = vec![0.0; trace.outcomes.len()];
    for factor in &trace.factors {
        let mut weights = Vec::with_capacity(factor.conditions.len());
        for cond in &factor.conditions {
            let at = || format!("trace `{}` condition {cond:?}", trace.id);
            weights.push(checked_score(scorer, at, &context, cond)?);
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateTrace);
        }
        for (cond, w) in factor.conditions.iter().zip(&weights) {
            let w = w / total;
            for (r, outcome) in raw.iter_mut().zip(&trace.outcomes) {
                let at = || format!("trace `{}` outcome {outcome:?} given {cond:?}", trace.id);
                *r += w * checked_score(scorer, at, cond, outcome)?;
            }
        }
    }
    let n_factors = trace.factors.len() as f64;
    raw.iter_mut().for_each(|r| *r /= n_factors);
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateTrace);
    }
    Ok(raw.into_iter().map(|r| r / total).collect())
}
