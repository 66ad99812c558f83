//! Evaluation statistics: rank correlation, ranking risk, choice accuracies,
//! calibration error and divergences. All logarithms are natural.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bins::argmax;
use crate::error::{Error, Result};

fn check_pair_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair_lengths(xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(Error::EmptyInput(
            "spearman needs at least two points".into(),
        ));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Fraction of discordant pairs among pairs with distinct gold values.
///
/// Prediction ties are not counted as discordant.
pub fn ranking_risk(preds: &[f64], golds: &[f64]) -> Result<f64> {
    check_pair_lengths(preds.len(), golds.len())?;
    let mut comparable = 0usize;
    let mut discordant = 0usize;
    for i in 0..golds.len() {
        for j in i + 1..golds.len() {
            let g = golds[i] - golds[j];
            if g == 0.0 {
                continue;
            }
            comparable += 1;
            if g * (preds[i] - preds[j]) < 0.0 {
                discordant += 1;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(discordant as f64 / comparable as f64)
}

/// A multiple-choice group: candidate scores and the gold index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceGroup {
    pub scores: Vec<f64>,
    pub gold: usize,
}

/// Mean of `[unique argmax == gold]`; a tie at the top is wrong.
pub fn top1_accuracy(groups: &[ChoiceGroup]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("no groups".into()));
    }
    let mut correct = 0usize;
    for (k, g) in groups.iter().enumerate() {
        if g.scores.len() < 2 {
            return Err(Error::EmptyInput(format!(
                "group {k} has fewer than two candidates"
            )));
        }
        if g.gold >= g.scores.len() {
            return Err(Error::Domain(format!(
                "group {k}: gold index {} out of range",
                g.gold
            )));
        }
        let best = g.scores[argmax(&g.scores)];
        let n_best = g.scores.iter().filter(|s| **s == best).count();
        if n_best == 1 && g.scores[g.gold] == best {
            correct += 1;
        }
    }
    Ok(correct as f64 / groups.len() as f64)
}

/// Fraction of `(strengthened, weakened)` pairs scored strictly in order.
pub fn pairwise_direction_accuracy(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs".into()));
    }
    let correct = pairs.iter().filter(|(s, w)| s > w).count();
    Ok(correct as f64 / pairs.len() as f64)
}

fn check_probs(preds: &[f64]) -> Result<()> {
    if let Some(p) = preds.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("prediction {p} outside [0, 1]")));
    }
    Ok(())
}

/// Expected calibration error over `n_bins` equal-width confidence bins.
pub fn ece(preds: &[f64], labels: &[bool], n_bins: usize) -> Result<f64> {
    check_pair_lengths(preds.len(), labels.len())?;
    check_probs(preds)?;
    if n_bins == 0 {
        return Err(Error::Config("ece needs at least one bin".into()));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("no predictions".into()));
    }
    let mut count = vec![0usize; n_bins];
    let mut sum_pred = vec![0.0; n_bins];
    let mut sum_label = vec![0.0; n_bins];
    for (&p, &y) in preds.iter().zip(labels) {
        let b = ((p * n_bins as f64).floor() as usize).min(n_bins - 1);
        count[b] += 1;
        sum_pred[b] += p;
        sum_label[b] += if y { 1.0 } else { 0.0 };
    }
    let total = preds.len() as f64;
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let n = count[b] as f64;
            n / total * (sum_pred[b] / n - sum_label[b] / n).abs()
        })
        .sum())
}

/// Mean squared error against binary labels.
pub fn brier(preds: &[f64], labels: &[bool]) -> Result<f64> {
    check_pair_lengths(preds.len(), labels.len())?;
    check_probs(preds)?;
    if preds.is_empty() {
        return Err(Error::EmptyInput("no predictions".into()));
    }
    Ok(preds
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let d = p - if y { 1.0 } else { 0.0 };
            d * d
        })
        .sum::<f64>()
        / preds.len() as f64)
}

pub fn mean_absolute_error(preds: &[f64], golds: &[f64]) -> Result<f64> {
    check_pair_lengths(preds.len(), golds.len())?;
    if preds.is_empty() {
        return Err(Error::EmptyInput("no predictions".into()));
    }
    Ok(preds
        .iter()
        .zip(golds)
        .map(|(p, g)| (p - g).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// Jensen-Shannon divergence, bounded by `ln 2`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SchemaMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((0.5 * kl(p, &m) + 0.5 * kl(q, &m)).clamp(0.0, std::f64::consts::LN_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteTriple {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

/// Collapses NLI votes to a scalar: entailment 1.0, neutral 0.2, contradiction 0.0.
pub fn chaosnli_scalar(votes: VoteTriple) -> Result<f64> {
    let VoteTriple {
        entailment: e,
        neutral: n,
        contradiction: c,
    } = votes;
    if [e, n, c].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!(
            "vote counts must be non-negative, got {votes:?}"
        )));
    }
    let total = e + n + c;
    if total == 0.0 {
        return Err(Error::EmptyInput("no votes".into()));
    }
    Ok((e + 0.2 * n) / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub count: usize,
}

/// Named metrics with their sample counts; keys sort for stable output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: BTreeMap<String, Metric>,
}

impl MetricsReport {
    pub fn insert(&mut self, name: impl Into<String>, value: f64, count: usize) {
        self.metrics.insert(name.into(), Metric { value, count });
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.value)
    }
}
