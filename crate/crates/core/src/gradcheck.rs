//! Central finite-difference checks of the analytic logit gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bins::{make_schema, BinDistribution};
use crate::error::{Error, Result};
use crate::head::softmax;
use crate::loss::{
    expected_decode_logits, kl_direct_loss, margin_rank_loss, mse_loss_reference, OrderSign,
};

/// Max over coordinates of `|fd_i - g_i| / max(1, |g_i|)`.
pub fn grad_check<F>(loss: F, point: &[f64], epsilon: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Domain(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let (_, analytic) = loss(point)?;
    if analytic.len() != point.len() {
        return Err(Error::DimensionMismatch {
            expected: point.len(),
            got: analytic.len(),
        });
    }
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + epsilon;
        let (plus, _) = loss(&x)?;
        x[i] = orig - epsilon;
        let (minus, _) = loss(&x)?;
        x[i] = orig;
        let fd = (plus - minus) / (2.0 * epsilon);
        worst = worst.max((fd - analytic[i]).abs() / analytic[i].abs().max(1.0));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub name: String,
    pub points: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub points: usize,
    pub epsilon: f64,
    pub n_bins: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            points: 100,
            epsilon: 1e-6,
            n_bins: 10,
            seed: 42,
        }
    }
}

fn random_logits(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
}

fn random_distribution(rng: &mut impl Rng, n: usize) -> BinDistribution {
    let mut logits = random_logits(rng, n);
    // sprinkle exact zeros to exercise the 0 log 0 convention
    if rng.random_bool(0.3) {
        logits[rng.random_range(0..n)] = f64::NEG_INFINITY;
    }
    BinDistribution::new(softmax(&logits)).expect("softmax output is normalized")
}

/// Runs the finite-difference comparison for every differentiable objective.
///
/// Margin points within `1e-3` of the hinge kink are resampled.
pub fn default_suite(config: SuiteConfig) -> Result<Vec<GradCheckReport>> {
    let schema = make_schema(config.n_bins)?;
    let n = config.n_bins;
    let eps = config.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut reports = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..config.points {
        let target = random_distribution(&mut rng, n);
        let point = random_logits(&mut rng, n);
        worst = worst.max(grad_check(|l| kl_direct_loss(&target, l), &point, eps)?);
    }
    reports.push(GradCheckReport {
        name: "kl_direct_loss".into(),
        points: config.points,
        max_rel_error: worst,
    });

    let delta = 0.1;
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < config.points {
        let la = random_logits(&mut rng, n);
        let lb = random_logits(&mut rng, n);
        let sign = if rng.random_bool(0.5) {
            OrderSign::FirstHigher
        } else {
            OrderSign::SecondHigher
        };
        let m = margin_rank_loss(&la, &lb, sign, delta, &schema)?;
        let gap = sign.value() * (m.decoded_a - m.decoded_b);
        if (delta - gap).abs() <= 1e-3 {
            continue;
        }
        let mut point = la.clone();
        point.extend_from_slice(&lb);
        let f = |x: &[f64]| {
            let m = margin_rank_loss(&x[..n], &x[n..], sign, delta, &schema)?;
            let mut g = m.grad_a;
            g.extend(m.grad_b);
            Ok((m.loss, g))
        };
        worst = worst.max(grad_check(f, &point, eps)?);
        checked += 1;
    }
    reports.push(GradCheckReport {
        name: "margin_rank_loss".into(),
        points: config.points,
        max_rel_error: worst,
    });

    let mut worst = 0.0f64;
    for _ in 0..config.points {
        let point = random_logits(&mut rng, n);
        worst = worst.max(grad_check(
            |l| expected_decode_logits(l, &schema),
            &point,
            eps,
        )?);
    }
    reports.push(GradCheckReport {
        name: "expected_decode".into(),
        points: config.points,
        max_rel_error: worst,
    });

    let mut worst = 0.0f64;
    for _ in 0..config.points {
        let point = random_logits(&mut rng, n);
        let s: f64 = rng.random_range(0.0..=1.0);
        let f = |l: &[f64]| mse_loss_reference(l, s, &schema).map(|r| (r.loss, r.grad));
        worst = worst.max(grad_check(f, &point, eps)?);
    }
    reports.push(GradCheckReport {
        name: "mse_loss_reference".into(),
        points: config.points,
        max_rel_error: worst,
    });

    Ok(reports)
}
