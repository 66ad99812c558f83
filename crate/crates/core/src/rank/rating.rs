//! Two-player Gaussian skill updates with draws (TrueSkill moment matching).

use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::bins::std_normal_cdf;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillRating {
    pub mu: f64,
    pub sigma: f64,
}

impl SkillRating {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let r = SkillRating { mu, sigma };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Numeric(format!("invalid rating {self:?}")));
        }
        Ok(())
    }

    /// Ratio used as the Plackett-Luce score.
    pub fn signal(&self) -> f64 {
        self.mu / self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    AWins,
    BWins,
    Draw,
}

impl Outcome {
    pub fn is_decisive(self) -> bool {
        self != Outcome::Draw
    }
}

/// Which item a single prompt ordering preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    A,
    B,
    None,
}

/// Combines the two prompt orderings: a win needs both passes to agree.
pub fn resolve_orderings(first_pass: Preference, second_pass: Preference) -> Outcome {
    match (first_pass, second_pass) {
        (Preference::A, Preference::A) => Outcome::AWins,
        (Preference::B, Preference::B) => Outcome::BWins,
        _ => Outcome::Draw,
    }
}

/// Performance noise, draw margin and per-match variance inflation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateParams {
    pub beta: f64,
    pub draw_epsilon: f64,
    pub dynamics_tau: f64,
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Truncation corrections for a win: the performance gap is conditioned on `> epsilon`.
fn v_w_win(t: f64, eps: f64) -> (f64, f64) {
    let x = t - eps;
    let denom = std_normal_cdf(x);
    if denom < 1e-300 {
        return (-x, 1.0);
    }
    let v = std_normal_pdf(x) / denom;
    (v, v * (v + x))
}

/// Corrections for a draw: the gap is conditioned on `|gap| <= epsilon`.
fn v_w_draw(t: f64, eps: f64) -> (f64, f64) {
    let hi = eps - t;
    let lo = -eps - t;
    // mass on (lo, hi], taken on the side of zero that keeps precision
    let denom = if lo >= 0.0 {
        0.5 * (erfc(lo / std::f64::consts::SQRT_2) - erfc(hi / std::f64::consts::SQRT_2))
    } else {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    };
    if denom < 1e-300 {
        // Limit of a vanishing draw band: the gap collapses onto zero.
        return (-t, 1.0);
    }
    let v = (std_normal_pdf(lo) - std_normal_pdf(hi)) / denom;
    let w = v * v + (hi * std_normal_pdf(hi) - lo * std_normal_pdf(lo)) / denom;
    (v, w)
}

/// Posterior ratings of both players after one match.
pub fn update_ratings(
    a: SkillRating,
    b: SkillRating,
    outcome: Outcome,
    params: &UpdateParams,
) -> Result<(SkillRating, SkillRating)> {
    a.validate()?;
    b.validate()?;
    if !(params.beta > 0.0 && params.draw_epsilon >= 0.0 && params.dynamics_tau >= 0.0) {
        return Err(Error::Numeric(format!(
            "invalid update parameters {params:?}"
        )));
    }
    let tau2 = params.dynamics_tau * params.dynamics_tau;
    let var_a = a.sigma * a.sigma + tau2;
    let var_b = b.sigma * b.sigma + tau2;
    let c = (2.0 * params.beta * params.beta + var_a + var_b).sqrt();
    let eps = params.draw_epsilon / c;

    // `dir` is +1 when the update treats a as the favoured side.
    let (v, w, dir) = match outcome {
        Outcome::AWins => {
            let (v, w) = v_w_win((a.mu - b.mu) / c, eps);
            (v, w, 1.0)
        }
        Outcome::BWins => {
            let (v, w) = v_w_win((b.mu - a.mu) / c, eps);
            (v, w, -1.0)
        }
        Outcome::Draw => {
            let (v, w) = v_w_draw((a.mu - b.mu) / c, eps);
            (v, w, 1.0)
        }
    };
    let post = |mu: f64, var: f64, sign: f64| -> SkillRating {
        let factor = (1.0 - var / (c * c) * w).max(f64::MIN_POSITIVE);
        SkillRating {
            mu: mu + sign * var / c * v,
            sigma: (var * factor).sqrt(),
        }
    };
    let new_a = post(a.mu, var_a, dir);
    let new_b = post(b.mu, var_b, -dir);
    new_a.validate()?;
    new_b.validate()?;
    Ok((new_a, new_b))
}
