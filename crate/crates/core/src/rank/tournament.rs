//! Pairwise tournament: coarse binning, pair scheduling, rating aggregation
//! and the Plackett-Luce score map.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rating::{
    resolve_orderings, update_ratings, Outcome, Preference, SkillRating, UpdateParams,
};
use crate::error::{Error, Result};
use crate::head::softmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TournamentConfig {
    pub beta: f64,
    pub draw_epsilon: f64,
    pub dynamics_tau: f64,
    pub init_mu_range: (f64, f64),
    pub init_sigma: f64,
    pub stop_sigma: f64,
    pub coarse_bins: usize,
    pub seed: u64,
    /// `None` means `ceil(20 n log2 n)`.
    pub max_comparisons: Option<usize>,
    pub scheduler: String,
    pub temperature: f64,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        let init_sigma = 3.0;
        let beta = init_sigma / 2.0;
        TournamentConfig {
            beta,
            draw_epsilon: 0.1 * beta,
            dynamics_tau: 0.0,
            init_mu_range: (0.0, 0.0),
            init_sigma,
            stop_sigma: 0.3,
            coarse_bins: 5,
            seed: 42,
            max_comparisons: None,
            scheduler: "uncertainty".into(),
            temperature: 1.0,
        }
    }
}

impl TournamentConfig {
    /// Single bin, uniformly random pairs, means drawn from `[0, 1]`.
    pub fn single_bin_random() -> Self {
        TournamentConfig {
            init_mu_range: (0.0, 1.0),
            coarse_bins: 1,
            scheduler: "random".into(),
            ..TournamentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.draw_epsilon >= 0.0 && self.draw_epsilon.is_finite()) {
            return bad(format!(
                "draw_epsilon must be non-negative, got {}",
                self.draw_epsilon
            ));
        }
        if !(self.dynamics_tau >= 0.0 && self.dynamics_tau.is_finite()) {
            return bad(format!(
                "dynamics_tau must be non-negative, got {}",
                self.dynamics_tau
            ));
        }
        let (lo, hi) = self.init_mu_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!(
                "init_mu_range must be a finite interval, got {:?}",
                self.init_mu_range
            ));
        }
        if !(self.stop_sigma > 0.0
            && self.stop_sigma < self.init_sigma
            && self.init_sigma.is_finite())
        {
            return bad(format!(
                "need 0 < stop_sigma < init_sigma, got {} and {}",
                self.stop_sigma, self.init_sigma
            ));
        }
        if self.coarse_bins == 0 {
            return bad("coarse_bins must be at least 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!(
                "temperature must be positive, got {}",
                self.temperature
            ));
        }
        Ok(())
    }

    pub fn update_params(&self) -> UpdateParams {
        UpdateParams {
            beta: self.beta,
            draw_epsilon: self.draw_epsilon,
            dynamics_tau: self.dynamics_tau,
        }
    }

    pub fn comparison_budget(&self, n_items: usize) -> usize {
        self.max_comparisons
            .unwrap_or_else(|| default_budget(n_items))
    }
}

/// `ceil(20 n log2 n)`.
pub fn default_budget(n_items: usize) -> usize {
    if n_items < 2 {
        return 0;
    }
    let n = n_items as f64;
    (20.0 * n * n.log2()).ceil() as usize
}

/// Equal-width bins over `[0, 1]`, right-closed at the top.
pub fn assign_coarse_bins(direct_scores: &[f64], m: usize) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::Config("need at least one coarse bin".into()));
    }
    direct_scores
        .iter()
        .map(|&s| {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Domain(format!("direct score {s} outside [0, 1]")));
            }
            Ok(((s * m as f64).floor() as usize).min(m - 1))
        })
        .collect()
}

/// Softmax of `(mu / sigma) / temperature` across a group of ratings.
pub fn plackett_luce_map(ratings: &[SkillRating], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if let Some(r) = ratings.iter().find(|r| !(r.sigma > 0.0)) {
        return Err(Error::Domain(format!(
            "rating sigma must be positive, got {}",
            r.sigma
        )));
    }
    let z: Vec<f64> = ratings.iter().map(|r| r.signal() / temperature).collect();
    Ok(softmax(&z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentItem {
    pub id: String,
    pub direct_score: f64,
}

/// Decides a match between two items by id.
pub trait Comparator {
    fn name(&self) -> &'static str;
    fn compare(&self, a_id: &str, b_id: &str) -> Result<Outcome>;
}

/// Noise-free comparator backed by hidden scores; equal scores draw.
#[derive(Debug, Clone)]
pub struct HiddenScoreComparator {
    scores: HashMap<String, f64>,
}

impl HiddenScoreComparator {
    pub fn new(scores: HashMap<String, f64>) -> Self {
        HiddenScoreComparator { scores }
    }
}

impl Comparator for HiddenScoreComparator {
    fn name(&self) -> &'static str {
        "hidden-score"
    }

    fn compare(&self, a_id: &str, b_id: &str) -> Result<Outcome> {
        let score = |id: &str| {
            self.scores.get(id).copied().ok_or_else(|| Error::Scorer {
                location: format!("comparator item `{id}`"),
                message: "no hidden score".into(),
            })
        };
        let (a, b) = (score(a_id)?, score(b_id)?);
        Ok(if a > b {
            Outcome::AWins
        } else if b > a {
            Outcome::BWins
        } else {
            Outcome::Draw
        })
    }
}

/// Which prompt slot a recorded judgement preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotPreference {
    First,
    Second,
    None,
}

/// One recorded judgement for an ordered presentation `(first, second)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub first: String,
    pub second: String,
    pub preference: SlotPreference,
}

/// Replays recorded judgements for both orderings; a missing ordering counts as no preference.
#[derive(Debug, Clone, Default)]
pub struct TableComparator {
    table: HashMap<(String, String), SlotPreference>,
}

impl TableComparator {
    pub fn new(records: impl IntoIterator<Item = ComparisonRecord>) -> Self {
        TableComparator {
            table: records
                .into_iter()
                .map(|r| ((r.first, r.second), r.preference))
                .collect(),
        }
    }

    fn slot(&self, first: &str, second: &str) -> SlotPreference {
        self.table
            .get(&(first.to_string(), second.to_string()))
            .copied()
            .unwrap_or(SlotPreference::None)
    }
}

impl Comparator for TableComparator {
    fn name(&self) -> &'static str {
        "table"
    }

    fn compare(&self, a_id: &str, b_id: &str) -> Result<Outcome> {
        let first_pass = match self.slot(a_id, b_id) {
            SlotPreference::First => Preference::A,
            SlotPreference::Second => Preference::B,
            SlotPreference::None => Preference::None,
        };
        let second_pass = match self.slot(b_id, a_id) {
            SlotPreference::First => Preference::B,
            SlotPreference::Second => Preference::A,
            SlotPreference::None => Preference::None,
        };
        Ok(resolve_orderings(first_pass, second_pass))
    }
}

/// State visible to a pair scheduler.
pub struct SchedulerView<'a> {
    pub ratings: &'a [SkillRating],
    /// Members of every coarse bin holding at least two items.
    pub groups: &'a [Vec<usize>],
    pub group_of: &'a [Option<usize>],
    pub stop_sigma: f64,
}

/// Chooses the next same-bin pair to compare.
pub trait PairScheduler {
    fn name(&self) -> &'static str;
    fn next_pair(
        &mut self,
        view: &SchedulerView<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Option<(usize, usize)>;
}

/// Uniformly random pair among all same-bin pairs.
#[derive(Debug, Default)]
pub struct RandomScheduler;

impl PairScheduler for RandomScheduler {
    fn name(&self) -> &'static str {
        "random"
    }

    fn next_pair(
        &mut self,
        view: &SchedulerView<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Option<(usize, usize)> {
        let counts: Vec<usize> = view
            .groups
            .iter()
            .map(|g| g.len() * (g.len() - 1) / 2)
            .collect();
        let total: usize = counts.iter().sum();
        if total == 0 {
            return None;
        }
        let mut k = rng.random_range(0..total);
        let gi = counts
            .iter()
            .position(|&c| {
                if k < c {
                    true
                } else {
                    k -= c;
                    false
                }
            })
            .expect("index within total");
        let group = &view.groups[gi];
        let i = rng.random_range(0..group.len());
        let mut j = rng.random_range(0..group.len() - 1);
        if j >= i {
            j += 1;
        }
        Some((group[i], group[j]))
    }
}

/// Most uncertain item first, paired with a random member of its bin.
#[derive(Debug, Default)]
pub struct UncertaintyScheduler;

impl PairScheduler for UncertaintyScheduler {
    fn name(&self) -> &'static str {
        "uncertainty"
    }

    fn next_pair(
        &mut self,
        view: &SchedulerView<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Option<(usize, usize)> {
        let mut best: Option<usize> = None;
        for (i, r) in view.ratings.iter().enumerate() {
            if view.group_of[i].is_none() {
                continue;
            }
            if best.is_none_or(|b| r.sigma > view.ratings[b].sigma) {
                best = Some(i);
            }
        }
        let i = best?;
        let group = &view.groups[view.group_of[i]?];
        let mut j = group[rng.random_range(0..group.len() - 1)];
        if j == i {
            j = group[group.len() - 1];
        }
        Some((i, j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub a: usize,
    pub b: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedItem {
    pub id: String,
    pub bin: usize,
    pub rating: SkillRating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TournamentResult {
    pub items: Vec<RatedItem>,
    pub log: Vec<LogEntry>,
    /// Every item with a same-bin partner ended at or below `stop_sigma`.
    pub converged: bool,
    /// At least one comparison was made and none was decisive.
    pub uninformative: bool,
}

impl TournamentResult {
    pub fn ratings(&self) -> Vec<SkillRating> {
        self.items.iter().map(|i| i.rating).collect()
    }

    /// Plackett-Luce scores computed separately inside each coarse bin.
    pub fn mapped_scores(&self, temperature: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.items.len()];
        let mut by_bin: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, item) in self.items.iter().enumerate() {
            by_bin.entry(item.bin).or_default().push(i);
        }
        for members in by_bin.values() {
            let group: Vec<SkillRating> = members.iter().map(|&i| self.items[i].rating).collect();
            for (&i, s) in members.iter().zip(plackett_luce_map(&group, temperature)?) {
                out[i] = s;
            }
        }
        Ok(out)
    }
}

fn initial_ratings(n: usize, config: &TournamentConfig) -> Vec<SkillRating> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.init_mu_range;
    (0..n)
        .map(|_| SkillRating {
            mu: if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            },
            sigma: config.init_sigma,
        })
        .collect()
}

/// Runs the tournament until every comparable item is certain enough or the budget is spent.
pub fn run_tournament(
    items: &[TournamentItem],
    comparator: &dyn Comparator,
    scheduler: &mut dyn PairScheduler,
    config: &TournamentConfig,
) -> Result<TournamentResult> {
    config.validate()?;
    let scores: Vec<f64> = items.iter().map(|i| i.direct_score).collect();
    let bins = assign_coarse_bins(&scores, config.coarse_bins)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); config.coarse_bins];
    for (i, &b) in bins.iter().enumerate() {
        members[b].push(i);
    }
    let groups: Vec<Vec<usize>> = members.into_iter().filter(|g| g.len() >= 2).collect();
    let mut group_of = vec![None; items.len()];
    for (gi, g) in groups.iter().enumerate() {
        for &i in g {
            group_of[i] = Some(gi);
        }
    }

    let params = config.update_params();
    let mut ratings = initial_ratings(items.len(), config);
    // separate stream so a replay can rebuild the initial ratings without the scheduler
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5c4e_d01e);
    let budget = config.comparison_budget(items.len());
    let mut log = Vec::new();
    let done = |ratings: &[SkillRating]| {
        ratings
            .iter()
            .zip(&group_of)
            .all(|(r, g)| g.is_none() || r.sigma <= config.stop_sigma)
    };

    while log.len() < budget && !done(&ratings) {
        let view = SchedulerView {
            ratings: &ratings,
            groups: &groups,
            group_of: &group_of,
            stop_sigma: config.stop_sigma,
        };
        let Some((a, b)) = scheduler.next_pair(&view, &mut rng) else {
            break;
        };
        let outcome = comparator.compare(&items[a].id, &items[b].id)?;
        let (ra, rb) = update_ratings(ratings[a], ratings[b], outcome, &params)?;
        ratings[a] = ra;
        ratings[b] = rb;
        log.push(LogEntry {
            step: log.len(),
            a,
            b,
            outcome,
        });
    }

    let converged = done(&ratings);
    let uninformative = !log.is_empty() && !log.iter().any(|e| e.outcome.is_decisive());
    Ok(TournamentResult {
        items: items
            .iter()
            .zip(bins)
            .zip(ratings)
            .map(|((item, bin), rating)| RatedItem {
                id: item.id.clone(),
                bin,
                rating,
            })
            .collect(),
        log,
        converged,
        uninformative,
    })
}

/// Rebuilds final ratings from the initial state and a comparison log.
pub fn replay(
    n_items: usize,
    log: &[LogEntry],
    config: &TournamentConfig,
) -> Result<Vec<SkillRating>> {
    config.validate()?;
    let params = config.update_params();
    let mut ratings = initial_ratings(n_items, config);
    for e in log {
        if e.a >= n_items || e.b >= n_items || e.a == e.b {
            return Err(Error::Domain(format!(
                "log step {} names invalid items",
                e.step
            )));
        }
        let (ra, rb) = update_ratings(ratings[e.a], ratings[e.b], e.outcome, &params)?;
        ratings[e.a] = ra;
        ratings[e.b] = rb;
    }
    Ok(ratings)
}
