//! Combined objective and the deterministic gradient-descent loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bins::{BinDistribution, BinSchema};
use crate::error::{Error, Result};
use crate::head::{FeatureVector, HeadParams};
use crate::loss::{kl_direct_loss, margin_rank_loss, OrderSign};

/// Integer duplication counts applied per source before batching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpsampleFactors {
    pub human: u32,
    pub synthetic: u32,
    pub pairwise: u32,
}

impl Default for UpsampleFactors {
    fn default() -> Self {
        UpsampleFactors {
            human: 1,
            synthetic: 1,
            pairwise: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub margin_delta: f64,
    pub sigma: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub steps: usize,
    /// Examples per source per step; 0 means full batch.
    pub batch_size: usize,
    pub init_scale: f64,
    pub seed: u64,
    pub upsample: UpsampleFactors,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta1: 1.0,
            beta2: 10.0,
            margin_delta: 0.1,
            sigma: 0.05,
            learning_rate: 0.5,
            momentum: 0.9,
            steps: 500,
            batch_size: 0,
            init_scale: 0.01,
            seed: 42,
            upsample: UpsampleFactors::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.beta1 >= 0.0 && self.beta1.is_finite()) {
            return bad(format!("beta1 must be non-negative, got {}", self.beta1));
        }
        if !(self.beta2 >= 0.0 && self.beta2.is_finite()) {
            return bad(format!("beta2 must be non-negative, got {}", self.beta2));
        }
        if !(self.margin_delta > 0.0 && self.margin_delta < 1.0) {
            return bad(format!(
                "margin_delta must lie in (0, 1), got {}",
                self.margin_delta
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad(format!(
                "init_scale must be non-negative, got {}",
                self.init_scale
            ));
        }
        let u = self.upsample;
        if u.human == 0 || u.synthetic == 0 || u.pairwise == 0 {
            return bad("upsample factors must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectExample {
    pub features: FeatureVector,
    pub target: BinDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub a: FeatureVector,
    pub b: FeatureVector,
    pub sign: OrderSign,
}

/// The three supervision sources.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub human: Vec<DirectExample>,
    pub synthetic: Vec<DirectExample>,
    pub pairwise: Vec<PairExample>,
}

impl TrainingSet {
    pub fn is_empty(&self) -> bool {
        self.human.is_empty() && self.synthetic.is_empty() && self.pairwise.is_empty()
    }

    fn dim(&self) -> Option<usize> {
        self.human
            .first()
            .or(self.synthetic.first())
            .map(|e| e.features.dim())
            .or_else(|| self.pairwise.first().map(|p| p.a.dim()))
    }

    fn upsampled(&self, f: UpsampleFactors) -> TrainingSet {
        fn repeat<T: Clone>(xs: &[T], k: u32) -> Vec<T> {
            (0..k).flat_map(|_| xs.iter().cloned()).collect()
        }
        TrainingSet {
            human: repeat(&self.human, f.human),
            synthetic: repeat(&self.synthetic, f.synthetic),
            pairwise: repeat(&self.pairwise, f.pairwise),
        }
    }
}

/// Per-term means and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub direct_human: f64,
    pub direct_synthetic: f64,
    pub rank: f64,
}

impl LossReport {
    fn new(direct_human: f64, direct_synthetic: f64, rank: f64, beta1: f64, beta2: f64) -> Self {
        LossReport {
            total: direct_human + beta1 * direct_synthetic + beta2 * rank,
            direct_human,
            direct_synthetic,
            rank,
        }
    }
}

fn direct_term(
    batch: &[&DirectExample],
    head: &HeadParams,
    grad: Option<(&mut HeadParams, f64)>,
) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut grad = grad;
    for ex in batch {
        let logits = head.logits(&ex.features)?;
        let (loss, g) = kl_direct_loss(&ex.target, &logits)?;
        total += loss;
        if let Some((acc, weight)) = grad.as_mut() {
            HeadParams::accumulate_grad(acc, &ex.features, &g, *weight / n);
        }
    }
    Ok(total / n)
}

fn rank_term(
    batch: &[&PairExample],
    head: &HeadParams,
    delta: f64,
    schema: &BinSchema,
    grad: Option<(&mut HeadParams, f64)>,
) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut grad = grad;
    for pair in batch {
        let la = head.logits(&pair.a)?;
        let lb = head.logits(&pair.b)?;
        let m = margin_rank_loss(&la, &lb, pair.sign, delta, schema)?;
        total += m.loss;
        if m.loss > 0.0 {
            if let Some((acc, weight)) = grad.as_mut() {
                HeadParams::accumulate_grad(acc, &pair.a, &m.grad_a, *weight / n);
                HeadParams::accumulate_grad(acc, &pair.b, &m.grad_b, *weight / n);
            }
        }
    }
    Ok(total / n)
}

struct Batch<'a> {
    human: Vec<&'a DirectExample>,
    synthetic: Vec<&'a DirectExample>,
    pairwise: Vec<&'a PairExample>,
}

impl<'a> Batch<'a> {
    fn full(set: &'a TrainingSet) -> Self {
        Batch {
            human: set.human.iter().collect(),
            synthetic: set.synthetic.iter().collect(),
            pairwise: set.pairwise.iter().collect(),
        }
    }
}

/// Evaluates the objective; when `grad` is given, accumulates its parameter gradient.
/// A term whose weight is zero is neither evaluated nor differentiated.
fn objective(
    batch: &Batch<'_>,
    head: &HeadParams,
    config: &TrainConfig,
    schema: &BinSchema,
    mut grad: Option<&mut HeadParams>,
) -> Result<LossReport> {
    let human = direct_term(&batch.human, head, grad.as_deref_mut().map(|g| (g, 1.0)))?;
    let synthetic = if config.beta1 > 0.0 {
        direct_term(
            &batch.synthetic,
            head,
            grad.as_deref_mut().map(|g| (g, config.beta1)),
        )?
    } else {
        0.0
    };
    let rank = if config.beta2 > 0.0 {
        rank_term(
            &batch.pairwise,
            head,
            config.margin_delta,
            schema,
            grad.map(|g| (g, config.beta2)),
        )?
    } else {
        0.0
    };
    Ok(LossReport::new(
        human,
        synthetic,
        rank,
        config.beta1,
        config.beta2,
    ))
}

/// `L = L_direct(human) + beta1 L_direct(synthetic) + beta2 L_rank(pairwise)`,
/// each term a mean over its own batch and zero when that batch is empty.
pub fn combined_loss(
    human: &[DirectExample],
    synthetic: &[DirectExample],
    pairwise: &[PairExample],
    head: &HeadParams,
    config: &TrainConfig,
    schema: &BinSchema,
) -> Result<LossReport> {
    if human.is_empty() && synthetic.is_empty() && pairwise.is_empty() {
        return Err(Error::EmptyBatch);
    }
    head.check_schema(schema)?;
    let batch = Batch {
        human: human.iter().collect(),
        synthetic: synthetic.iter().collect(),
        pairwise: pairwise.iter().collect(),
    };
    let h = direct_term(&batch.human, head, None)?;
    let s = direct_term(&batch.synthetic, head, None)?;
    let r = rank_term(&batch.pairwise, head, config.margin_delta, schema, None)?;
    Ok(LossReport::new(h, s, r, config.beta1, config.beta2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub head: HeadParams,
    /// Loss at the parameters before each step.
    pub history: Vec<LossReport>,
}

/// Cycles through a seeded permutation of `0..len`, `size` indices at a time.
struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
}

impl BatchCursor {
    fn new(len: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        BatchCursor { order, pos: 0 }
    }

    fn take<'a, T>(&mut self, items: &'a [T], size: usize) -> Vec<&'a T> {
        if items.is_empty() {
            return Vec::new();
        }
        let size = size.min(items.len());
        let out = (0..size)
            .map(|k| &items[self.order[(self.pos + k) % items.len()]])
            .collect();
        self.pos = (self.pos + size) % items.len();
        out
    }
}

/// Trains a fresh head on `data`.
///
/// Deterministic given `config.seed`; each source is shuffled with its own
/// stream so adding or removing one source never perturbs another's order.
pub fn train(data: &TrainingSet, config: &TrainConfig, schema: &BinSchema) -> Result<TrainOutcome> {
    config.validate()?;
    let dim = data.dim().ok_or(Error::EmptyBatch)?;
    if (config.beta1 == 0.0 || data.synthetic.is_empty())
        && (config.beta2 == 0.0 || data.pairwise.is_empty())
        && data.human.is_empty()
    {
        return Err(Error::EmptyBatch);
    }
    for ex in data.human.iter().chain(&data.synthetic) {
        if ex.target.len() != schema.n_bins() {
            return Err(Error::SchemaMismatch {
                expected: schema.n_bins(),
                got: ex.target.len(),
            });
        }
    }
    let data = data.upsampled(config.upsample);
    let n_bins = schema.n_bins();
    let mut head = HeadParams::random(dim, n_bins, config.init_scale, config.seed);
    let mut velocity = HeadParams::zeros(dim, n_bins);
    let mut history = Vec::with_capacity(config.steps);

    let mut cursors = [
        BatchCursor::new(data.human.len(), config.seed ^ 0x68),
        BatchCursor::new(data.synthetic.len(), config.seed ^ 0x73),
        BatchCursor::new(data.pairwise.len(), config.seed ^ 0x70),
    ];
    let full = Batch::full(&data);

    for step in 0..config.steps {
        let minibatch;
        let batch = if config.batch_size == 0 {
            &full
        } else {
            let [h, s, p] = &mut cursors;
            minibatch = Batch {
                human: h.take(&data.human, config.batch_size),
                synthetic: s.take(&data.synthetic, config.batch_size),
                pairwise: p.take(&data.pairwise, config.batch_size),
            };
            &minibatch
        };
        let mut grad = HeadParams::zeros(dim, n_bins);
        let report = match objective(batch, &head, config, schema, Some(&mut grad)) {
            Ok(r) => r,
            Err(Error::Numeric(_)) => {
                return Err(Error::Divergence {
                    step,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        if !report.total.is_finite() {
            return Err(Error::Divergence {
                step,
                loss: report.total,
            });
        }
        history.push(report);
        for ((w, v), g) in head
            .weights
            .iter_mut()
            .chain(head.bias.iter_mut())
            .zip(velocity.weights.iter_mut().chain(velocity.bias.iter_mut()))
            .zip(grad.weights.iter().chain(&grad.bias))
        {
            *v = config.momentum * *v + g;
            *w -= config.learning_rate * *v;
        }
    }
    Ok(TrainOutcome { head, history })
}
