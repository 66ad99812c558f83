use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bins::{expected_decode, BinSchema};
use crate::error::{Error, Result};
use crate::head::{forward, Featurizer, HeadParams};

/// Conditional probability estimate `P(proposition | context)`.
///
/// Implementations must be deterministic per input pair.
pub trait Scorer: Send + Sync {
    fn name(&self) -> &'static str;
    fn score(&self, context: &str, proposition: &str) -> Result<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn score(&self, _context: &str, _proposition: &str) -> Result<f64> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub context: String,
    pub proposition: String,
    pub score: f64,
}

/// Fixed lookup table; an unknown pair is a scorer failure.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    table: HashMap<(String, String), f64>,
}

impl TableScorer {
    pub fn new(records: impl IntoIterator<Item = ScoreRecord>) -> Self {
        TableScorer {
            table: records
                .into_iter()
                .map(|r| ((r.context, r.proposition), r.score))
                .collect(),
        }
    }

    pub fn insert(
        &mut self,
        context: impl Into<String>,
        proposition: impl Into<String>,
        score: f64,
    ) {
        self.table
            .insert((context.into(), proposition.into()), score);
    }
}

impl Scorer for TableScorer {
    fn name(&self) -> &'static str {
        "table"
    }

    fn score(&self, context: &str, proposition: &str) -> Result<f64> {
        self.table
            .get(&(context.to_string(), proposition.to_string()))
            .copied()
            .ok_or_else(|| Error::Scorer {
                location: format!("({context:?}, {proposition:?})"),
                message: "pair missing from score table".into(),
            })
    }
}

/// Expected decode of a trained head over featurized text.
pub struct HeadScorer {
    head: HeadParams,
    schema: BinSchema,
    featurizer: Box<dyn Featurizer>,
}

impl HeadScorer {
    pub fn new(head: HeadParams, featurizer: Box<dyn Featurizer>) -> Result<Self> {
        head.validate()?;
        if featurizer.dim() != head.dim {
            return Err(Error::DimensionMismatch {
                expected: head.dim,
                got: featurizer.dim(),
            });
        }
        let schema = BinSchema::new(head.n_bins)?;
        Ok(HeadScorer {
            head,
            schema,
            featurizer,
        })
    }
}

impl Scorer for HeadScorer {
    fn name(&self) -> &'static str {
        "head"
    }

    fn score(&self, context: &str, proposition: &str) -> Result<f64> {
        let x = self.featurizer.featurize("", context, proposition)?;
        expected_decode(&forward(&self.head, &x)?, &self.schema)
    }
}

/// Scores and checks the result is a probability.
pub(crate) fn checked_score(
    scorer: &dyn Scorer,
    location: impl Fn() -> String,
    context: &str,
    proposition: &str,
) -> Result<f64> {
    let wrap = |message: String| Error::Scorer {
        location: location(),
        message,
    };
    let s = scorer.score(context, proposition).map_err(|e| match e {
        Error::Scorer { message, .. } => wrap(message),
        other => wrap(other.to_string()),
    })?;
    if !(0.0..=1.0).contains(&s) {
        return Err(wrap(format!("score {s} outside [0, 1]")));
    }
    Ok(s)
}
