//! Structured reasoning traces scored with a pluggable conditional-probability scorer.

mod bird;
mod maieutic;
mod scorer;

use serde::{Deserialize, Serialize};

pub use bird::{score_bird, BirdFactor, BirdTrace};
pub use maieutic::{
    maieutic_weights, solve_maieutic, Assignment, MaieuticEdge, MaieuticGraph, MaieuticNode,
    MaieuticSolution, MaieuticWeights, Polarity, MAX_EXACT_NODES, WEIGHT_CLAMP,
};
pub use scorer::{ConstantScorer, HeadScorer, ScoreRecord, Scorer, TableScorer};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trace {
    Maieutic(MaieuticGraph),
    Bird(BirdTrace),
}

impl Trace {
    pub fn id(&self) -> &str {
        match self {
            Trace::Maieutic(g) => &g.id,
            Trace::Bird(t) => &t.id,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Trace::Maieutic(g) => g.validate(),
            Trace::Bird(t) => t.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceAnswer {
    Maieutic {
        answer: bool,
        assignment: Vec<bool>,
        objective: f64,
    },
    Bird {
        /// Unique argmax outcome, `None` on a tie at the top.
        answer: Option<usize>,
        distribution: Vec<f64>,
    },
}

impl TraceAnswer {
    /// Whether the answer agrees with the trace's gold label, if it has one.
    pub fn matches(&self, trace: &Trace) -> Option<bool> {
        match (self, trace) {
            (TraceAnswer::Maieutic { answer, .. }, Trace::Maieutic(g)) => {
                g.gold.map(|gold| gold == *answer)
            }
            (TraceAnswer::Bird { answer, .. }, Trace::Bird(t)) => {
                t.gold.map(|gold| *answer == Some(gold))
            }
            _ => None,
        }
    }
}

pub fn answer_trace(trace: &Trace, scorer: &dyn Scorer) -> Result<TraceAnswer> {
    match trace {
        Trace::Maieutic(g) => {
            let solution = solve_maieutic(&maieutic_weights(g, scorer)?, g)?;
            Ok(TraceAnswer::Maieutic {
                answer: solution.answer,
                assignment: solution.assignment.values,
                objective: solution.assignment.objective,
            })
        }
        Trace::Bird(t) => {
            let distribution = score_bird(t, scorer)?;
            let best = distribution
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let top: Vec<usize> = (0..distribution.len())
                .filter(|&i| distribution[i] == best)
                .collect();
            Ok(TraceAnswer::Bird {
                answer: (top.len() == 1).then(|| top[0]),
                distribution,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAccuracy {
    pub accuracy: f64,
    pub evaluated: usize,
    pub correct: usize,
}

/// Accuracy over traces that carry a gold answer; ties count as wrong.
pub fn trace_accuracy(traces: &[Trace], scorer: &dyn Scorer) -> Result<TraceAccuracy> {
    let mut evaluated = 0;
    let mut correct = 0;
    for trace in traces {
        let answer = answer_trace(trace, scorer)?;
        if let Some(ok) = answer.matches(trace) {
            evaluated += 1;
            correct += usize::from(ok);
        }
    }
    if evaluated == 0 {
        return Err(crate::error::Error::EmptyInput(
            "no traces with gold answers".into(),
        ));
    }
    Ok(TraceAccuracy {
        accuracy: correct as f64 / evaluated as f64,
        evaluated,
        correct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bird(id: &str, gold: usize) -> Trace {
        Trace::Bird(BirdTrace {
            id: id.into(),
            context: format!("{id} ctx"),
            additional_sentence: None,
            factors: vec![BirdFactor {
                name: "f".into(),
                conditions: vec![format!("{id} c")],
            }],
            outcomes: vec![format!("{id} yes"), format!("{id} no")],
            gold: Some(gold),
        })
    }

    fn maieutic(id: &str, gold: bool) -> Trace {
        Trace::Maieutic(MaieuticGraph {
            id: id.into(),
            root: "q".into(),
            nodes: vec![MaieuticNode {
                id: "q".into(),
                statement: format!("{id} true"),
                negated: format!("{id} false"),
            }],
            edges: vec![],
            gold: Some(gold),
        })
    }

    /// Scores every trace so that its answer is "yes"/true.
    fn table(traces: &[Trace]) -> TableScorer {
        let mut t = TableScorer::default();
        for tr in traces {
            let id = tr.id();
            match tr {
                Trace::Bird(_) => {
                    t.insert(format!("{id} ctx"), format!("{id} c"), 1.0);
                    t.insert(format!("{id} c"), format!("{id} yes"), 0.8);
                    t.insert(format!("{id} c"), format!("{id} no"), 0.2);
                }
                Trace::Maieutic(_) => {
                    t.insert("", format!("{id} true"), 0.8);
                    t.insert("", format!("{id} false"), 0.2);
                }
            }
        }
        t
    }

    #[test]
    fn all_correct() {
        let traces = vec![bird("a", 0), maieutic("b", true)];
        let acc = trace_accuracy(&traces, &table(&traces)).unwrap();
        assert_eq!(acc.accuracy, 1.0);
    }

    #[test]
    fn all_flipped() {
        let traces = vec![bird("a", 1), maieutic("b", false)];
        assert_eq!(
            trace_accuracy(&traces, &table(&traces)).unwrap().accuracy,
            0.0
        );
    }

    #[test]
    fn three_of_four() {
        let traces = vec![
            bird("a", 0),
            bird("b", 1),
            maieutic("c", true),
            maieutic("d", true),
        ];
        let acc = trace_accuracy(&traces, &table(&traces)).unwrap();
        assert_eq!((acc.correct, acc.evaluated), (3, 4));
        assert_eq!(acc.accuracy, 0.75);
    }

    #[test]
    fn bird_tie_is_wrong() {
        let traces = vec![bird("a", 0)];
        let acc = trace_accuracy(&traces, &ConstantScorer(0.5)).unwrap();
        assert_eq!(acc.accuracy, 0.0);
    }
}
