//! Explanation graphs solved for their most consistent truth assignment.
//!
//! Each node carries a belief for both truth values; each edge carries a
//! consistency score `P(child' | parent)` where `child'` is the child's
//! statement for a supporting edge and its negation for a refuting one. An
//! edge is satisfied unless its parent is true while the child takes the
//! value the edge argues against. The objective is
//!
//! ```text
//! sum_nodes ln belief(node, value) + sum_edges ln(satisfied ? c : 1 - c)
//! ```
//!
//! with every weight clamped to `[1e-6, 1 - 1e-6]`, maximized exactly by
//! enumeration.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::scorer::{checked_score, Scorer};
use crate::error::{Error, Result};

pub const MAX_EXACT_NODES: usize = 24;
pub const WEIGHT_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaieuticNode {
    pub id: String,
    pub statement: String,
    pub negated: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Supports,
    Refutes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaieuticEdge {
    pub parent: String,
    pub child: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaieuticGraph {
    pub id: String,
    pub root: String,
    pub nodes: Vec<MaieuticNode>,
    #[serde(default)]
    pub edges: Vec<MaieuticEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<bool>,
}

/// Node indices resolved from a validated graph.
#[derive(Debug, Clone)]
pub(crate) struct Resolved {
    pub root: usize,
    pub edges: Vec<(usize, usize, Polarity)>,
}

impl MaieuticGraph {
    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    pub(crate) fn resolve(&self) -> Result<Resolved> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::InvalidGraph(format!("`{}` has no nodes", self.id)));
        }
        if n > MAX_EXACT_NODES {
            return Err(Error::GraphTooLarge {
                nodes: n,
                max: MAX_EXACT_NODES,
            });
        }
        let mut index = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if index.insert(node.id.as_str(), i).is_some() {
                return Err(Error::InvalidGraph(format!(
                    "`{}`: duplicate node `{}`",
                    self.id, node.id
                )));
            }
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::InvalidGraph(format!("`{}`: unknown node `{id}`", self.id)))
        };
        let root = lookup(&self.root)?;
        let mut edges = Vec::with_capacity(self.edges.len());
        let mut children = vec![Vec::new(); n];
        for e in &self.edges {
            let (p, c) = (lookup(&e.parent)?, lookup(&e.child)?);
            children[p].push(c);
            edges.push((p, c, e.polarity));
        }
        // iterative three-colour DFS for cycles
        let mut state = vec![0u8; n];
        for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            state[start] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if let Some(&child) = children[node].get(*next) {
                    *next += 1;
                    match state[child] {
                        0 => {
                            state[child] = 1;
                            stack.push((child, 0));
                        }
                        1 => {
                            return Err(Error::InvalidGraph(format!(
                                "`{}`: cycle through `{}`",
                                self.id, self.nodes[child].id
                            )))
                        }
                        _ => {}
                    }
                } else {
                    state[node] = 2;
                    stack.pop();
                }
            }
        }
        Ok(Resolved { root, edges })
    }
}

/// Raw scorer outputs for every node and edge, in graph order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaieuticWeights {
    pub belief_true: Vec<f64>,
    pub belief_false: Vec<f64>,
    pub consistency: Vec<f64>,
}

pub fn maieutic_weights(graph: &MaieuticGraph, scorer: &dyn Scorer) -> Result<MaieuticWeights> {
    graph.validate()?;
    let mut belief_true = Vec::with_capacity(graph.nodes.len());
    let mut belief_false = Vec::with_capacity(graph.nodes.len());
    for node in &graph.nodes {
        let at = || format!("graph `{}` node `{}`", graph.id, node.id);
        belief_true.push(checked_score(scorer, at, "", &node.statement)?);
        belief_false.push(checked_score(scorer, at, "", &node.negated)?);
    }
    let by_id: HashMap<&str, &MaieuticNode> =
        graph.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
    let mut consistency = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        let parent = by_id[e.parent.as_str()];
        let child = by_id[e.child.as_str()];
        let proposition = match e.polarity {
            Polarity::Supports => &child.statement,
            Polarity::Refutes => &child.negated,
        };
        let at = || format!("graph `{}` edge `{}` -> `{}`", graph.id, e.parent, e.child);
        consistency.push(checked_score(scorer, at, &parent.statement, proposition)?);
    }
    Ok(MaieuticWeights {
        belief_true,
        belief_false,
        consistency,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub values: Vec<bool>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaieuticSolution {
    pub assignment: Assignment,
    pub answer: bool,
}

fn clamped_ln(w: f64) -> f64 {
    w.clamp(WEIGHT_CLAMP, 1.0 - WEIGHT_CLAMP).ln()
}

/// Exact argmax of the weighted-satisfaction objective.
///
/// Ties prefer `root = true`, then the lexicographically first assignment
/// over the remaining nodes in graph order with `true` before `false`.
pub fn solve_maieutic(
    weights: &MaieuticWeights,
    graph: &MaieuticGraph,
) -> Result<MaieuticSolution> {
    let resolved = graph.resolve()?;
    let n = graph.nodes.len();
    if weights.belief_true.len() != n || weights.belief_false.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: weights.belief_true.len().min(weights.belief_false.len()),
        });
    }
    if weights.consistency.len() != resolved.edges.len() {
        return Err(Error::DimensionMismatch {
            expected: resolved.edges.len(),
            got: weights.consistency.len(),
        });
    }
    let ln_true: Vec<f64> = weights.belief_true.iter().map(|&w| clamped_ln(w)).collect();
    let ln_false: Vec<f64> = weights
        .belief_false
        .iter()
        .map(|&w| clamped_ln(w))
        .collect();
    let ln_sat: Vec<f64> = weights.consistency.iter().map(|&c| clamped_ln(c)).collect();
    let ln_unsat: Vec<f64> = weights
        .consistency
        .iter()
        .map(|&c| clamped_ln(1.0 - c))
        .collect();

    // position 0 is the root, then the other nodes in graph order
    let order: Vec<usize> = std::iter::once(resolved.root)
        .chain((0..n).filter(|&i| i != resolved.root))
        .collect();

    let mut values = vec![false; n];
    let mut best: Option<(f64, Vec<bool>)> = None;
    for mask in 0u32..(1u32 << n) {
        // the most significant bit drives position 0; a clear bit means true
        for (pos, &node) in order.iter().enumerate() {
            values[node] = mask & (1 << (n - 1 - pos)) == 0;
        }
        let mut objective = 0.0;
        for i in 0..n {
            objective += if values[i] { ln_true[i] } else { ln_false[i] };
        }
        for (k, &(p, c, polarity)) in resolved.edges.iter().enumerate() {
            let wanted = polarity == Polarity::Supports;
            let satisfied = !values[p] || values[c] == wanted;
            objective += if satisfied { ln_sat[k] } else { ln_unsat[k] };
        }
        if best.as_ref().is_none_or(|(b, _)| objective > *b) {
            best = Some((objective, values.clone()));
        }
    }
    let (objective, values) = best.expect("at least one assignment");
    let answer = values[resolved.root];
    Ok(MaieuticSolution {
        assignment: Assignment { values, objective },
        answer,
    })
}
