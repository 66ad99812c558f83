//! JSONL record formats, strict loaders and deterministic writers.
//!
//! Every file holds one JSON object per line. Writers may emit a leading
//! `{"header": {...}}` line carrying the command and resolved configuration;
//! loaders skip it when it is the first line. Blank lines are ignored.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bins::BinDistribution;
use crate::error::{Error, Result};
use crate::head::{FeatureVector, HeadParams};
use crate::loss::OrderSign;
use crate::rank::{ComparisonRecord, Outcome, TournamentItem};
use crate::structural::{ScoreRecord, Trace, TraceAnswer};

/// A loadable line type: optional unique key plus semantic checks beyond the schema.
pub trait Record: Serialize + DeserializeOwned {
    fn key(&self) -> Option<String> {
        None
    }

    fn check(&self) -> std::result::Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Human,
    Synthetic,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Scalar(f64),
    Distribution(BinDistribution),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub id: String,
    pub context: String,
    pub proposition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    pub source: Source,
}

impl Record for Instance {
    fn key(&self) -> Option<String> {
        Some(self.id.clone())
    }

    fn check(&self) -> std::result::Result<(), String> {
        match self.target {
            Some(Target::Scalar(y)) if !(0.0..=1.0).contains(&y) => {
                Err(format!("target {y} outside [0, 1] for `{}`", self.id))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairwiseRecord {
    pub a: String,
    pub b: String,
    pub label: OrderSign,
}

impl Record for PairwiseRecord {
    fn check(&self) -> std::result::Result<(), String> {
        if self.a == self.b {
            return Err(format!("pair compares `{}` with itself", self.a));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutRecord {
    pub instance_id: String,
    pub model_name: String,
    pub estimate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl Record for RolloutRecord {
    fn key(&self) -> Option<String> {
        Some(format!("{}/{}", self.instance_id, self.model_name))
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.estimate) {
            return Err(format!("estimate {} outside [0, 1]", self.estimate));
        }
        match self.confidence {
            Some(c) if !(0.0..=1.0).contains(&c) => Err(format!("confidence {c} outside [0, 1]")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub id: String,
    pub values: Vec<f64>,
}

impl FeatureRecord {
    pub fn to_vector(&self) -> Result<FeatureVector> {
        FeatureVector::new(self.values.clone())
    }
}

impl Record for FeatureRecord {
    fn key(&self) -> Option<String> {
        Some(self.id.clone())
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(format!("non-finite feature for `{}`", self.id));
        }
        Ok(())
    }
}

impl Record for ScoreRecord {
    fn key(&self) -> Option<String> {
        Some(format!("{:?} -> {:?}", self.context, self.proposition))
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        Ok(())
    }
}

impl Record for ComparisonRecord {
    fn key(&self) -> Option<String> {
        Some(format!("{} vs {}", self.first, self.second))
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.first == self.second {
            return Err(format!("comparison of `{}` with itself", self.first));
        }
        Ok(())
    }
}

impl Record for Trace {
    fn key(&self) -> Option<String> {
        Some(self.id().to_string())
    }

    fn check(&self) -> std::result::Result<(), String> {
        self.validate().map_err(|e| e.to_string())
    }
}

impl Record for TournamentItem {
    fn key(&self) -> Option<String> {
        Some(self.id.clone())
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !self.direct_score.is_finite() {
            return Err(format!("non-finite direct score for `{}`", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub step: usize,
    pub a_id: String,
    pub b_id: String,
    pub outcome: Outcome,
}

impl Record for LogRecord {
    fn key(&self) -> Option<String> {
        Some(self.step.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRecord {
    pub id: String,
    pub coarse_bin: usize,
    pub mu: f64,
    pub sigma: f64,
    pub mapped_score: f64,
}

impl Record for RatingRecord {
    fn key(&self) -> Option<String> {
        Some(self.id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    pub coarse_bin: usize,
    pub coarse_value: f64,
    pub fine: f64,
    pub probs: BinDistribution,
}

impl Record for PredictionRecord {
    fn key(&self) -> Option<String> {
        Some(self.id.clone())
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.fine) {
            return Err(format!("fine prediction {} outside [0, 1]", self.fine));
        }
        if self.coarse_bin >= self.probs.len() {
            return Err(format!("coarse bin {} out of range", self.coarse_bin));
        }
        Ok(())
    }
}

/// Fusion output for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusedRecord {
    pub instance_id: String,
    pub discrepancy: f64,
    /// Above the agreement threshold, so recorded judge confidences were used.
    pub flagged: bool,
    pub weights: Vec<f64>,
    pub target: BinDistribution,
}

impl Record for FusedRecord {
    fn key(&self) -> Option<String> {
        Some(self.instance_id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAnswerRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(flatten)]
    pub answer: TraceAnswer,
}

impl Record for TraceAnswerRecord {
    fn key(&self) -> Option<String> {
        Some(self.id.clone())
    }
}

/// Echo of the command and resolved configuration at the top of every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub command: String,
    pub config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: Header,
}

/// Featurizer choice persisted next to the trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturizerSpec {
    pub name: String,
    pub dim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub header: Header,
    pub featurizer: FeaturizerSpec,
    pub head: HeadParams,
}

fn is_header(line: &str) -> bool {
    serde_json::from_str::<HeaderLine>(line).is_ok()
}

/// Parses JSONL text; `path` only labels errors.
pub fn parse_records<T: Record>(text: &str, path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || (idx == 0 && is_header(line)) {
            continue;
        }
        let record: T = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        record.check().map_err(|message| Error::Range {
            path: path.to_path_buf(),
            line: line_no,
            message,
        })?;
        if let Some(key) = record.key() {
            if !seen.insert(key.clone()) {
                return Err(Error::Duplicate {
                    path: path.to_path_buf(),
                    line: line_no,
                    id: key,
                });
            }
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_header(path: &Path) -> Result<Option<Header>> {
    let text = read_text(path)?;
    Ok(text
        .lines()
        .next()
        .and_then(|l| serde_json::from_str::<HeaderLine>(l).ok())
        .map(|h| h.header))
}

pub fn load<T: Record>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    parse_records(&read_text(path)?, path)
}

pub fn load_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    load(path)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<PairwiseRecord>> {
    load(path)
}

pub fn load_rollouts(path: impl AsRef<Path>) -> Result<Vec<RolloutRecord>> {
    load(path)
}

pub fn load_traces(path: impl AsRef<Path>) -> Result<Vec<Trace>> {
    load(path)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>> {
    load(path)
}

pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value)
        .map_err(|e| Error::Numeric(format!("cannot serialize record: {e}")))
}

/// Renders records as JSONL, preceded by the header line when given.
pub fn to_jsonl<T: Serialize>(header: Option<&Header>, records: &[T]) -> Result<String> {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&to_json_line(&HeaderLine { header: h.clone() })?);
        out.push('\n');
    }
    for r in records {
        out.push_str(&to_json_line(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save<T: Serialize>(
    path: impl AsRef<Path>,
    header: Option<&Header>,
    records: &[T],
) -> Result<()> {
    write_text(path.as_ref(), &to_jsonl(header, records)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let model: ModelFile = serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    model.head.validate()?;
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(model)
        .map_err(|e| Error::Numeric(format!("cannot serialize model: {e}")))?;
    text.push('\n');
    write_text(path.as_ref(), &text)
}
