//! Named strategy registries: every pluggable algorithm is built by name at runtime.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::head::{FeatureVector, Featurizer, HashedFeaturizer, HeadParams, PrecomputedFeaturizer};
use crate::rank::{
    Comparator, ComparisonRecord, HiddenScoreComparator, PairScheduler, RandomScheduler,
    TableComparator, UncertaintyScheduler,
};
use crate::structural::{ConstantScorer, HeadScorer, ScoreRecord, Scorer, TableScorer};

type Factory<T, A> = Box<dyn Fn(A) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized, A> {
    kind: &'static str,
    factories: BTreeMap<&'static str, Factory<T, A>>,
}

impl<T: ?Sized, A> Registry<T, A> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &'static str, factory: F) -> &mut Self
    where
        F: Fn(A) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.factories.insert(name, Box::new(factory));
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn create(&self, name: &str, args: A) -> Result<Box<T>> {
        match self.factories.get(name) {
            Some(factory) => factory(args),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            }),
        }
    }
}

pub fn schedulers() -> Registry<dyn PairScheduler, ()> {
    let mut r = Registry::new("scheduler");
    r.register("random", |()| {
        Ok(Box::new(RandomScheduler) as Box<dyn PairScheduler>)
    })
    .register("uncertainty", |()| {
        Ok(Box::new(UncertaintyScheduler) as Box<dyn PairScheduler>)
    });
    r
}

#[derive(Debug, Clone, Default)]
pub struct FeaturizerArgs {
    pub dim: usize,
    pub seed: u64,
    pub table: HashMap<String, FeatureVector>,
}

pub fn featurizers() -> Registry<dyn Featurizer, FeaturizerArgs> {
    let mut r = Registry::new("featurizer");
    r.register("hashed", |a: FeaturizerArgs| {
        if a.dim < 8 {
            return Err(Error::Config(format!(
                "hashed featurizer needs dim >= 8, got {}",
                a.dim
            )));
        }
        Ok(Box::new(HashedFeaturizer {
            dim: a.dim,
            seed: a.seed,
        }) as Box<dyn Featurizer>)
    })
    .register("precomputed", |a: FeaturizerArgs| {
        Ok(Box::new(PrecomputedFeaturizer::new(a.table)?) as Box<dyn Featurizer>)
    });
    r
}

#[derive(Default)]
pub struct ScorerArgs {
    pub constant: Option<f64>,
    pub table: Vec<ScoreRecord>,
    pub head: Option<(HeadParams, Box<dyn Featurizer>)>,
}

pub fn scorers() -> Registry<dyn Scorer, ScorerArgs> {
    let mut r = Registry::new("scorer");
    r.register("constant", |a: ScorerArgs| {
        let v = a.constant.unwrap_or(0.5);
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!(
                "constant score must lie in [0, 1], got {v}"
            )));
        }
        Ok(Box::new(ConstantScorer(v)) as Box<dyn Scorer>)
    })
    .register("table", |a: ScorerArgs| {
        Ok(Box::new(TableScorer::new(a.table)) as Box<dyn Scorer>)
    })
    .register("head", |a: ScorerArgs| {
        let (head, featurizer) = a
            .head
            .ok_or_else(|| Error::Config("head scorer needs trained parameters".into()))?;
        Ok(Box::new(HeadScorer::new(head, featurizer)?) as Box<dyn Scorer>)
    });
    r
}

#[derive(Debug, Clone, Default)]
pub struct ComparatorArgs {
    pub records: Vec<ComparisonRecord>,
    pub hidden_scores: HashMap<String, f64>,
}

pub fn comparators() -> Registry<dyn Comparator, ComparatorArgs> {
    let mut r = Registry::new("comparator");
    r.register("table", |a: ComparatorArgs| {
        Ok(Box::new(TableComparator::new(a.records)) as Box<dyn Comparator>)
    })
    .register("hidden-score", |a: ComparatorArgs| {
        Ok(Box::new(HiddenScoreComparator::new(a.hidden_scores)) as Box<dyn Comparator>)
    });
    r
}
