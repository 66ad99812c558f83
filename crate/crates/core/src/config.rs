//! Run configuration loaded from TOML; every section falls back to defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bins::{make_schema, BinSchema};
use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, LogisticTransform};
use crate::rank::TournamentConfig;
use crate::registry;
use crate::train::TrainConfig;

pub const SEED_ENV: &str = "ODDS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinsConfig {
    pub n_bins: usize,
}

impl Default for BinsConfig {
    fn default() -> Self {
        BinsConfig { n_bins: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub ece_bins: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { ece_bins: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    pub featurizer: String,
    pub dim: usize,
    pub seed: u64,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            featurizer: "hashed".into(),
            dim: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructuralConfig {
    pub scorer: String,
    /// Only read by the `constant` scorer.
    pub constant: f64,
}

impl Default for StructuralConfig {
    fn default() -> Self {
        StructuralConfig {
            scorer: "table".into(),
            constant: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, overrides the seed of every section.
    pub seed: Option<u64>,
    pub bins: BinsConfig,
    pub training: TrainConfig,
    pub fusion: FusionConfig,
    pub tournament: TournamentConfig,
    pub metrics: MetricsConfig,
    pub features: FeaturesConfig,
    pub structural: StructuralConfig,
    pub unli: LogisticTransform,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the seed override (environment first, then the `seed` key) and validates.
    pub fn resolve(mut self, env_seed: Option<&str>) -> Result<Self> {
        if let Some(raw) = env_seed {
            let seed = raw.trim().parse::<u64>().map_err(|_| {
                Error::Config(format!(
                    "{SEED_ENV} must be an unsigned integer, got {raw:?}"
                ))
            })?;
            self.seed = Some(seed);
        }
        if let Some(seed) = self.seed {
            self.training.seed = seed;
            self.tournament.seed = seed;
            self.features.seed = seed;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        make_schema(self.bins.n_bins)?;
        self.training.validate()?;
        self.fusion.validate()?;
        self.tournament.validate()?;
        self.unli.validate()?;
        if self.metrics.ece_bins == 0 {
            return Err(Error::Config("metrics.ece_bins must be at least 1".into()));
        }
        if self.features.dim < 8 {
            return Err(Error::Config(format!(
                "features.dim must be at least 8, got {}",
                self.features.dim
            )));
        }
        if !(0.0..=1.0).contains(&self.structural.constant) {
            return Err(Error::Config(
                "structural.constant must lie in [0, 1]".into(),
            ));
        }
        let checks = [
            (
                registry::schedulers().contains(&self.tournament.scheduler),
                "scheduler",
                &self.tournament.scheduler,
            ),
            (
                registry::featurizers().contains(&self.features.featurizer),
                "featurizer",
                &self.features.featurizer,
            ),
            (
                registry::scorers().contains(&self.structural.scorer),
                "scorer",
                &self.structural.scorer,
            ),
        ];
        for (ok, kind, name) in checks {
            if !ok {
                return Err(Error::Config(format!("unknown {kind} `{name}`")));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<BinSchema> {
        make_schema(self.bins.n_bins)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes to JSON")
    }
}
