use serde::{Deserialize, Serialize};

use crate::error::{PllError, Result};
use crate::graph::{GraphOptions, Metric};
use crate::models::{Architecture, InferenceModel, ObservationModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimSettings {
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for OptimSettings {
    fn default() -> Self {
        OptimSettings {
            lr: 1e-2,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphRefresh {
    #[default]
    Once,
    PerEpoch,
}

/// How the risk weights are read off the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LabelEstimate {
    /// `α / Σα`.
    #[default]
    Mean,
    /// Average of `count` posterior draws.
    Samples { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub warmup_epochs: usize,
    /// Epoch budget including warm-up.
    pub total_epochs: usize,
    pub batch_size: usize,
    pub predictive: OptimSettings,
    pub inference: OptimSettings,
    pub observation: OptimSettings,
    pub lambda: f64,
    pub epsilon: f64,
    pub k: usize,
    pub metric: Metric,
    pub symmetrize: bool,
    pub mc_samples: usize,
    pub seed: u64,
    pub graph_refresh: GraphRefresh,
    pub eval_every: usize,
    pub architecture: Architecture,
    pub gcn_hidden: usize,
    pub observation_hidden: (usize, usize),
    pub label_estimate: LabelEstimate,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            warmup_epochs: 10,
            total_epochs: 200,
            batch_size: 100,
            predictive: OptimSettings::default(),
            inference: OptimSettings::default(),
            observation: OptimSettings::default(),
            lambda: 1.0,
            epsilon: 0.01,
            k: 3,
            metric: Metric::Euclidean,
            symmetrize: false,
            mc_samples: 1,
            seed: 0,
            graph_refresh: GraphRefresh::Once,
            eval_every: 1,
            architecture: Architecture::Linear,
            gcn_hidden: InferenceModel::DEFAULT_HIDDEN,
            observation_hidden: ObservationModel::DEFAULT_HIDDEN,
            label_estimate: LabelEstimate::Mean,
        }
    }
}

fn rate_ok(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(PllError::Config(m));
        if self.total_epochs == 0 || self.warmup_epochs >= self.total_epochs {
            return fail(format!(
                "need 0 <= warmup_epochs < total_epochs, got {} and {}",
                self.warmup_epochs, self.total_epochs
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        for (name, o) in [
            ("predictive", &self.predictive),
            ("inference", &self.inference),
            ("observation", &self.observation),
        ] {
            if !rate_ok(o.lr) || !rate_ok(o.weight_decay) {
                return fail(format!("{name} lr and weight_decay must be finite and non-negative"));
            }
        }
        if !rate_ok(self.lambda) {
            return fail(format!("lambda must be finite and non-negative, got {}", self.lambda));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.mc_samples == 0 {
            return fail("mc_samples must be at least 1".into());
        }
        if self.eval_every == 0 {
            return fail("eval_every must be at least 1".into());
        }
        if self.gcn_hidden == 0 || self.observation_hidden.0 == 0 || self.observation_hidden.1 == 0 {
            return fail("hidden sizes must be positive".into());
        }
        if let Architecture::Mlp { hidden } = &self.architecture {
            if hidden.is_empty() || hidden.contains(&0) {
                return fail("mlp hidden sizes must be a non-empty list of positive widths".into());
            }
        }
        if let LabelEstimate::Samples { count: 0 } = self.label_estimate {
            return fail("label_estimate sample count must be at least 1".into());
        }
        Ok(())
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            k: self.k,
            metric: self.metric,
            symmetrize: self.symmetrize,
        }
    }

    pub fn le_epochs(&self) -> usize {
        self.total_epochs.saturating_sub(self.warmup_epochs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            TrainConfig {
                warmup_epochs: 5,
                total_epochs: 5,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                epsilon: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                lambda: -1.0,
                ..TrainConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let c = TrainConfig {
            architecture: Architecture::Mlp { hidden: vec![32, 16] },
            label_estimate: LabelEstimate::Samples { count: 4 },
            ..TrainConfig::default()
        };
        let text = toml::to_string(&c).unwrap();
        let back: TrainConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: TrainConfig = toml::from_str("total_epochs = 50\n[inference]\nlr = 0.001\nweight_decay = 0.0\n").unwrap();
        assert_eq!(partial.total_epochs, 50);
        assert_eq!(partial.inference.lr, 1e-3);
        assert!(toml::from_str::<TrainConfig>("bogus = 1").is_err());
    }
}
