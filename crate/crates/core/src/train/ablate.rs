use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::trainer::{Trainer, TrainingSample};
use super::TrainConfig;
use crate::data::{AttentionMap, Record};
use crate::error::{IaError, Result};
use crate::metrics::{evaluate, MetricReport, Predictor};
use crate::model::{Component, IaConfig, IaModel, SampleFeatures};
use crate::scalar::Scalar;

/// One row of the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    Without(Component),
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::Without(Component::Pa),
        Variant::Without(Component::Va),
        Variant::Without(Component::Hocb),
        Variant::Without(Component::Icb),
    ];

    pub fn apply(&self, config: IaConfig) -> IaConfig {
        match self {
            Variant::Full => config,
            Variant::Without(c) => config.without(*c),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Full => f.write_str("full"),
            Variant::Without(c) => write!(f, "w/o {}", c.as_str()),
        }
    }
}

impl FromStr for Variant {
    type Err = IaError;

    /// Accepts `full` and spellings such as `w/o ICB`, `wo-icb`, `without_icb`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let rest = ["without", "w/o", "wo"]
            .iter()
            .find_map(|p| lower.strip_prefix(p))
            .map(|r| r.trim_start_matches([' ', '-', '_']));
        match (lower.as_str(), rest) {
            ("full", _) => Ok(Variant::Full),
            (_, Some("pa")) => Ok(Variant::Without(Component::Pa)),
            (_, Some("va")) => Ok(Variant::Without(Component::Va)),
            (_, Some("hocb")) => Ok(Variant::Without(Component::Hocb)),
            (_, Some("icb")) => Ok(Variant::Without(Component::Icb)),
            _ => Err(IaError::Argument(format!(
                "unknown ablation variant '{s}' (expected full, w/o PA, w/o VA, w/o HOCB or w/o ICB)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub final_loss: f64,
    pub n_params: usize,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

struct FeaturePredictor<'a, T: Scalar> {
    model: &'a IaModel<T>,
    features: HashMap<&'a str, &'a SampleFeatures<T>>,
}

impl<T: Scalar> Predictor<T> for FeaturePredictor<'_, T> {
    fn predict(&self, record: &Record) -> Result<Option<AttentionMap<T>>> {
        match self.features.get(record.sample.sample_id.as_str()) {
            Some(f) => self.model.predict_features(f).map(Some),
            None => Ok(None),
        }
    }
}

/// Trains every variant identically on `train` and scores it on `test`.
pub fn ablate<T: Scalar>(
    train: &[TrainingSample<T>],
    test: &[TrainingSample<T>],
    model_config: &IaConfig,
    config: &TrainConfig,
    variants: &[Variant],
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    if variants.is_empty() {
        return Err(IaError::arg("no ablation variants requested"));
    }
    let records: Vec<Record> = test.iter().map(|s| s.record.clone()).collect();
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let mut trainer = Trainer::new(v.apply(model_config.clone()), config.clone())?;
        trainer.train(train)?;
        let predictor = FeaturePredictor {
            model: &trainer.model,
            features: test
                .iter()
                .map(|s| (s.record.sample.sample_id.as_str(), &s.features))
                .collect(),
        };
        let ev = evaluate(&records, &predictor, None, config.sigma, jobs)?;
        log::info!("{v}: cc {:.4}, kl {:.4}", ev.report.cc, ev.report.kldiv);
        rows.push(AblationRow {
            variant: v.to_string(),
            final_loss: trainer.log.last().map_or(f64::NAN, |e| e.mean_loss),
            n_params: trainer.model.params.num_scalars(),
            metrics: ev.report,
        });
    }
    Ok(rows)
}
