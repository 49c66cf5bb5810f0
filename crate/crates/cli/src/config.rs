//! Config file layering: flag > file > built-in default.

use std::path::Path;

use ia_core::encoders::{EncoderKind, EncoderSpec, MODEL_RESOLUTION};
use ia_core::hoi::ToyConfig;
use ia_core::model::IaConfig;
use ia_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::GlobalArgs;
use crate::Failure;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    jobs: Option<usize>,
    encoder: EncoderSection,
    model: Option<toml::Table>,
    train: Option<TrainConfig>,
    toy: ToyConfig,
    eval: EvalSection,
    align: AlignSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub backend: EncoderKind,
    /// Seed of the mock encoder's weights.
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSection {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for AlignSection {
    fn default() -> Self {
        AlignSection {
            lambda1: 1.0,
            lambda2: 10.0,
        }
    }
}

/// Settings after flags, file and defaults are merged.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Effective {
    pub seed: u64,
    pub jobs: usize,
    pub encoder: EncoderSpec,
    pub model: IaConfig,
    pub train: TrainConfig,
    pub toy: ToyConfig,
    pub eval: EvalSection,
    pub align: AlignSection,
}

impl Effective {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }
}

fn base_model(kind: EncoderKind) -> IaConfig {
    match kind {
        EncoderKind::Mock => IaConfig::desk(),
        EncoderKind::PretrainedBase => IaConfig::full_base(),
        EncoderKind::PretrainedLarge => IaConfig::full_large(),
    }
}

fn overlay_model(base: IaConfig, table: Option<toml::Table>) -> Result<IaConfig, Failure> {
    let Some(table) = table else {
        return Ok(base);
    };
    let mut merged = toml::Table::try_from(&base).map_err(|e| Failure::Runtime(e.to_string()))?;
    for (k, v) in table {
        if !merged.contains_key(&k) && k != "disabled" {
            return Err(Failure::Validation(format!("unknown [model] key '{k}'")));
        }
        merged.insert(k, v);
    }
    let cfg: IaConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| Failure::Validation(format!("[model]: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(global: &GlobalArgs) -> Result<Effective, Failure> {
    let file: FileConfig = match &global.config {
        Some(path) => parse_file(path)?,
        None => FileConfig::default(),
    };
    let kind = global.encoder.map(EncoderKind::from).unwrap_or(file.encoder.backend);
    let model = overlay_model(base_model(kind), file.model)?;
    let mut train = file.train.unwrap_or_else(|| match kind {
        EncoderKind::Mock => TrainConfig::desk(),
        _ => TrainConfig::default(),
    });
    let seed = global.seed.or(file.seed).unwrap_or(train.seed);
    train.seed = seed;
    train.validate()?;
    file.toy.validate()?;
    let encoder = match kind {
        EncoderKind::Mock => EncoderSpec {
            backend: kind,
            seed: file.encoder.seed,
            text_dim: model.text_dim,
            visual_dim: model.visual_dim,
            patch_size: model.patch_size,
            image_size: model.image_size,
        },
        _ => {
            let spec = EncoderSpec::pretrained(kind);
            let want = (spec.text_dim, spec.visual_dim, spec.patch_size, MODEL_RESOLUTION);
            let got = (model.text_dim, model.visual_dim, model.patch_size, model.image_size);
            if want != got {
                return Err(Failure::Validation(format!(
                    "[model] (text_dim, visual_dim, patch_size, image_size) = {got:?} does not match encoder '{}' {want:?}",
                    kind.as_str()
                )));
            }
            spec
        }
    };
    let jobs = global
        .jobs
        .or(file.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(Failure::Validation("--jobs must be at least 1".into()));
    }
    Ok(Effective {
        seed,
        jobs,
        encoder,
        model,
        train,
        toy: file.toy,
        eval: file.eval,
        align: file.align,
    })
}

fn parse_file(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}
