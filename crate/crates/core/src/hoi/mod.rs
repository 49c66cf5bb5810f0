//! Aligning a host HOI model's decoder attention with human or IA-generated
//! attention, IA pseudo-labelling, and a small host model to exercise both.

mod toy;

pub use toy::{
    toy_dataset, train_toy, ToyConfig, ToyHoiModel, ToyReport, ToySample, TOY_CLASSES,
};

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::rc::Rc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{resize_map, write_ighm, AttentionMap, Record, ResizeMode};
use crate::encoders::EncoderBackend;
use crate::error::{IaError, Result};
use crate::model::{bce_loss, Checkpoint, BCE_EPS};
use crate::scalar::{lit, Scalar};
use crate::tensor::Var;

/// Where the alignment target comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignSource {
    /// Human fixation heatmaps.
    Human,
    /// Maps predicted by a trained IA model.
    IaPseudo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub source: AlignSource,
}

impl AlignmentConfig {
    /// Weights used with one-stage hosts: `(1, 10)`.
    pub fn one_stage(source: AlignSource) -> Self {
        AlignmentConfig {
            lambda1: 1.0,
            lambda2: 10.0,
            source,
        }
    }

    /// Weights used with two-stage hosts: `(1, 6)`.
    pub fn two_stage(source: AlignSource) -> Self {
        AlignmentConfig {
            lambda1: 1.0,
            lambda2: 6.0,
            source,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |l: f64| l >= 0.0 && l.is_finite();
        if ok(self.lambda1) && ok(self.lambda2) {
            Ok(())
        } else {
            Err(IaError::Config(format!(
                "loss weights must be finite and non-negative, got ({}, {})",
                self.lambda1, self.lambda2
            )))
        }
    }
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self::one_stage(AlignSource::Human)
    }
}

/// Contract for host models that expose decoder attention: the last
/// cross-attention layer, averaged over heads and interaction queries, as an
/// `h x w` map over the visual tokens.
pub trait HostAttentionProbe<T: Scalar> {
    type Input;

    fn attention_map(&self, input: &Self::Input) -> Result<AttentionMap<T>>;
}

fn pooled_target<T: Scalar>(
    target: &AttentionMap<T>,
    rows: usize,
    cols: usize,
) -> Result<AttentionMap<T>> {
    if !target.is_max_normalized(lit(1e-6)) {
        return Err(IaError::arg(format!(
            "alignment target must be max-normalized (min {}, max {})",
            target.min(),
            target.max()
        )));
    }
    resize_map(target, rows, cols, ResizeMode::AdaptiveMax)
}

/// Min-max normalized copy; constant maps are returned unchanged.
pub fn min_max_normalized<T: Scalar>(m: &AttentionMap<T>) -> AttentionMap<T> {
    let (lo, hi) = (m.min(), m.max());
    if hi > lo {
        AttentionMap::from_matrix(m.as_matrix().map(|v| (v - lo) / (hi - lo)))
            .expect("finite input stays finite")
    } else {
        m.clone()
    }
}

/// BCE between the min-max normalized host attention (prediction) and the
/// target pooled to the host's grid by adaptive max pooling.
pub fn alignment_loss<T: Scalar>(m_hoi: &AttentionMap<T>, target: &AttentionMap<T>) -> Result<T> {
    let pooled = pooled_target(target, m_hoi.rows(), m_hoi.cols())?;
    bce_loss(&min_max_normalized(m_hoi), &pooled)
}

/// Graph version of [`alignment_loss`]; `m_hoi` is an `h x w` variable.
pub fn alignment_loss_var<'t, T: Scalar>(m_hoi: Var<'t, T>, target: &AttentionMap<T>) -> Result<Var<'t, T>> {
    let (r, c) = m_hoi.shape();
    let pooled = pooled_target(target, r, c)?;
    Ok(m_hoi
        .min_max_normalize()
        .bce(Rc::new(pooled.into_matrix()), lit(BCE_EPS)))
}

/// `lambda1 * l_raw + lambda2 * l_align`.
pub fn combined_loss(l_raw: f64, l_align: f64, cfg: &AlignmentConfig) -> f64 {
    cfg.lambda1 * l_raw + cfg.lambda2 * l_align
}

/// Refuses datasets that share sample ids with the model's training set.
pub fn check_leakage(train_ids: &[String], records: &[Record]) -> Result<()> {
    let seen: HashSet<&str> = train_ids.iter().map(String::as_str).collect();
    let mut shared: Vec<String> = records
        .iter()
        .map(|r| r.sample.sample_id.clone())
        .filter(|id| seen.contains(id.as_str()))
        .collect();
    if shared.is_empty() {
        Ok(())
    } else {
        shared.sort();
        Err(IaError::Leakage { ids: shared })
    }
}

/// One IA-predicted map per record, keyed by sample id.
pub fn pseudo_label<T: Scalar>(
    checkpoint: &Checkpoint<T>,
    records: &[Record],
    base_dir: &Path,
    backend: &dyn EncoderBackend<T>,
    jobs: usize,
) -> Result<BTreeMap<String, AttentionMap<T>>> {
    check_leakage(&checkpoint.meta.train_ids, records)?;
    let model = &checkpoint.model;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| IaError::arg(format!("thread pool: {e}")))?;
    let maps: Vec<Result<(String, AttentionMap<T>)>> = pool.install(|| {
        records
            .par_iter()
            .map(|r| {
                let image = image::open(r.image_path(base_dir))?.to_rgb8();
                let map = model.predict(&r.sample, &image, backend)?;
                Ok((r.sample.sample_id.clone(), map))
            })
            .collect()
    });
    maps.into_iter().collect()
}

/// Writes `<dir>/<sample_id>.ighm` for every label.
pub fn write_pseudo_labels<T: Scalar>(
    dir: &Path,
    labels: &BTreeMap<String, AttentionMap<T>>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    labels
        .iter()
        .map(|(id, map)| {
            let path = dir.join(format!("{id}.ighm"));
            write_ighm(&path, map)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests;
