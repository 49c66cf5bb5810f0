//! Saliency metrics (CC, KL divergence, SIM, AUC-Judd) and the dataset
//! evaluation driver.

mod evaluate;

pub use evaluate::{
    evaluate, write_per_sample_csv, Evaluation, EvaluationReport, GroundTruthPredictor,
    HeatmapDirPredictor, ModelPredictor, Predictor, SampleMetrics,
};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{AttentionMap, FixationSet};
use crate::error::{IaError, Result};
use crate::scalar::Scalar;

/// Regularizer of the KL divergence, placed inside and outside the ratio.
pub const KL_EPS: f64 = 2.220446e-16;

/// Name of the AUC variant recorded in report metadata.
pub const AUC_VARIANT: &str = "judd";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cc: f64,
    pub kldiv: f64,
    pub sim: f64,
    pub auc: f64,
    pub n_samples: usize,
}

fn check_shapes<T: Scalar>(pred: &AttentionMap<T>, gt: &AttentionMap<T>) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(IaError::arg(format!(
            "prediction {:?} and ground truth {:?} differ in shape",
            pred.shape(),
            gt.shape()
        )));
    }
    Ok(())
}

fn as_f64<T: Scalar>(m: &AttentionMap<T>) -> Vec<f64> {
    m.values().iter().map(|v| v.to_f64_lossy()).collect()
}

/// Non-negative map divided by its sum.
fn distribution<T: Scalar>(m: &AttentionMap<T>, what: &str) -> Result<Vec<f64>> {
    let v = as_f64(m);
    if v.iter().any(|&x| x < 0.0) {
        return Err(IaError::arg(format!("{what} has negative values")));
    }
    let s: f64 = v.iter().sum();
    if s <= 0.0 {
        return Err(IaError::Metric(format!("{what} sums to zero")));
    }
    Ok(v.into_iter().map(|x| x / s).collect())
}

/// Pearson correlation of the flattened maps; a constant map gives 0.
pub fn cc<T: Scalar>(pred: &AttentionMap<T>, gt: &AttentionMap<T>) -> Result<f64> {
    check_shapes(pred, gt)?;
    let (p, g) = (as_f64(pred), as_f64(gt));
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mg = g.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut vg) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(&g) {
        let (da, db) = (a - mp, b - mg);
        cov += da * db;
        vp += da * da;
        vg += db * db;
    }
    if vp == 0.0 || vg == 0.0 {
        log::warn!("cc of a constant map is undefined, reporting 0");
        return Ok(0.0);
    }
    Ok((cov / (vp.sqrt() * vg.sqrt())).clamp(-1.0, 1.0))
}

/// `sum G log(G / (P + eps) + eps)` over sum-normalized maps.
pub fn kldiv<T: Scalar>(pred: &AttentionMap<T>, gt: &AttentionMap<T>) -> Result<f64> {
    check_shapes(pred, gt)?;
    let p = distribution(pred, "prediction")?;
    let g = distribution(gt, "ground truth")?;
    Ok(p.iter()
        .zip(&g)
        .map(|(&pi, &gi)| gi * (gi / (pi + KL_EPS) + KL_EPS).ln())
        .sum::<f64>()
        .max(0.0))
}

/// Histogram intersection of the sum-normalized maps.
pub fn sim<T: Scalar>(pred: &AttentionMap<T>, gt: &AttentionMap<T>) -> Result<f64> {
    check_shapes(pred, gt)?;
    let p = distribution(pred, "prediction")?;
    let g = distribution(gt, "ground truth")?;
    Ok(p.iter().zip(&g).map(|(a, b)| a.min(*b)).sum::<f64>().min(1.0))
}

/// Pixel indices hit by the fixations, rounded and clamped to the map.
pub fn fixated_pixels(rows: usize, cols: usize, fixations: &FixationSet) -> Vec<usize> {
    let mut idx: Vec<usize> = fixations
        .points
        .iter()
        .map(|p| {
            let r = (p.y.round().max(0.0) as usize).min(rows - 1);
            let c = (p.x.round().max(0.0) as usize).min(cols - 1);
            r * cols + c
        })
        .collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// AUC-Judd with fixated pixels as positives and every other pixel as a
/// negative.
///
/// The ROC curve is swept over every distinct prediction value, which makes
/// the trapezoidal area equal to `P[pos > neg] + P[pos = neg] / 2`; that
/// identity is how it is computed here.
pub fn auc<T: Scalar>(pred: &AttentionMap<T>, fixations: &FixationSet) -> Result<f64> {
    if fixations.is_empty() {
        return Err(IaError::Metric(format!(
            "sample '{}' has no fixations",
            fixations.sample_id
        )));
    }
    let (rows, cols) = pred.shape();
    let values = as_f64(pred);
    let pos_idx = fixated_pixels(rows, cols, fixations);
    if pos_idx.len() == values.len() {
        return Err(IaError::Metric("every pixel is fixated, no negatives".into()));
    }
    let mut is_pos = vec![false; values.len()];
    for &i in &pos_idx {
        is_pos[i] = true;
    }
    let mut neg: Vec<f64> = values
        .iter()
        .zip(&is_pos)
        .filter(|(_, &p)| !p)
        .map(|(&v, _)| v)
        .collect();
    neg.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut wins = 0.0;
    for &i in &pos_idx {
        let v = values[i];
        let below = neg.partition_point(|&n| n < v);
        let not_above = neg.partition_point(|&n| n <= v);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Ok(wins / (pos_idx.len() as f64 * neg.len() as f64))
}

/// All four metrics for one sample.
pub fn sample_metrics<T: Scalar>(
    pred: &AttentionMap<T>,
    gt: &AttentionMap<T>,
    fixations: &FixationSet,
) -> Result<(f64, f64, f64, f64)> {
    Ok((cc(pred, gt)?, kldiv(pred, gt)?, sim(pred, gt)?, auc(pred, fixations)?))
}
