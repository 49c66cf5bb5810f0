use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_metrics, MetricReport, AUC_VARIANT, KL_EPS};
use crate::data::{
    default_sigma, fixations_to_heatmap, read_ighm, resize_map, AttentionMap, Record, ResizeMode,
    SplitManifest,
};
use crate::encoders::EncoderBackend;
use crate::error::{IaError, Result};
use crate::model::IaModel;
use crate::scalar::Scalar;

/// Source of one attention map per sample. `Ok(None)` marks a missing map.
pub trait Predictor<T: Scalar>: Sync {
    fn predict(&self, record: &Record) -> Result<Option<AttentionMap<T>>>;
}

/// Reads `<dir>/<sample_id>.ighm`.
pub struct HeatmapDirPredictor {
    pub dir: PathBuf,
}

impl<T: Scalar> Predictor<T> for HeatmapDirPredictor {
    fn predict(&self, record: &Record) -> Result<Option<AttentionMap<T>>> {
        let path = self.dir.join(format!("{}.ighm", record.sample.sample_id));
        if !path.exists() {
            return Ok(None);
        }
        read_ighm(path).map(Some)
    }
}

/// Returns the ground-truth heatmap itself.
pub struct GroundTruthPredictor {
    pub sigma: Option<f64>,
}

impl<T: Scalar> Predictor<T> for GroundTruthPredictor {
    fn predict(&self, record: &Record) -> Result<Option<AttentionMap<T>>> {
        ground_truth(record, self.sigma).map(Some)
    }
}

/// Runs a trained model on the sample's image.
pub struct ModelPredictor<'a, T: Scalar> {
    pub model: &'a IaModel<T>,
    pub backend: &'a dyn EncoderBackend<T>,
    /// Directory that relative image paths are resolved against.
    pub base_dir: PathBuf,
}

impl<T: Scalar> Predictor<T> for ModelPredictor<'_, T> {
    fn predict(&self, record: &Record) -> Result<Option<AttentionMap<T>>> {
        let image = image::open(record.image_path(&self.base_dir))?.to_rgb8();
        self.model.predict(&record.sample, &image, self.backend).map(Some)
    }
}

fn ground_truth<T: Scalar>(record: &Record, sigma: Option<f64>) -> Result<AttentionMap<T>> {
    let s = &record.sample;
    fixations_to_heatmap(
        &record.fixations,
        s.width,
        s.height,
        sigma.unwrap_or_else(|| default_sigma(s.width)),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub cc: f64,
    pub kldiv: f64,
    pub sim: f64,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub per_sample: Vec<SampleMetrics>,
}

/// Aggregate metrics plus the conventions they were computed under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub metrics: MetricReport,
    pub auc_variant: String,
    pub kl_epsilon: f64,
    pub sigma_px: Option<f64>,
}

impl Evaluation {
    pub fn report(&self, sigma: Option<f64>) -> EvaluationReport {
        EvaluationReport {
            metrics: self.report.clone(),
            auc_variant: AUC_VARIANT.into(),
            kl_epsilon: KL_EPS,
            sigma_px: sigma,
        }
    }
}

fn select<'r>(records: &'r [Record], split: Option<&SplitManifest>) -> Result<Vec<&'r Record>> {
    let Some(split) = split else {
        return Ok(records.iter().collect());
    };
    let present: HashSet<&str> = records.iter().map(|r| r.sample.sample_id.as_str()).collect();
    let unknown: Vec<&String> = split
        .test_ids
        .iter()
        .filter(|id| !present.contains(id.as_str()))
        .collect();
    if !unknown.is_empty() {
        return Err(IaError::Split(format!(
            "test ids missing from the manifest: {unknown:?}"
        )));
    }
    let wanted: HashSet<&str> = split.test_ids.iter().map(String::as_str).collect();
    Ok(records
        .iter()
        .filter(|r| wanted.contains(r.sample.sample_id.as_str()))
        .collect())
}

/// Scores every selected sample, in parallel over at most `jobs` threads,
/// and averages in manifest order.
pub fn evaluate<T: Scalar>(
    records: &[Record],
    predictor: &dyn Predictor<T>,
    split: Option<&SplitManifest>,
    sigma: Option<f64>,
    jobs: usize,
) -> Result<Evaluation> {
    let chosen = select(records, split)?;
    if chosen.is_empty() {
        return Err(IaError::Metric("no samples to evaluate".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| IaError::Metric(format!("thread pool: {e}")))?;
    let results: Vec<Result<Option<SampleMetrics>>> = pool.install(|| {
        chosen
            .par_iter()
            .map(|record| {
                let Some(pred) = predictor.predict(record)? else {
                    return Ok(None);
                };
                let gt: AttentionMap<T> = ground_truth(record, sigma)?;
                let pred = if pred.shape() == gt.shape() {
                    pred
                } else {
                    resize_map(&pred, gt.rows(), gt.cols(), ResizeMode::Bilinear)?
                };
                let (cc, kldiv, sim, auc) = sample_metrics(&pred, &gt, &record.fixations)
                    .map_err(|e| match e {
                        IaError::Metric(m) => {
                            IaError::Metric(format!("{}: {m}", record.sample.sample_id))
                        }
                        other => other,
                    })?;
                Ok(Some(SampleMetrics {
                    sample_id: record.sample.sample_id.clone(),
                    cc,
                    kldiv,
                    sim,
                    auc,
                }))
            })
            .collect()
    });

    let mut per_sample = Vec::with_capacity(results.len());
    let mut missing = Vec::new();
    for (record, r) in chosen.iter().zip(results) {
        match r? {
            Some(m) => per_sample.push(m),
            None => missing.push(record.sample.sample_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(IaError::MissingPredictions { ids: missing });
    }
    let n = per_sample.len() as f64;
    let mean = |f: fn(&SampleMetrics) -> f64| per_sample.iter().map(f).sum::<f64>() / n;
    let report = MetricReport {
        cc: mean(|m| m.cc),
        kldiv: mean(|m| m.kldiv),
        sim: mean(|m| m.sim),
        auc: mean(|m| m.auc),
        n_samples: per_sample.len(),
    };
    Ok(Evaluation { report, per_sample })
}

pub fn write_per_sample_csv(path: impl AsRef<Path>, rows: &[SampleMetrics]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "sample_id,cc,kldiv,sim,auc")?;
    for m in rows {
        writeln!(w, "{},{},{},{},{}", m.sample_id, m.cc, m.kldiv, m.sim, m.auc)?;
    }
    w.flush()?;
    Ok(())
}
