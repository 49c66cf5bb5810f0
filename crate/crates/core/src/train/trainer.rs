use std::path::Path;

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::AdamW;
use super::TrainConfig;
use crate::data::{default_sigma, fixations_to_heatmap, sample::require_fixations, AttentionMap, Record};
use crate::encoders::{EncoderBackend, EncoderSpec};
use crate::error::{IaError, Result};
use crate::model::{bce_loss, bce_var, Checkpoint, CheckpointMeta, IaConfig, IaModel, Mode, SampleFeatures};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tape;

/// Encoder features and target heatmap of one training sample.
#[derive(Clone, Debug)]
pub struct TrainingSample<T: Scalar> {
    pub record: Record,
    pub features: SampleFeatures<T>,
    pub target: AttentionMap<T>,
}

pub fn prepare_sample<T: Scalar>(
    record: &Record,
    image: &RgbImage,
    backend: &dyn EncoderBackend<T>,
    config: &IaConfig,
    sigma: Option<f64>,
) -> Result<TrainingSample<T>> {
    let s = &record.sample;
    let features = SampleFeatures::extract(s, image, backend, config)?;
    let target = fixations_to_heatmap(
        &record.fixations,
        s.width,
        s.height,
        sigma.unwrap_or_else(|| default_sigma(s.width)),
    )?;
    Ok(TrainingSample {
        record: record.clone(),
        features,
        target,
    })
}

/// Loads images (relative to `base_dir`) and encodes every record, in order.
pub fn prepare_samples<T: Scalar>(
    records: &[Record],
    base_dir: &Path,
    backend: &dyn EncoderBackend<T>,
    config: &IaConfig,
    sigma: Option<f64>,
) -> Result<Vec<TrainingSample<T>>> {
    require_fixations(records)?;
    records
        .par_iter()
        .map(|r| {
            let image = image::open(r.image_path(base_dir))?.to_rgb8();
            prepare_sample(r, &image, backend, config, sigma)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

/// Model, optimizer state and loss history of one training run.
#[derive(Clone, Debug)]
pub struct Trainer<T: Scalar> {
    pub model: IaModel<T>,
    pub config: TrainConfig,
    pub optimizer: AdamW<T>,
    pub epochs_done: usize,
    pub log: Vec<EpochLog>,
}

pub(crate) fn init_description(seed: u64) -> String {
    format!(
        "seed {seed}; zero: va.*.attn.o, va.*.mlp.fc2, hocb.attn.o, icb.self.o, icb.gate; \
         other weights normal(0, 1/sqrt(fan_in)); biases zero; norm scales one"
    )
}

impl<T: Scalar> Trainer<T> {
    /// Fresh model with the configured components disabled.
    pub fn new(model_config: IaConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model_config = config
            .ablation
            .iter()
            .fold(model_config, |c, &comp| c.without(comp));
        let model = IaModel::init(model_config, config.seed)?;
        let optimizer = AdamW::new(&config, &model.params);
        Ok(Trainer {
            model,
            config,
            optimizer,
            epochs_done: 0,
            log: Vec::new(),
        })
    }

    /// Continues from a checkpoint; missing optimizer moments restart at zero.
    pub fn resume(ck: Checkpoint<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut optimizer = AdamW::new(&config, &ck.model.params);
        if let Some(m) = ck.moments {
            optimizer.moments = m;
            optimizer.steps = ck.meta.optimizer_steps;
        }
        Ok(Trainer {
            model: ck.model,
            config,
            optimizer,
            epochs_done: ck.meta.epochs_done,
            log: Vec::new(),
        })
    }

    /// One pass over `data` in a seeded shuffle order, one AdamW step per batch.
    pub fn train_epoch(&mut self, data: &[TrainingSample<T>]) -> Result<EpochLog> {
        if data.is_empty() {
            return Err(IaError::arg("training set is empty"));
        }
        let epoch = self.epochs_done;
        let lr = self.config.lr_at(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);

        let mut total = 0.0;
        for (step, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&TrainingSample<T>> = chunk.iter().map(|&i| &data[i]).collect();
            let tape = Tape::new();
            let bound = self.model.params.bind(&tape, true);
            let features: Vec<&SampleFeatures<T>> = batch.iter().map(|s| &s.features).collect();
            let out = self.model.forward(&bound, &features, Mode::Train, None)?;
            let per_sample: Vec<_> = out
                .maps
                .iter()
                .zip(&batch)
                .map(|(&m, s)| bce_var(m, &s.target))
                .collect();
            let loss = per_sample[1..]
                .iter()
                .fold(per_sample[0], |acc, &l| acc.add(l))
                .scale(T::one() / lit(batch.len() as f64));
            let value = loss.value().data()[0].to_f64_lossy();
            if !value.is_finite() {
                return Err(IaError::NonFinite { epoch, step });
            }
            let mut grads = tape.backward(loss);
            let grads = bound.gradients(&mut grads);
            drop(bound);
            if let Some((mean, var)) = out.bn_batch {
                let rows = features.iter().map(|f| f.tokens.len()).sum();
                self.model.update_running_stats(&mean, &var, rows);
            }
            self.optimizer.step(&mut self.model.params, &grads, lit(lr));
            if !self.model.params.params().all(|(_, p)| p.all_finite()) {
                return Err(IaError::NonFinite { epoch, step });
            }
            total += value * batch.len() as f64;
        }
        let entry = EpochLog {
            epoch,
            lr,
            mean_loss: total / data.len() as f64,
        };
        log::debug!("epoch {epoch}: lr {lr:e}, loss {:.6}", entry.mean_loss);
        self.epochs_done += 1;
        self.log.push(entry.clone());
        Ok(entry)
    }

    /// Trains until `config.epochs` epochs are done.
    pub fn train(&mut self, data: &[TrainingSample<T>]) -> Result<&[EpochLog]> {
        while self.epochs_done < self.config.epochs {
            self.train_epoch(data)?;
        }
        Ok(&self.log)
    }

    pub fn checkpoint(&self, encoder: EncoderSpec, train_ids: Vec<String>) -> Result<Checkpoint<T>> {
        Ok(Checkpoint {
            meta: CheckpointMeta {
                config: self.model.config.clone(),
                encoder,
                train_ids,
                epochs_done: self.epochs_done,
                optimizer_steps: self.optimizer.steps,
                init: init_description(self.config.seed),
                train_config: serde_json::to_value(&self.config)?,
            },
            model: self.model.clone(),
            moments: Some(self.optimizer.moments.clone()),
        })
    }
}

/// Trains a fresh model for `config.epochs` epochs.
pub fn train<T: Scalar>(
    data: &[TrainingSample<T>],
    model_config: IaConfig,
    config: TrainConfig,
) -> Result<(IaModel<T>, Vec<EpochLog>)> {
    let records: Vec<Record> = data.iter().map(|s| s.record.clone()).collect();
    require_fixations(&records)?;
    let mut trainer = Trainer::new(model_config, config)?;
    trainer.train(data)?;
    Ok((trainer.model, trainer.log))
}

/// Mean evaluation-mode BCE over `data`.
pub fn dataset_loss<T: Scalar>(model: &IaModel<T>, data: &[TrainingSample<T>]) -> Result<f64> {
    if data.is_empty() {
        return Err(IaError::arg("empty dataset"));
    }
    let mut total = 0.0;
    for s in data {
        let pred = model.predict_features(&s.features)?;
        total += bce_loss(&pred, &s.target)?.to_f64_lossy();
    }
    Ok(total / data.len() as f64)
}
