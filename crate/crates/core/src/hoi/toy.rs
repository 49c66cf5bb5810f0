//! A small encoder-decoder interaction classifier on synthetic images.
//!
//! Each 64x64 grayscale image holds one framed 12x12 cue whose texture
//! decides the label, unframed distractor patches with random textures, and
//! background noise. The model embeds 8x8 patches, runs one encoder layer,
//! then two decoder layers over learned interaction queries: self-attention
//! first, cross-attention to the encoder memory second. The cross-attention
//! of the last layer is the probe map.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{alignment_loss_var, AlignSource, AlignmentConfig, HostAttentionProbe};
use crate::data::{resize_map, AttentionMap, ResizeMode};
use crate::error::{IaError, Result};
use crate::scalar::{lit, Scalar};
use crate::tensor::nn::{add_attention, add_mlp};
use crate::tensor::{Bound, Matrix, ParamStore, Tape, Var};
use crate::train::{AdamW, TrainConfig};

pub const TOY_CLASSES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub image_size: usize,
    pub patch: usize,
    pub cue_size: usize,
    pub distractors: usize,
    pub distractor_level: f64,
    pub noise: f64,
    pub width: usize,
    pub heads: usize,
    pub queries: usize,
    pub mlp_hidden: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            image_size: 64,
            patch: 8,
            cue_size: 12,
            distractors: 3,
            distractor_level: 0.5,
            noise: 0.3,
            width: 32,
            heads: 4,
            queries: 2,
            mlp_hidden: 64,
            n_train: 256,
            n_test: 128,
            epochs: 20,
            batch_size: 16,
            lr: 3e-3,
            weight_decay: 1e-4,
        }
    }
}

impl ToyConfig {
    pub fn grid(&self) -> usize {
        self.image_size / self.patch
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.image_size % self.patch != 0 {
            return Err(IaError::Config("image_size must be a multiple of patch".into()));
        }
        if self.cue_size == 0 || self.cue_size > self.image_size {
            return Err(IaError::Config("cue must fit inside the image".into()));
        }
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(IaError::Config("width must be a positive multiple of heads".into()));
        }
        if self.queries == 0 || self.epochs == 0 || self.batch_size == 0 || self.n_train == 0 {
            return Err(IaError::Config("queries, epochs, batch_size and n_train must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(IaError::Config("lr must be positive".into()));
        }
        Ok(())
    }
}

/// One synthetic image with its label and cue mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySample<T: Scalar> {
    pub pixels: Matrix<T>,
    /// One row per patch, row-major over the patch grid.
    pub tokens: Matrix<T>,
    pub label: usize,
    /// 1 inside the cue, 0 elsewhere, at image resolution.
    pub cue_mask: AttentionMap<T>,
    /// Top-left corner `(x, y)` of the cue.
    pub cue_at: (usize, usize),
}

fn texture(kind: usize, dx: usize, dy: usize) -> f64 {
    let on = match kind {
        0 => (dy / 2) % 2 == 0,
        1 => (dx / 2) % 2 == 0,
        2 => (dx / 2 + dy / 2) % 2 == 0,
        _ => ((dx + dy) / 3) % 2 == 0,
    };
    if on {
        1.0
    } else {
        0.0
    }
}

fn overlaps(a: (usize, usize), b: (usize, usize), size: usize) -> bool {
    a.0 < b.0 + size && b.0 < a.0 + size && a.1 < b.1 + size && b.1 < a.1 + size
}

fn toy_sample<T: Scalar>(cfg: &ToyConfig, rng: &mut ChaCha8Rng) -> ToySample<T> {
    let (n, c) = (cfg.image_size, cfg.cue_size);
    let mut px: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..cfg.noise)).collect();
    let label = rng.gen_range(0..TOY_CLASSES);
    let cue_at = (rng.gen_range(0..=n - c), rng.gen_range(0..=n - c));
    let mut placed = vec![cue_at];
    let stamp = |px: &mut Vec<f64>, at: (usize, usize), kind: usize, level: f64, framed: bool| {
        for dy in 0..c {
            for dx in 0..c {
                let edge = dx == 0 || dy == 0 || dx == c - 1 || dy == c - 1;
                let v = if framed && edge {
                    1.0
                } else {
                    level * texture(kind, dx, dy)
                };
                let i = (at.1 + dy) * n + at.0 + dx;
                px[i] = px[i].max(v);
            }
        }
    };
    stamp(&mut px, cue_at, label, 1.0, true);
    for _ in 0..cfg.distractors {
        for _ in 0..50 {
            let at = (rng.gen_range(0..=n - c), rng.gen_range(0..=n - c));
            if placed.iter().all(|&p| !overlaps(p, at, c)) {
                placed.push(at);
                let kind = rng.gen_range(0..TOY_CLASSES);
                stamp(&mut px, at, kind, cfg.distractor_level, false);
                break;
            }
        }
    }
    let mut mask = vec![T::zero(); n * n];
    for y in cue_at.1..cue_at.1 + c {
        for x in cue_at.0..cue_at.0 + c {
            mask[y * n + x] = T::one();
        }
    }
    let pixels = Matrix::from_f64(n, n, &px);
    let (g, p) = (cfg.grid(), cfg.patch);
    let mut tokens = Matrix::zeros(g * g, p * p);
    for gr in 0..g {
        for gc in 0..g {
            for dy in 0..p {
                for dx in 0..p {
                    tokens.set(gr * g + gc, dy * p + dx, pixels.get(gr * p + dy, gc * p + dx));
                }
            }
        }
    }
    ToySample {
        pixels,
        tokens,
        label,
        cue_mask: AttentionMap::new(n, n, mask).expect("binary mask"),
        cue_at,
    }
}

pub fn toy_dataset<T: Scalar>(cfg: &ToyConfig, n: usize, seed: u64) -> Vec<ToySample<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| toy_sample(cfg, &mut rng)).collect()
}

/// Smooth stand-in for an IA prediction: a Gaussian centred on the cue.
fn pseudo_target<T: Scalar>(cfg: &ToyConfig, s: &ToySample<T>) -> AttentionMap<T> {
    let n = cfg.image_size;
    let half = cfg.cue_size as f64 / 2.0;
    let (cx, cy) = (s.cue_at.0 as f64 + half - 0.5, s.cue_at.1 as f64 + half - 0.5);
    let sigma2 = 2.0 * half * half;
    let v: Vec<T> = (0..n * n)
        .map(|i| {
            let (x, y) = ((i % n) as f64, (i / n) as f64);
            lit((-((x - cx).powi(2) + (y - cy).powi(2)) / sigma2).exp())
        })
        .collect();
    AttentionMap::new(n, n, v).expect("finite").max_normalized()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyHoiModel<T: Scalar> {
    pub config: ToyConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> ToyHoiModel<T> {
    pub fn init(config: ToyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let d = config.width;
        let tokens = config.grid() * config.grid();
        p.add_linear("embed", config.patch * config.patch, d, false, &mut rng);
        p.insert("pos", Matrix::randn(tokens, d, 0.1, &mut rng));
        p.add_norm("enc.ln1", d);
        add_attention(&mut p, "enc.attn", d, false, &mut rng);
        p.add_norm("enc.ln2", d);
        add_mlp(&mut p, "enc.mlp", d, config.mlp_hidden, d, false, &mut rng);
        p.add_norm("enc.out", d);
        p.insert("queries", Matrix::randn(config.queries, d, 1.0, &mut rng));
        p.add_norm("dec0.ln1", d);
        add_attention(&mut p, "dec0.self", d, false, &mut rng);
        p.add_norm("dec0.ln2", d);
        add_mlp(&mut p, "dec0.mlp", d, config.mlp_hidden, d, false, &mut rng);
        p.add_norm("dec1.ln1", d);
        add_attention(&mut p, "dec1.cross", d, false, &mut rng);
        p.add_norm("dec1.ln2", d);
        add_mlp(&mut p, "dec1.mlp", d, config.mlp_hidden, d, false, &mut rng);
        p.add_linear("head", d, TOY_CLASSES, false, &mut rng);
        Ok(ToyHoiModel { config, params: p })
    }

    /// Class logits (`1 x classes`) and the probe map (`grid x grid`).
    pub fn forward<'t>(&self, bound: &Bound<'t, T>, tokens: &Matrix<T>) -> (Var<'t, T>, Var<'t, T>) {
        let tape = bound.tape();
        let heads = self.config.heads;
        let mut x = bound
            .linear("embed", tape.constant(tokens.clone()))
            .add(bound.var("pos"));
        let h = bound.layer_norm("enc.ln1", x);
        x = x.add(bound.attention("enc.attn", h, h, heads).0);
        x = x.add(bound.mlp("enc.mlp", bound.layer_norm("enc.ln2", x)));
        let memory = bound.layer_norm("enc.out", x);

        let mut q = bound.var("queries");
        let h = bound.layer_norm("dec0.ln1", q);
        q = q.add(bound.attention("dec0.self", h, h, heads).0);
        q = q.add(bound.mlp("dec0.mlp", bound.layer_norm("dec0.ln2", q)));
        let (cross, probs) = bound.attention("dec1.cross", bound.layer_norm("dec1.ln1", q), memory, heads);
        q = q.add(cross);
        q = q.add(bound.mlp("dec1.mlp", bound.layer_norm("dec1.ln2", q)));
        let logits = bound.linear("head", q.mean_rows());

        let summed = probs[1..].iter().fold(probs[0], |acc, &p| acc.add(p));
        let g = self.config.grid();
        let map = summed
            .scale(lit(1.0 / heads as f64))
            .mean_rows()
            .reshape(g, g);
        (logits, map)
    }

    /// Predicted class and probe map.
    pub fn predict(&self, tokens: &Matrix<T>) -> Result<(usize, AttentionMap<T>)> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let (logits, map) = self.forward(&bound, tokens);
        let l = logits.value();
        let class = (0..l.cols())
            .fold(0, |best, j| if l.get(0, j) > l.get(0, best) { j } else { best });
        Ok((class, AttentionMap::from_matrix((*map.value()).clone())?))
    }
}

impl<T: Scalar> HostAttentionProbe<T> for ToyHoiModel<T> {
    type Input = ToySample<T>;

    fn attention_map(&self, input: &ToySample<T>) -> Result<AttentionMap<T>> {
        Ok(self.predict(&input.tokens)?.1)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ToyReport<T: Scalar> {
    pub seed: u64,
    pub align: Option<AlignmentConfig>,
    /// Held-out label accuracy.
    pub accuracy: f64,
    /// Mean share of probe attention on grid cells touched by the cue.
    pub in_mask_fraction: f64,
    pub loss_log: Vec<f64>,
    /// Probe maps of the first held-out samples.
    #[serde(skip)]
    pub attention: Vec<AttentionMap<T>>,
    #[serde(skip)]
    pub test_samples: Vec<ToySample<T>>,
}

fn in_mask_fraction<T: Scalar>(map: &AttentionMap<T>, cue_mask: &AttentionMap<T>) -> Result<f64> {
    let pooled = resize_map(cue_mask, map.rows(), map.cols(), ResizeMode::AdaptiveMax)?;
    let total: f64 = map.values().iter().map(|v| v.to_f64_lossy()).sum();
    let inside: f64 = map
        .values()
        .iter()
        .zip(pooled.values())
        .filter(|(_, &m)| m > T::zero())
        .map(|(v, _)| v.to_f64_lossy())
        .sum();
    Ok(inside / total)
}

/// Number of held-out probe maps kept in the report.
const KEPT_MAPS: usize = 4;

/// Trains the toy host with the raw classification loss, plus the weighted
/// alignment term when `align` is given. Training and test images are drawn
/// from `seed`-derived streams.
pub fn train_toy<T: Scalar>(
    cfg: &ToyConfig,
    align: Option<&AlignmentConfig>,
    seed: u64,
) -> Result<(ToyHoiModel<T>, ToyReport<T>)> {
    cfg.validate()?;
    if let Some(a) = align {
        a.validate()?;
    }
    let train: Vec<ToySample<T>> = toy_dataset(cfg, cfg.n_train, seed.wrapping_mul(2).wrapping_add(1));
    let test: Vec<ToySample<T>> = toy_dataset(cfg, cfg.n_test, seed.wrapping_mul(2).wrapping_add(2));
    let targets: Vec<AttentionMap<T>> = match align.map(|a| a.source) {
        Some(AlignSource::IaPseudo) => train.iter().map(|s| pseudo_target(cfg, s)).collect(),
        _ => train.iter().map(|s| s.cue_mask.clone()).collect(),
    };

    let mut model = ToyHoiModel::init(cfg.clone(), seed)?;
    let opt_cfg = TrainConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..TrainConfig::default()
    };
    let mut opt = AdamW::new(&opt_cfg, &model.params);
    let mut loss_log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000 + epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let tape = Tape::new();
            let bound = model.params.bind(&tape, true);
            let mut losses = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (logits, map) = model.forward(&bound, &train[i].tokens);
                let raw = logits.softmax_cross_entropy(train[i].label);
                let loss = match align {
                    None => raw,
                    Some(a) => raw
                        .scale(lit(a.lambda1))
                        .add(alignment_loss_var(map, &targets[i])?.scale(lit(a.lambda2))),
                };
                losses.push(loss);
            }
            let loss = losses[1..]
                .iter()
                .fold(losses[0], |acc, &l| acc.add(l))
                .scale(lit(1.0 / chunk.len() as f64));
            let value = loss.value().data()[0].to_f64_lossy();
            if !value.is_finite() {
                return Err(IaError::NonFinite { epoch, step });
            }
            let mut grads = tape.backward(loss);
            let grads = bound.gradients(&mut grads);
            drop(bound);
            opt.step(&mut model.params, &grads, lit(cfg.lr));
            total += value * chunk.len() as f64;
        }
        loss_log.push(total / train.len() as f64);
    }

    let mut correct = 0;
    let mut fraction = 0.0;
    let mut attention = Vec::new();
    for (k, s) in test.iter().enumerate() {
        let (class, map) = model.predict(&s.tokens)?;
        correct += usize::from(class == s.label);
        fraction += in_mask_fraction(&map, &s.cue_mask)?;
        if k < KEPT_MAPS {
            attention.push(map);
        }
    }
    let n = test.len().max(1) as f64;
    let report = ToyReport {
        seed,
        align: align.copied(),
        accuracy: correct as f64 / n,
        in_mask_fraction: fraction / n,
        loss_log,
        attention,
        test_samples: test.into_iter().take(KEPT_MAPS).collect(),
    };
    Ok((model, report))
}
