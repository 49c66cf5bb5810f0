//! The interactive attention network.
//!
//! Pipeline per sample: text triplet and box Fourier terms feed the
//! positional adapter (knowledge prototypes); projected patch tokens pass the
//! visual adapter; the human-object block attends over `[K_H, K_O, V']` and
//! keeps the visual positions; the interaction block adds gated attention to
//! `K_I` and a residual self-attention; a 1x1-conv head with batch norm
//! decodes one logit per patch, squashed and bilinearly upsampled to the
//! original image size.

use std::rc::Rc;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Component, IaConfig};
use super::fourier::fourier_embed;
use crate::data::heatmap::bilinear_matrix;
use crate::data::{AttentionMap, HoiSample};
use crate::encoders::{encode_triplet, EncoderBackend, TextTriplet, VisualTokens};
use crate::error::{IaError, Result};
use crate::scalar::{lit, Scalar};
use crate::tensor::nn::{add_attention, add_mlp};
use crate::tensor::{Bound, Matrix, ParamStore, Tape, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_MEAN: &str = "dec.bn.running_mean";
pub const BN_VAR: &str = "dec.bn.running_var";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in the decoder's batch norm.
    Train,
    /// Frozen running statistics.
    Eval,
}

/// Adapted text-side vectors `K_H`, `K_O`, `K_I`, each of width `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgePrototypes<T: Scalar> {
    pub human: Vec<T>,
    pub object: Vec<T>,
    pub interaction: Vec<T>,
}

/// Frozen-encoder outputs for one sample, computed once and reused.
#[derive(Clone, Debug)]
pub struct SampleFeatures<T: Scalar> {
    pub text: TextTriplet<T>,
    pub human_fourier: Vec<T>,
    pub object_fourier: Vec<T>,
    pub tokens: VisualTokens<T>,
    /// Output map size (the original image size).
    pub out_rows: usize,
    pub out_cols: usize,
}

impl<T: Scalar> SampleFeatures<T> {
    pub fn extract(
        sample: &HoiSample,
        image: &RgbImage,
        backend: &dyn EncoderBackend<T>,
        config: &IaConfig,
    ) -> Result<Self> {
        check_backend(backend, config)?;
        let text = encode_triplet(backend, &sample.object_label, &sample.interaction_label)?;
        let tokens = backend.encode_image(image)?;
        Self::from_parts(sample, text, tokens, config)
    }

    pub fn from_parts(
        sample: &HoiSample,
        text: TextTriplet<T>,
        tokens: VisualTokens<T>,
        config: &IaConfig,
    ) -> Result<Self> {
        let bands = config.n_bands();
        let hb = sample.human_box.normalized(sample.width, sample.height);
        let ob = sample.object_box.normalized(sample.width, sample.height);
        Ok(SampleFeatures {
            text,
            human_fourier: fourier_embed(&hb, bands)?,
            object_fourier: fourier_embed(&ob, bands)?,
            tokens,
            out_rows: sample.height as usize,
            out_cols: sample.width as usize,
        })
    }
}

fn check_backend<T: Scalar>(backend: &dyn EncoderBackend<T>, config: &IaConfig) -> Result<()> {
    let got = (
        backend.text_dim(),
        backend.visual_dim(),
        backend.patch_size(),
        backend.image_size(),
    );
    let want = (
        config.text_dim,
        config.visual_dim,
        config.patch_size,
        config.image_size,
    );
    if got != want {
        return Err(IaError::Config(format!(
            "encoder '{}' has (text, visual, patch, size) = {got:?}, model expects {want:?}",
            backend.name()
        )));
    }
    Ok(())
}

/// Output of one batched forward pass.
pub struct Forward<'t, T: Scalar> {
    /// One `H x W` map per sample, values in `(0, 1)`.
    pub maps: Vec<Var<'t, T>>,
    /// Batch mean and biased variance of the decoder's batch norm (train mode).
    pub bn_batch: Option<(Vec<T>, Vec<T>)>,
}

/// Parameters plus the configuration that shaped them.
#[derive(Clone, Debug, PartialEq)]
pub struct IaModel<T: Scalar> {
    pub config: IaConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> IaModel<T> {
    /// Residual-branch output projections and the ICB gate start at zero;
    /// every other weight matrix is Gaussian with standard deviation
    /// `1/sqrt(fan_in)`, biases zero.
    pub fn init(config: IaConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let d = config.model_width;
        let fd = if config.enabled(Component::Pa) {
            config.fourier_dim
        } else {
            0
        };
        add_mlp(&mut p, "pa.human", config.text_dim + fd, d, d, false, &mut rng);
        add_mlp(&mut p, "pa.object", config.text_dim + fd, d, d, false, &mut rng);
        add_mlp(&mut p, "pa.interaction", config.text_dim + 2 * fd, d, d, false, &mut rng);

        p.add_linear("proj", config.visual_dim, d, false, &mut rng);
        if config.enabled(Component::Va) {
            for l in 0..config.visual_adapter_layers {
                p.add_norm(&format!("va.{l}.ln1"), d);
                add_attention(&mut p, &format!("va.{l}.attn"), d, true, &mut rng);
                p.add_norm(&format!("va.{l}.ln2"), d);
                add_mlp(&mut p, &format!("va.{l}.mlp"), d, config.mlp_hidden, d, true, &mut rng);
            }
        }
        if config.enabled(Component::Hocb) {
            add_attention(&mut p, "hocb.attn", d, true, &mut rng);
        }
        if config.enabled(Component::Icb) {
            // A single key makes the cross-attention weights identically one,
            // so only the value and output projections carry signal.
            p.add_linear("icb.cross.v", d, d, false, &mut rng);
            p.add_linear("icb.cross.o", d, d, false, &mut rng);
            p.insert("icb.gate", Matrix::zeros(1, d));
            add_attention(&mut p, "icb.self", d, true, &mut rng);
        }
        let mid = config.decoder_mid_channels;
        p.add_linear("dec.conv1", d, mid, false, &mut rng);
        p.add_norm("dec.bn", mid);
        p.add_linear("dec.conv2", mid, 1, false, &mut rng);
        p.insert_buffer(BN_MEAN, Matrix::zeros(1, mid));
        p.insert_buffer(BN_VAR, Matrix::filled(1, mid, T::one()));
        Ok(IaModel { config, params: p })
    }

    /// Names of cross-attention parameters present (empty without the ICB).
    pub fn cross_attention_params(&self) -> Vec<String> {
        self.params
            .names()
            .into_iter()
            .filter(|n| n.contains("cross") || n.ends_with("gate"))
            .collect()
    }

    /// Positional adapter: `K_H = MLP([T_H, F(b_H)])`, `K_O = MLP([T_O, F(b_O)])`,
    /// `K_I = MLP([T_I, F(b_H), F(b_O)])`; Fourier terms dropped without the PA.
    pub fn positional_adapter<'t>(
        &self,
        bound: &Bound<'t, T>,
        f: &SampleFeatures<T>,
    ) -> [Var<'t, T>; 3] {
        let tape = bound.tape();
        let row = |v: &[T]| tape.constant(Matrix::row_vector(v.to_vec()));
        let with_pa = self.config.enabled(Component::Pa);
        let input = |text: &[T], boxes: &[&[T]]| {
            let mut parts = vec![row(text)];
            if with_pa {
                parts.extend(boxes.iter().map(|b| row(b)));
            }
            if parts.len() == 1 {
                parts[0]
            } else {
                tape.concat_cols(&parts)
            }
        };
        let kh = bound.mlp("pa.human", input(&f.text.human, &[&f.human_fourier]));
        let ko = bound.mlp("pa.object", input(&f.text.object, &[&f.object_fourier]));
        let ki = bound.mlp(
            "pa.interaction",
            input(&f.text.interaction, &[&f.human_fourier, &f.object_fourier]),
        );
        [kh, ko, ki]
    }

    /// Projects tokens to width `D` and applies the pre-norm encoder layers.
    pub fn visual_adapter<'t>(&self, bound: &Bound<'t, T>, tokens: Var<'t, T>) -> Var<'t, T> {
        let mut x = bound.linear("proj", tokens);
        if !self.config.enabled(Component::Va) {
            return x;
        }
        for l in 0..self.config.visual_adapter_layers {
            let h = bound.layer_norm(&format!("va.{l}.ln1"), x);
            let (a, _) = bound.attention(&format!("va.{l}.attn"), h, h, self.config.n_heads);
            x = x.add(a);
            let h = bound.layer_norm(&format!("va.{l}.ln2"), x);
            x = x.add(bound.mlp(&format!("va.{l}.mlp"), h));
        }
        x
    }

    /// Self-attention over `[K_H, K_O, V']`, keeping the `M` visual outputs as a residual.
    pub fn hocb<'t>(
        &self,
        bound: &Bound<'t, T>,
        v: Var<'t, T>,
        k_human: Var<'t, T>,
        k_object: Var<'t, T>,
    ) -> Var<'t, T> {
        if !self.config.enabled(Component::Hocb) {
            return v;
        }
        let m = v.shape().0;
        let seq = bound.tape().concat_rows(&[k_human, k_object, v]);
        let (out, _) = bound.attention("hocb.attn", seq, seq, self.config.n_heads);
        v.add(out.slice_rows(2, m + 2))
    }

    /// Gated cross-attention to `K_I`, then residual self-attention.
    pub fn icb<'t>(&self, bound: &Bound<'t, T>, v: Var<'t, T>, k_interaction: Var<'t, T>) -> Var<'t, T> {
        if !self.config.enabled(Component::Icb) {
            return v;
        }
        let value = bound.linear("icb.cross.v", k_interaction);
        let cross = bound.linear("icb.cross.o", value);
        let v_hoi = v.add_row(cross.mul(bound.var("icb.gate")));
        let (out, _) = bound.attention("icb.self", v_hoi, v_hoi, self.config.n_heads);
        v_hoi.add(out)
    }

    /// 1x1 conv, batch norm, ReLU, 1x1 conv to one channel, logistic, then
    /// bilinear upsampling of each sample's grid to its output size.
    pub fn decode<'t>(
        &self,
        bound: &Bound<'t, T>,
        features: &[Var<'t, T>],
        grids: &[(usize, usize, usize, usize)],
        mode: Mode,
    ) -> Result<(Vec<Var<'t, T>>, Option<(Vec<T>, Vec<T>)>)> {
        let tape = bound.tape();
        for (f, &(gr, gc, _, _)) in features.iter().zip(grids) {
            if f.shape().0 != gr * gc {
                return Err(IaError::Config(format!(
                    "{} tokens do not form a {gr}x{gc} grid",
                    f.shape().0
                )));
            }
        }
        let stacked = if features.len() == 1 {
            features[0]
        } else {
            tape.concat_rows(features)
        };
        let h = bound.linear("dec.conv1", stacked);
        let (normed, stats) = match mode {
            Mode::Train => {
                let (n, mean, var) = h.batch_norm_cols(lit(BN_EPS));
                (n, Some((mean, var)))
            }
            Mode::Eval => {
                let mean = self.params.buffer(BN_MEAN).expect("running mean");
                let var = self.params.buffer(BN_VAR).expect("running var");
                let scale = var.map(|v| T::one() / (v + lit(BN_EPS)).sqrt());
                let shift = mean.zip_map(&scale, |m, s| -m * s);
                let n = h.mul_row(tape.constant(scale)).add_row(tape.constant(shift));
                (n, None)
            }
        };
        let a = normed
            .mul_row(bound.var("dec.bn.g"))
            .add_row(bound.var("dec.bn.b"))
            .relu();
        let probs = bound.linear("dec.conv2", a).sigmoid();
        let mut maps = Vec::with_capacity(features.len());
        let mut offset = 0;
        for &(gr, gc, out_r, out_c) in grids {
            let m = gr * gc;
            let grid = probs.slice_rows(offset, offset + m).reshape(gr, gc);
            offset += m;
            let map = if (gr, gc) == (out_r, out_c) {
                grid
            } else {
                let ur = tape.constant(bilinear_matrix::<T>(gr, out_r));
                let uc = tape.constant(bilinear_matrix::<T>(gc, out_c).transpose());
                ur.matmul(grid).matmul(uc)
            };
            maps.push(map);
        }
        Ok((maps, stats))
    }

    /// Batched forward pass. `prototypes` replaces the adapter's `K_H, K_O, K_I`
    /// per sample when given.
    pub fn forward<'t>(
        &self,
        bound: &Bound<'t, T>,
        batch: &[&SampleFeatures<T>],
        mode: Mode,
        prototypes: Option<&[KnowledgePrototypes<T>]>,
    ) -> Result<Forward<'t, T>> {
        if batch.is_empty() {
            return Err(IaError::arg("empty batch"));
        }
        let tape = bound.tape();
        let mut feats = Vec::with_capacity(batch.len());
        let mut grids = Vec::with_capacity(batch.len());
        for (i, f) in batch.iter().enumerate() {
            if f.tokens.tokens.cols() != self.config.visual_dim {
                return Err(IaError::Config(format!(
                    "visual tokens have width {}, model expects {}",
                    f.tokens.tokens.cols(),
                    self.config.visual_dim
                )));
            }
            let [kh, ko, ki] = match prototypes {
                Some(p) => {
                    let k = &p[i];
                    let row = |v: &[T]| tape.constant(Matrix::row_vector(v.to_vec()));
                    [row(&k.human), row(&k.object), row(&k.interaction)]
                }
                None => self.positional_adapter(bound, f),
            };
            let v = self.visual_adapter(bound, tape.constant(f.tokens.tokens.clone()));
            let v = self.hocb(bound, v, kh, ko);
            let v = self.icb(bound, v, ki);
            feats.push(v);
            grids.push((f.tokens.grid_rows, f.tokens.grid_cols, f.out_rows, f.out_cols));
        }
        let (maps, bn_batch) = self.decode(bound, &feats, &grids, mode)?;
        Ok(Forward { maps, bn_batch })
    }

    /// Evaluation-mode prediction for one sample.
    pub fn predict_features(&self, f: &SampleFeatures<T>) -> Result<AttentionMap<T>> {
        self.predict_with(f, None)
    }

    pub fn predict_with(
        &self,
        f: &SampleFeatures<T>,
        prototypes: Option<&KnowledgePrototypes<T>>,
    ) -> Result<AttentionMap<T>> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let protos = prototypes.map(|p| std::slice::from_ref(p));
        let out = self.forward(&bound, &[f], Mode::Eval, protos)?;
        let value = out.maps[0].value();
        AttentionMap::from_matrix((*value).clone())
    }

    pub fn prototypes(&self, f: &SampleFeatures<T>) -> KnowledgePrototypes<T> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let [kh, ko, ki] = self.positional_adapter(&bound, f);
        KnowledgePrototypes {
            human: kh.value().data().to_vec(),
            object: ko.value().data().to_vec(),
            interaction: ki.value().data().to_vec(),
        }
    }

    /// Full pipeline from a raw sample and image.
    pub fn predict(
        &self,
        sample: &HoiSample,
        image: &RgbImage,
        backend: &dyn EncoderBackend<T>,
    ) -> Result<AttentionMap<T>> {
        let f = SampleFeatures::extract(sample, image, backend, &self.config)?;
        self.predict_features(&f)
    }

    /// Folds a training batch's statistics into the running estimates.
    pub fn update_running_stats(&mut self, mean: &[T], var: &[T], batch_rows: usize) {
        let m: T = lit(BN_MOMENTUM);
        let unbias: T = if batch_rows > 1 {
            lit(batch_rows as f64 / (batch_rows as f64 - 1.0))
        } else {
            T::one()
        };
        let rm = self.params.buffer_mut(BN_MEAN).expect("running mean");
        for (r, &b) in rm.data_mut().iter_mut().zip(mean) {
            *r = (T::one() - m) * *r + m * b;
        }
        let rv = self.params.buffer_mut(BN_VAR).expect("running var");
        for (r, &b) in rv.data_mut().iter_mut().zip(var) {
            *r = (T::one() - m) * *r + m * b * unbias;
        }
    }
}

/// Mean clamped binary cross-entropy, `eps = 1e-7`.
pub const BCE_EPS: f64 = 1e-7;

/// Loss between a prediction in `(0, 1)` and a target in `[0, 1]`.
pub fn bce_loss<T: Scalar>(pred: &AttentionMap<T>, target: &AttentionMap<T>) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(IaError::arg(format!(
            "prediction {:?} and target {:?} differ in shape",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(crate::tensor::bce_value(
        pred.as_matrix(),
        target.as_matrix(),
        lit(BCE_EPS),
    ))
}

/// Graph version of [`bce_loss`].
pub fn bce_var<'t, T: Scalar>(pred: Var<'t, T>, target: &AttentionMap<T>) -> Var<'t, T> {
    pred.bce(Rc::new(target.as_matrix().clone()), lit(BCE_EPS))
}
