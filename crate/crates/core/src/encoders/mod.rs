//! Text/image encoder contract, prompt construction, and the backends.

mod mock;
mod precomputed;
mod prompt;

use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

pub use mock::{mock_encode, MockBackend};
pub use precomputed::{image_key, PrecomputedBackend, MODEL_RESOLUTION};
pub use prompt::{build_prompts, Prompts, HUMAN_PROMPT};

use crate::data::AttentionMap;
use crate::error::{IaError, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Frozen text and image encoder. Implementations must be deterministic:
/// equal inputs give bitwise-equal outputs, and text embeddings have unit norm.
pub trait EncoderBackend<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;
    fn text_dim(&self) -> usize;
    fn visual_dim(&self) -> usize;
    fn patch_size(&self) -> usize;
    /// Square resolution images are resized to before encoding.
    fn image_size(&self) -> usize;
    fn encode_text(&self, prompt: &str) -> Result<Vec<T>>;
    /// Patch tokens only; any summary token is dropped.
    fn encode_image(&self, image: &RgbImage) -> Result<VisualTokens<T>>;
}

/// `M x dim` patch tokens laid out row-major over a `grid_rows x grid_cols` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualTokens<T: Scalar> {
    pub tokens: Matrix<T>,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl<T: Scalar> VisualTokens<T> {
    pub fn new(tokens: Matrix<T>, grid_rows: usize, grid_cols: usize) -> Result<Self> {
        if tokens.rows() != grid_rows * grid_cols {
            return Err(IaError::Config(format!(
                "{} tokens do not fill a {grid_rows}x{grid_cols} grid",
                tokens.rows()
            )));
        }
        if !tokens.all_finite() {
            return Err(IaError::Config("visual tokens must be finite".into()));
        }
        Ok(VisualTokens {
            tokens,
            grid_rows,
            grid_cols,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextTriplet<T: Scalar> {
    pub human: Vec<T>,
    pub object: Vec<T>,
    pub interaction: Vec<T>,
}

pub fn encode_triplet<T: Scalar>(
    backend: &dyn EncoderBackend<T>,
    object_label: &str,
    interaction_label: &str,
) -> Result<TextTriplet<T>> {
    let prompts = build_prompts(object_label, interaction_label)?;
    let wrap = |e: IaError| match e {
        e @ IaError::Backend { .. } => e,
        other => IaError::Backend {
            backend: backend.name().to_owned(),
            message: other.to_string(),
        },
    };
    Ok(TextTriplet {
        human: backend.encode_text(&prompts.human).map_err(wrap)?,
        object: backend.encode_text(&prompts.object).map_err(wrap)?,
        interaction: backend.encode_text(&prompts.interaction).map_err(wrap)?,
    })
}

/// Cosine similarity of every patch token to a vector, min-max normalized
/// over the grid. A zero-range map is returned as all zeros.
pub fn similarity_map<T: Scalar>(tokens: &VisualTokens<T>, text: &[T]) -> Result<AttentionMap<T>> {
    if tokens.tokens.cols() != text.len() {
        return Err(IaError::Config(format!(
            "token width {} differs from text width {}",
            tokens.tokens.cols(),
            text.len()
        )));
    }
    let tn = text.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
    let sims: Vec<T> = (0..tokens.len())
        .map(|i| {
            let row = tokens.tokens.row(i);
            let dot = row.iter().zip(text).fold(T::zero(), |a, (&x, &y)| a + x * y);
            let rn = row.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            let denom = rn * tn;
            if denom > T::zero() {
                dot / denom
            } else {
                T::zero()
            }
        })
        .collect();
    let lo = sims.iter().fold(T::infinity(), |a, &b| a.min(b));
    let hi = sims.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let range = hi - lo;
    let values = if range > T::zero() {
        sims.iter().map(|&s| (s - lo) / range).collect()
    } else {
        vec![T::zero(); sims.len()]
    };
    AttentionMap::new(tokens.grid_rows, tokens.grid_cols, values)
}

/// Raw vision-language baseline: image tokens against the embedded prompt.
pub fn clip_similarity_map<T: Scalar>(
    backend: &dyn EncoderBackend<T>,
    image: &RgbImage,
    prompt: &str,
) -> Result<AttentionMap<T>> {
    let tokens = backend.encode_image(image)?;
    let text = backend.encode_text(prompt)?;
    similarity_map(&tokens, &text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum EncoderKind {
    #[default]
    #[serde(rename = "mock")]
    Mock,
    #[serde(rename = "pretrained-base")]
    PretrainedBase,
    #[serde(rename = "pretrained-large")]
    PretrainedLarge,
}

impl EncoderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EncoderKind::Mock => "mock",
            EncoderKind::PretrainedBase => "pretrained-base",
            EncoderKind::PretrainedLarge => "pretrained-large",
        }
    }

    /// `(text_dim, visual_dim, patch)` of the pretrained profiles.
    pub fn profile(&self) -> Option<(usize, usize, usize)> {
        match self {
            EncoderKind::Mock => None,
            EncoderKind::PretrainedBase => Some((512, 768, 16)),
            EncoderKind::PretrainedLarge => Some((768, 1024, 14)),
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = IaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(EncoderKind::Mock),
            "pretrained-base" => Ok(EncoderKind::PretrainedBase),
            "pretrained-large" => Ok(EncoderKind::PretrainedLarge),
            other => Err(IaError::arg(format!("unknown encoder backend '{other}'"))),
        }
    }
}

/// Everything needed to rebuild a backend; stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub backend: EncoderKind,
    pub seed: u64,
    pub text_dim: usize,
    pub visual_dim: usize,
    pub patch_size: usize,
    pub image_size: usize,
}

impl EncoderSpec {
    pub fn mock(seed: u64, image_size: usize) -> Self {
        EncoderSpec {
            backend: EncoderKind::Mock,
            seed,
            text_dim: 64,
            visual_dim: 64,
            patch_size: 16,
            image_size,
        }
    }

    pub fn pretrained(kind: EncoderKind) -> Self {
        let (text_dim, visual_dim, patch_size) = kind.profile().unwrap_or((64, 64, 16));
        EncoderSpec {
            backend: kind,
            seed: 0,
            text_dim,
            visual_dim,
            patch_size,
            image_size: MODEL_RESOLUTION,
        }
    }

    pub fn build<T: Scalar>(&self, cache_dir: Option<&Path>) -> Result<Box<dyn EncoderBackend<T>>> {
        match self.backend {
            EncoderKind::Mock => Ok(Box::new(MockBackend::new(
                self.seed,
                self.text_dim,
                self.visual_dim,
                self.patch_size,
                self.image_size,
            )?)),
            kind => {
                let dir = cache_dir.ok_or_else(|| IaError::Backend {
                    backend: kind.as_str().to_owned(),
                    message: "set IA_CACHE_DIR to the exported feature cache".into(),
                })?;
                Ok(Box::new(PrecomputedBackend::open(dir, kind)?))
            }
        }
    }
}
