//! Backend serving features exported from a real pretrained vision-language
//! encoder.
//!
//! Layout under `<cache>/<profile>/`:
//! - `text.jsonl`: one `{"prompt": "...", "embedding": [...]}` per line
//! - `images/<key>.ighm`: an `M x visual_dim` token matrix in the IGHM layout,
//!   where `<key>` is [`image_key`] of the model-resolution RGB image.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{EncoderBackend, EncoderKind, VisualTokens};
use crate::data::format::read_ighm;
use crate::error::{IaError, Result};
use crate::scalar::Scalar;

/// Square input resolution of both pretrained profiles.
pub const MODEL_RESOLUTION: usize = 224;

/// Hex SHA-256 over `width (u32 LE) || height (u32 LE) || raw RGB bytes`.
pub fn image_key(image: &RgbImage) -> String {
    let mut h = Sha256::new();
    h.update(image.width().to_le_bytes());
    h.update(image.height().to_le_bytes());
    h.update(image.as_raw());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Deserialize)]
struct TextLine {
    prompt: String,
    embedding: Vec<f64>,
}

pub struct PrecomputedBackend {
    kind: EncoderKind,
    root: PathBuf,
    text: HashMap<String, Vec<f64>>,
    text_dim: usize,
    visual_dim: usize,
    patch: usize,
    image_size: usize,
}

impl PrecomputedBackend {
    pub fn open(cache_dir: &Path, kind: EncoderKind) -> Result<Self> {
        let (text_dim, visual_dim, patch) = kind
            .profile()
            .ok_or_else(|| IaError::Config("mock encoder has no feature cache".into()))?;
        let name = kind.as_str();
        let root = cache_dir.join(name);
        let fail = |message: String| IaError::Backend {
            backend: name.to_owned(),
            message,
        };
        let text_path = root.join("text.jsonl");
        let file = File::open(&text_path).map_err(|e| {
            fail(format!(
                "cannot open {} ({e}); export features there or use the mock encoder",
                text_path.display()
            ))
        })?;
        let mut text = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TextLine = serde_json::from_str(&line)
                .map_err(|e| fail(format!("text.jsonl line {}: {e}", i + 1)))?;
            if parsed.embedding.len() != text_dim {
                return Err(fail(format!(
                    "text.jsonl line {}: expected {text_dim} values, got {}",
                    i + 1,
                    parsed.embedding.len()
                )));
            }
            text.insert(parsed.prompt, parsed.embedding);
        }
        Ok(PrecomputedBackend {
            kind,
            root,
            text,
            text_dim,
            visual_dim,
            patch,
            image_size: MODEL_RESOLUTION,
        })
    }

    fn fail(&self, message: String) -> IaError {
        IaError::Backend {
            backend: self.kind.as_str().to_owned(),
            message,
        }
    }
}

impl<T: Scalar> EncoderBackend<T> for PrecomputedBackend {
    fn name(&self) -> &str {
        self.kind.as_str()
    }

    fn text_dim(&self) -> usize {
        self.text_dim
    }

    fn visual_dim(&self) -> usize {
        self.visual_dim
    }

    fn patch_size(&self) -> usize {
        self.patch
    }

    fn image_size(&self) -> usize {
        self.image_size
    }

    fn encode_text(&self, prompt: &str) -> Result<Vec<T>> {
        let e = self
            .text
            .get(prompt)
            .ok_or_else(|| self.fail(format!("no cached embedding for prompt '{prompt}'")))?;
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(self.fail(format!("degenerate embedding for prompt '{prompt}'")));
        }
        Ok(e.iter().map(|v| T::from_f64_lossy(v / norm)).collect())
    }

    fn encode_image(&self, image: &RgbImage) -> Result<VisualTokens<T>> {
        let s = self.image_size as u32;
        let resized = imageops::resize(image, s, s, FilterType::Triangle);
        let path = self.root.join("images").join(format!("{}.ighm", image_key(&resized)));
        let grid = read_ighm::<T>(&path)
            .map_err(|e| self.fail(format!("{}: {e}", path.display())))?;
        let g = self.image_size / self.patch;
        if grid.shape() != (g * g, self.visual_dim) {
            return Err(self.fail(format!(
                "{}: expected {}x{} tokens, found {}x{}",
                path.display(),
                g * g,
                self.visual_dim,
                grid.rows(),
                grid.cols()
            )));
        }
        VisualTokens::new(grid.into_matrix(), g, g)
    }
}
