//! Deterministic stand-in for a pretrained vision-language encoder.

use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{EncoderBackend, VisualTokens};
use crate::error::{IaError, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

const TEXT_DOMAIN: &[u8] = b"ia-mock-text";

/// Expands SHA-256 of `(seed, prompt, block index)` into `dim` values in
/// `[-1, 1]` and scales them to unit L2 norm.
///
/// Block `j` hashes `"ia-mock-text" || seed (u64 LE) || len(prompt) (u64 LE)
/// || prompt || j (u64 LE)`; every 8 digest bytes give one little-endian
/// `u64` mapped linearly onto `[-1, 1]`.
pub fn mock_encode<T: Scalar>(seed: u64, prompt: &str, dim: usize) -> Vec<T> {
    assert!(dim > 0, "mock embedding dimension must be positive");
    let mut raw = Vec::with_capacity(dim);
    let mut block = 0u64;
    while raw.len() < dim {
        let mut h = Sha256::new();
        h.update(TEXT_DOMAIN);
        h.update(seed.to_le_bytes());
        h.update((prompt.len() as u64).to_le_bytes());
        h.update(prompt.as_bytes());
        h.update(block.to_le_bytes());
        let digest = h.finalize();
        for chunk in digest.chunks_exact(8) {
            if raw.len() == dim {
                break;
            }
            let u = u64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            raw.push(u as f64 / u64::MAX as f64 * 2.0 - 1.0);
        }
        block += 1;
    }
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| T::from_f64_lossy(v / norm)).collect()
}

/// Mock backend: hashed text embeddings and a fixed random projection of
/// raw patch pixels for image tokens.
pub struct MockBackend<T: Scalar> {
    seed: u64,
    text_dim: usize,
    visual_dim: usize,
    patch: usize,
    image_size: usize,
    projection: Matrix<T>,
}

impl<T: Scalar> MockBackend<T> {
    pub fn new(seed: u64, text_dim: usize, visual_dim: usize, patch: usize, image_size: usize) -> Result<Self> {
        if text_dim == 0 || visual_dim == 0 || patch == 0 || image_size == 0 {
            return Err(IaError::Config("mock encoder dimensions must be positive".into()));
        }
        if image_size % patch != 0 {
            return Err(IaError::Config(format!(
                "image size {image_size} is not a multiple of patch size {patch}"
            )));
        }
        let fan_in = patch * patch * 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000_1a6e);
        let projection = Matrix::randn(fan_in, visual_dim, 1.0 / (fan_in as f64).sqrt(), &mut rng);
        Ok(MockBackend {
            seed,
            text_dim,
            visual_dim,
            patch,
            image_size,
            projection,
        })
    }

    /// Desk-scale defaults: 64-d text and visual features, 16 px patches.
    pub fn desk(seed: u64, image_size: usize) -> Result<Self> {
        Self::new(seed, 64, 64, 16, image_size)
    }
}

impl<T: Scalar> EncoderBackend<T> for MockBackend<T> {
    fn name(&self) -> &str {
        "mock"
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
        Ok(mock_encode(self.seed, prompt, self.text_dim))
    }

    fn encode_image(&self, image: &RgbImage) -> Result<VisualTokens<T>> {
        let s = self.image_size as u32;
        let resized = if image.dimensions() == (s, s) {
            image.clone()
        } else {
            imageops::resize(image, s, s, FilterType::Triangle)
        };
        let g = self.image_size / self.patch;
        let p = self.patch;
        let mut patches = Matrix::zeros(g * g, p * p * 3);
        for gr in 0..g {
            for gc in 0..g {
                let row = gr * g + gc;
                let mut k = 0;
                for y in 0..p {
                    for x in 0..p {
                        let px = resized.get_pixel((gc * p + x) as u32, (gr * p + y) as u32);
                        for ch in px.0 {
                            patches.set(row, k, T::from_f64_lossy(f64::from(ch) / 255.0 - 0.5));
                            k += 1;
                        }
                    }
                }
            }
        }
        VisualTokens::new(patches.matmul(&self.projection), g, g)
    }
}
