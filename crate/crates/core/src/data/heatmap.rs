use crate::error::{IaError, Result};
use crate::scalar::{lit, Scalar};
use crate::tensor::Matrix;

use super::sample::FixationSet;

/// Dense heatmap over pixels or a token grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap<T: Scalar> {
    grid: Matrix<T>,
}

impl<T: Scalar> AttentionMap<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(IaError::arg("attention map dimensions must be positive"));
        }
        if values.len() != rows * cols {
            return Err(IaError::arg(format!(
                "{rows}x{cols} map needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IaError::arg("attention map values must be finite"));
        }
        Ok(AttentionMap {
            grid: Matrix::from_vec(rows, cols, values),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        AttentionMap {
            grid: Matrix::zeros(rows, cols),
        }
    }

    pub fn from_matrix(grid: Matrix<T>) -> Result<Self> {
        let (r, c) = grid.shape();
        Self::new(r, c, grid.into_data())
    }

    pub fn from_rows_f64(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let values = rows.iter().flat_map(|row| row.iter().map(|&v| lit(v))).collect();
        Self::new(r, c, values)
    }

    pub fn rows(&self) -> usize {
        self.grid.rows()
    }

    pub fn cols(&self) -> usize {
        self.grid.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.grid.shape()
    }

    pub fn values(&self) -> &[T] {
        self.grid.data()
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.grid.get(row, col)
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.grid
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.grid
    }

    pub fn max(&self) -> T {
        self.grid.max()
    }

    pub fn min(&self) -> T {
        self.grid.min()
    }

    /// Divides by the maximum; an all-zero map is returned unchanged.
    pub fn max_normalized(&self) -> Self {
        let m = self.max();
        if m > T::zero() {
            AttentionMap {
                grid: self.grid.map(|v| v / m),
            }
        } else {
            self.clone()
        }
    }

    /// Max value 1 (within `tol`) and no negative entries.
    pub fn is_max_normalized(&self, tol: T) -> bool {
        self.min() >= T::zero() && (self.max() - T::one()).abs() <= tol
    }

    pub fn cast<U: Scalar>(&self) -> AttentionMap<U> {
        AttentionMap {
            grid: self.grid.cast(),
        }
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values().iter().enumerate() {
            if v > self.values()[best] {
                best = i;
            }
        }
        (best / self.cols(), best % self.cols())
    }
}

/// Default Gaussian width: 19 px at 640 px image width, scaled linearly.
pub fn default_sigma(width: u32) -> f64 {
    19.0 * f64::from(width) / 640.0
}

/// Sum of isotropic Gaussians centred on each fixation, max-normalized.
///
/// Pixel `(r, c)` is evaluated at coordinates `(x = c, y = r)`. All observers
/// contribute to one map. Points are summed in a canonical order so the
/// result does not depend on the order they were recorded in.
pub fn fixations_to_heatmap<T: Scalar>(
    fixations: &FixationSet,
    width: u32,
    height: u32,
    sigma: f64,
) -> Result<AttentionMap<T>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(IaError::arg(format!("sigma must be positive, got {sigma}")));
    }
    if width == 0 || height == 0 {
        return Err(IaError::arg("heatmap dimensions must be positive"));
    }
    fixations
        .check_bounds(width, height)
        .map_err(IaError::Argument)?;
    let (w, h) = (width as usize, height as usize);
    let mut points: Vec<(f64, f64)> = fixations.points.iter().map(|p| (p.x, p.y)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let denom = 2.0 * sigma * sigma;
    let mut acc = vec![T::zero(); w * h];
    for (px, py) in points {
        let gx: Vec<T> = (0..w)
            .map(|c| lit(-((c as f64 - px).powi(2)) / denom))
            .map(|e: T| e.exp())
            .collect();
        for r in 0..h {
            let gy: T = lit::<T>(-((r as f64 - py).powi(2)) / denom).exp();
            let row = &mut acc[r * w..(r + 1) * w];
            for (a, &g) in row.iter_mut().zip(&gx) {
                *a = *a + gy * g;
            }
        }
    }
    Ok(AttentionMap::new(h, w, acc)?.max_normalized())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeMode {
    Bilinear,
    AdaptiveMax,
}

/// Row-interpolation matrix (`dst x src`) for half-pixel-centre bilinear
/// resampling, matching the align-corners-false convention.
pub fn bilinear_matrix<T: Scalar>(src: usize, dst: usize) -> Matrix<T> {
    let mut m = Matrix::zeros(dst, src);
    let scale = src as f64 / dst as f64;
    for d in 0..dst {
        let s = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(src - 1);
        let i1 = (i0 + 1).min(src - 1);
        let frac = s - i0 as f64;
        let frac = if i0 == i1 { 0.0 } else { frac };
        m.set(d, i0, m.get(d, i0) + lit(1.0 - frac));
        if frac > 0.0 {
            m.set(d, i1, m.get(d, i1) + lit(frac));
        }
    }
    m
}

/// Source index range `[start, end)` of output bin `i` when partitioning
/// `src` cells into `dst` bins.
pub fn adaptive_bin(i: usize, src: usize, dst: usize) -> (usize, usize) {
    let start = i * src / dst;
    let end = ((i + 1) * src / dst).max(start + 1).min(src);
    (start, end)
}

pub fn resize_map<T: Scalar>(
    map: &AttentionMap<T>,
    rows: usize,
    cols: usize,
    mode: ResizeMode,
) -> Result<AttentionMap<T>> {
    if rows == 0 || cols == 0 {
        return Err(IaError::arg("target dimensions must be positive"));
    }
    let (r, c) = map.shape();
    if (r, c) == (rows, cols) {
        return Ok(map.clone());
    }
    let grid = match mode {
        ResizeMode::Bilinear => {
            let ur = bilinear_matrix::<T>(r, rows);
            let uc = bilinear_matrix::<T>(c, cols);
            ur.matmul(map.as_matrix()).matmul(&uc.transpose())
        }
        ResizeMode::AdaptiveMax => {
            let mut out = Matrix::zeros(rows, cols);
            for i in 0..rows {
                let (r0, r1) = adaptive_bin(i, r, rows);
                for j in 0..cols {
                    let (c0, c1) = adaptive_bin(j, c, cols);
                    let mut best = T::neg_infinity();
                    for rr in r0..r1 {
                        for cc in c0..c1 {
                            best = best.max(map.get(rr, cc));
                        }
                    }
                    out.set(i, j, best);
                }
            }
            out
        }
    };
    AttentionMap::from_matrix(grid)
}
