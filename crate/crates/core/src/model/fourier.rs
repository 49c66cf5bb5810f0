use crate::error::{IaError, Result};
use crate::scalar::{lit, Scalar};

/// For each coordinate `c` and band `k`, appends `sin(2^k pi c)` then
/// `cos(2^k pi c)`. Output length is `2 * coords.len() * n_bands`.
pub fn fourier_embed<T: Scalar>(coords: &[f64], n_bands: usize) -> Result<Vec<T>> {
    if n_bands == 0 {
        return Err(IaError::arg("fourier embedding needs at least one band"));
    }
    let mut out = Vec::with_capacity(2 * coords.len() * n_bands);
    for &c in coords {
        if !(0.0..=1.0).contains(&c) {
            return Err(IaError::arg(format!(
                "fourier coordinate {c} is outside [0, 1]"
            )));
        }
        let mut freq = std::f64::consts::PI;
        for _ in 0..n_bands {
            out.push(lit((freq * c).sin()));
            out.push(lit((freq * c).cos()));
            freq *= 2.0;
        }
    }
    Ok(out)
}
