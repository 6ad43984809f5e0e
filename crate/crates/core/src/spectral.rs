//! Singular-value tools: top-k spectra of region slopes, log-volumes,
//! pseudo-inverses and the semi-orthogonal sketch used to shrink tall
//! Jacobians before decomposition.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Additive guard inside `log(sigma + eps)`.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Singular values below `RANK_CUTOFF * sigma_max` count as zero.
pub const RANK_CUTOFF: f64 = 1e-10;

/// The `k` largest singular values of a matrix, in descending order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTopK {
    values: Vec<f64>,
}

impl SpectrumTopK {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("spectrum needs at least one value"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input("singular values must be finite and nonnegative"));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::input("singular values must be in descending order"));
        }
        Ok(SpectrumTopK { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// `sum_i log(sigma_i + eps)`.
    pub fn log_volume(&self, eps: f64) -> f64 {
        log_volume(self, eps)
    }
}

fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("matrix has non-finite entries"));
    }
    Ok(())
}

/// All `min(rows, cols)` singular values, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_finite(a)?;
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let mut values: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}

pub fn top_k_singular_values(a: &DMatrix<f64>, k: usize) -> Result<SpectrumTopK> {
    let max_k = a.nrows().min(a.ncols());
    if k == 0 || k > max_k {
        return Err(Error::input(format!("k = {k} outside 1..={max_k}")));
    }
    let mut values = singular_values(a)?;
    values.truncate(k);
    Ok(SpectrumTopK { values })
}

pub fn log_volume(spectrum: &SpectrumTopK, eps: f64) -> f64 {
    spectrum.values.iter().map(|s| (s + eps).ln()).sum()
}

/// Half the log pseudo-determinant of `AᵀA`: `sum log sigma_i` over the
/// singular values above the rank cutoff. Zero matrices give 0 (empty sum).
pub fn half_log_pdet(sigma: &[f64]) -> f64 {
    let top = sigma.first().copied().unwrap_or(0.0);
    sigma
        .iter()
        .filter(|&&s| s > 0.0 && s > RANK_CUTOFF * top)
        .map(|s| s.ln())
        .sum()
}

/// Numerical rank under the shared cutoff.
pub fn rank(sigma: &[f64]) -> usize {
    let top = sigma.first().copied().unwrap_or(0.0);
    sigma.iter().filter(|&&s| s > 0.0 && s > RANK_CUTOFF * top).count()
}

/// Moore-Penrose pseudo-inverse with the shared rank cutoff.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite(a)?;
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max();
    let tol = RANK_CUTOFF * top;
    let u = svd.u.expect("requested u");
    let v_t = svd.v_t.expect("requested v_t");
    let mut pinv = DMatrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > 0.0 && s > tol {
            pinv += v_t.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    Ok(pinv)
}

/// Seeded `rows x cols` matrix with orthonormal rows (`W Wᵀ = I`).
///
/// Rows of a standard Gaussian matrix are orthonormalized through a QR
/// factorization of its transpose.
pub fn random_semi_orthogonal(rows: usize, cols: usize, seed: u64) -> Result<DMatrix<f64>> {
    if rows == 0 || rows > cols {
        return Err(Error::input(format!("need 0 < rows <= cols, got {rows}x{cols}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let gaussian = DMatrix::<f64>::from_fn(cols, rows, |_, _| rng.sample(StandardNormal));
    let qr = gaussian.qr();
    let mut q = qr.q();
    // fix the sign ambiguity of QR so the draw is Haar distributed
    let r = qr.r();
    for j in 0..rows {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q.transpose())
}

/// Sketch height used when none is given: `min(D, 4k)`.
pub fn default_sketch_rows(output_dim: usize, k: usize) -> usize {
    output_dim.min(4 * k).max(1)
}

/// Top-k singular values of `W A`.
pub fn sketch_spectrum(a: &DMatrix<f64>, w: &DMatrix<f64>, k: usize) -> Result<SpectrumTopK> {
    if w.ncols() != a.nrows() {
        return Err(Error::input(format!(
            "sketch has {} columns but matrix has {} rows",
            w.ncols(),
            a.nrows()
        )));
    }
    top_k_singular_values(&(w * a), k)
}
