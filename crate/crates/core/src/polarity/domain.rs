use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latent prior the candidate pool is drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatentDomain {
    /// Uniform over the box `[lo, hi]` (per dimension).
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Independent Gaussians.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    /// Gaussian restricted to `mean ± psi * 2 * std` (the truncation baseline).
    TruncatedGaussian { mean: Vec<f64>, std: Vec<f64>, psi: f64 },
}

impl LatentDomain {
    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = LatentDomain::UniformBox { lo, hi };
        d.validate()?;
        Ok(d)
    }

    /// `[-half, half]^dim`.
    pub fn symmetric_box(dim: usize, half: f64) -> Result<Self> {
        Self::uniform_box(vec![-half; dim], vec![half; dim])
    }

    pub fn gaussian(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        let d = LatentDomain::Gaussian { mean, std };
        d.validate()?;
        Ok(d)
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        LatentDomain::Gaussian { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        match self {
            LatentDomain::UniformBox { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return bad(format!("box bounds have lengths {} and {}", lo.len(), hi.len()));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
                    return bad("box needs finite lo < hi in every dimension".into());
                }
            }
            LatentDomain::Gaussian { mean, std } | LatentDomain::TruncatedGaussian { mean, std, .. } => {
                if mean.is_empty() || mean.len() != std.len() {
                    return bad(format!("gaussian mean/std have lengths {} and {}", mean.len(), std.len()));
                }
                if mean.iter().any(|m| !m.is_finite()) || std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return bad("gaussian needs finite mean and positive std".into());
                }
                if let LatentDomain::TruncatedGaussian { psi, .. } = self {
                    if !(*psi > 0.0 && *psi <= 1.0) {
                        return bad(format!("truncation psi {psi} outside (0, 1]"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            LatentDomain::UniformBox { lo, .. } => lo.len(),
            LatentDomain::Gaussian { mean, .. } | LatentDomain::TruncatedGaussian { mean, .. } => mean.len(),
        }
    }

    /// Box bounds, if this is a uniform box.
    pub fn bounds(&self) -> Option<(&[f64], &[f64])> {
        match self {
            LatentDomain::UniformBox { lo, hi } => Some((lo, hi)),
            _ => None,
        }
    }

    pub fn volume(&self) -> Option<f64> {
        self.bounds().map(|(lo, hi)| lo.iter().zip(hi).map(|(l, h)| h - l).product())
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        match self {
            LatentDomain::UniformBox { lo, hi } => z.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| l <= v && v <= h),
            LatentDomain::Gaussian { .. } => z.iter().all(|v| v.is_finite()),
            LatentDomain::TruncatedGaussian { mean, std, psi } => z
                .iter()
                .zip(mean.iter().zip(std))
                .all(|(v, (m, s))| (v - m).abs() <= psi * 2.0 * s),
        }
    }

    /// The truncation baseline: keep the Gaussian but restrict it to
    /// `mean ± psi * 2 * std`. Only defined for Gaussian priors.
    pub fn truncated(&self, psi: f64) -> Result<Self> {
        let d = match self {
            LatentDomain::Gaussian { mean, std } | LatentDomain::TruncatedGaussian { mean, std, .. } => {
                LatentDomain::TruncatedGaussian { mean: mean.clone(), std: std.clone(), psi }
            }
            LatentDomain::UniformBox { .. } => {
                return Err(Error::Domain(
                    "truncation baseline is only defined for gaussian priors".into(),
                ))
            }
        };
        d.validate()?;
        Ok(d)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            LatentDomain::UniformBox { lo, hi } => {
                DVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(l, h)| rng.random_range(*l..*h)))
            }
            LatentDomain::Gaussian { mean, std } => DVector::from_iterator(
                mean.len(),
                mean.iter().zip(std).map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)),
            ),
            LatentDomain::TruncatedGaussian { mean, std, psi } => {
                let limit = 2.0 * psi;
                // the box is a product set, so per-coordinate rejection is exact
                DVector::from_iterator(
                    mean.len(),
                    mean.iter().zip(std).map(|(m, s)| loop {
                        let n: f64 = rng.sample(StandardNormal);
                        if n.abs() <= limit {
                            break m + s * n;
                        }
                    }),
                )
            }
        }
    }
}
