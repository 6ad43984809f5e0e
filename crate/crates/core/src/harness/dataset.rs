use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SampleSet;
use crate::seed;

/// Shape of a synthetic reference distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// Mixture of axis-aligned Gaussians.
    GaussianMixture { weights: Vec<f64>, means: Vec<Vec<f64>>, stds: Vec<Vec<f64>> },
    /// Uniform on a planar annulus.
    UniformRing { center: Vec<f64>, inner: f64, outer: f64 },
    /// Equal-weight Gaussian blobs on a centered square grid in the plane.
    GridClusters { per_side: usize, spacing: f64, std: f64 },
    /// Uniform on an axis-aligned box.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

/// A reference sample set described by its generator, size and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDataset {
    pub generator: Generator,
    pub size: usize,
    /// Falls back to a seed derived from the experiment seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        match self {
            Generator::GaussianMixture { means, .. } => means.first().map_or(0, Vec::len),
            Generator::UniformRing { .. } | Generator::GridClusters { .. } => 2,
            Generator::UniformBox { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("dataset: {m}")));
        match self {
            Generator::GaussianMixture { weights, means, stds } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != stds.len() {
                    return bad("mixture needs matching non-empty weights, means and stds");
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("mixture weights must be nonnegative and sum to 1");
                }
                let dim = self.dim();
                if dim == 0 || means.iter().chain(stds).any(|v| v.len() != dim) {
                    return bad("mixture components must share one positive dimension");
                }
                if stds.iter().flatten().any(|s| !(*s > 0.0)) {
                    return bad("mixture stds must be positive");
                }
            }
            Generator::UniformRing { center, inner, outer } => {
                if center.len() != 2 || !(*inner >= 0.0 && inner < outer) {
                    return bad("ring needs a 2-D center and 0 <= inner < outer");
                }
            }
            Generator::GridClusters { per_side, spacing, std } => {
                if *per_side == 0 || !(*spacing > 0.0) || !(*std > 0.0) {
                    return bad("grid clusters need per_side >= 1 and positive spacing and std");
                }
            }
            Generator::UniformBox { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
                    return bad("box needs lo < hi in every dimension");
                }
            }
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, mixture: Option<&WeightedIndex<f64>>) -> DVector<f64> {
        match self {
            Generator::GaussianMixture { means, stds, .. } => {
                let c = mixture.expect("mixture index").sample(rng);
                DVector::from_iterator(
                    means[c].len(),
                    means[c].iter().zip(&stds[c]).map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)),
                )
            }
            Generator::UniformRing { center, inner, outer } => {
                let r = rng.random_range(inner * inner..outer * outer).sqrt();
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                DVector::from_column_slice(&[center[0] + r * theta.cos(), center[1] + r * theta.sin()])
            }
            Generator::GridClusters { per_side, spacing, std } => {
                let i = rng.random_range(0..per_side * per_side);
                let half = (*per_side as f64 - 1.0) / 2.0;
                let cx = ((i % per_side) as f64 - half) * spacing;
                let cy = ((i / per_side) as f64 - half) * spacing;
                DVector::from_column_slice(&[
                    cx + std * rng.sample::<f64, _>(StandardNormal),
                    cy + std * rng.sample::<f64, _>(StandardNormal),
                ])
            }
            Generator::UniformBox { lo, hi } => {
                DVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(l, h)| rng.random_range(*l..*h)))
            }
        }
    }
}

impl SyntheticDataset {
    pub fn new(generator: Generator, size: usize) -> Self {
        SyntheticDataset { generator, size, seed: None }
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    /// Draws the dataset; `fallback_seed` is used when no seed is pinned.
    pub fn generate(&self, label: &str, fallback_seed: u64) -> Result<SampleSet> {
        self.generator.validate()?;
        if self.size == 0 {
            return Err(Error::Config("dataset size must be at least 1".into()));
        }
        let mixture = match &self.generator {
            Generator::GaussianMixture { weights, .. } => {
                Some(WeightedIndex::new(weights).map_err(|e| Error::Config(format!("mixture weights: {e}")))?)
            }
            _ => None,
        };
        let mut rng = seed::stream(self.seed.unwrap_or(fallback_seed), "dataset", &[]);
        let points = (0..self.size).map(|_| self.generator.draw(&mut rng, mixture.as_ref())).collect();
        SampleSet::new(label, points)
    }
}
