//! Polarity sampling.
//!
//! A candidate pool of latents is scored by the log-volume of each latent's
//! region (`sum log(sigma_i + eps)` over the top-k singular values of the
//! region slope). Resampling the pool with probabilities
//! `softmax(rho * log_volume)` reweights every region by its volume raised to
//! `rho`: negative polarity concentrates samples on the generator's modes
//! (contracting regions), positive polarity on its anti-modes, and `rho = 0`
//! reproduces the original prior.
//!
//! [`PolaritySampler`] is the batch resampler, [`OnlineSampler`] the
//! rejection sampler that scores fresh latents against a pool, and
//! [`truncation_sample`] the latent-truncation baseline.

mod domain;
mod online;
mod pool;

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::seed;

pub use domain::LatentDomain;
pub use online::{sample_online, OnlineSampler, OnlineVariant, DEFAULT_MAX_REJECTIONS};
pub use pool::{build_pool, PoolHeader, PoolOptions, RegionRecord, SamplePool, Space, POOL_FORMAT_VERSION};

/// Log-space softmax of `rho * log_volumes`.
pub fn polarity_weights(log_volumes: &[f64], rho: f64) -> Result<Vec<f64>> {
    if log_volumes.is_empty() {
        return Err(Error::State("cannot weight an empty pool".into()));
    }
    if !rho.is_finite() {
        return Err(Error::input(format!("polarity must be finite, got {rho}")));
    }
    let scores: Vec<f64> = log_volumes.iter().map(|lv| rho * lv).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical("non-finite polarity score".into()));
    }
    let mut weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(weights)
}

/// A pool bound to a polarity, ready for batch resampling.
#[derive(Debug)]
pub struct PolaritySampler<'a> {
    pool: &'a SamplePool,
    rho: f64,
    weights: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl<'a> PolaritySampler<'a> {
    pub fn new(pool: &'a SamplePool, rho: f64) -> Result<Self> {
        let weights = pool.polarity_weights(rho)?;
        let index = WeightedIndex::new(&weights).map_err(|e| Error::Numerical(format!("polarity weights: {e}")))?;
        Ok(PolaritySampler { pool, rho, weights, index })
    }

    pub fn pool(&self) -> &'a SamplePool {
        self.pool
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Pool indices of `count` independent categorical draws.
    pub fn sample_indices(&self, count: usize, seed: u64) -> Vec<usize> {
        let mut rng = seed::stream(seed, "polarity/batch", &[]);
        (0..count).map(|_| self.index.sample(&mut rng)).collect()
    }

    /// `count` latents drawn with replacement under the polarity weights.
    pub fn sample_batch(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        self.sample_indices(count, seed)
            .into_iter()
            .map(|i| self.pool.records()[i].latent())
            .collect()
    }

    /// Pool indices ordered by decreasing weight; ties keep pool order.
    pub fn ranked_indices(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.weights.len()).collect();
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]));
        order
    }
}

/// Batch sampling (draws with replacement from the pool).
pub fn sample_batch(sampler: &PolaritySampler<'_>, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    Ok(sampler.sample_batch(count, seed))
}

/// Truncation baseline: `count` draws from a Gaussian prior restricted to
/// `mean ± psi * 2 * std`.
pub fn truncation_sample(domain: &LatentDomain, psi: f64, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let truncated = domain.truncated(psi)?;
    let mut rng = seed::stream(seed, "polarity/truncation", &[]);
    Ok((0..count).map(|_| truncated.sample(&mut rng)).collect())
}
