use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pool::{SamplePool, Scorer};
use crate::cpa_net::CpaNetwork;
use crate::error::{Error, Result};
use crate::seed::{self, SeededRng};

/// Rejections tolerated for a single accepted sample before giving up.
pub const DEFAULT_MAX_REJECTIONS: u64 = 10_000_000;

/// Acceptance rule of the online sampler.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnlineVariant {
    /// Accept when `w_z / (w_z + sum_i w_i) >= u`. The acceptance rate decays
    /// with the pool size and the accepted law is not exactly the
    /// polarity-reweighted prior.
    Logistic,
    /// Accept with probability `min(1, w_z / max_i w_i)`: plain rejection
    /// sampling whose output law is exactly proportional to `w_z`.
    #[default]
    MaxNormalized,
}

/// Rejection sampler that draws fresh latents from the pool's domain and
/// scores each one with a new Jacobian spectrum.
pub struct OnlineSampler<'a> {
    pool: &'a SamplePool,
    scorer: Scorer,
    rho: f64,
    variant: OnlineVariant,
    log_reference: f64,
    rng: SeededRng,
    max_rejections: u64,
    proposals: u64,
    accepted: u64,
    acceptance_mass: f64,
}

impl<'a> OnlineSampler<'a> {
    pub fn new(
        pool: &'a SamplePool,
        net: &CpaNetwork,
        features: Option<&CpaNetwork>,
        rho: f64,
        variant: OnlineVariant,
        seed: u64,
    ) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::State("online sampling needs a non-empty pool".into()));
        }
        if !rho.is_finite() {
            return Err(Error::input(format!("polarity must be finite, got {rho}")));
        }
        let scorer = pool.scorer(net, features)?;
        let scores = pool.records().iter().map(|r| rho * r.log_volume);
        let log_reference = match variant {
            OnlineVariant::MaxNormalized => scores.fold(f64::NEG_INFINITY, f64::max),
            OnlineVariant::Logistic => {
                let scores: Vec<f64> = scores.collect();
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
            }
        };
        Ok(OnlineSampler {
            pool,
            scorer,
            rho,
            variant,
            log_reference,
            rng: seed::stream(seed, "polarity/online", &[]),
            max_rejections: DEFAULT_MAX_REJECTIONS,
            proposals: 0,
            accepted: 0,
            acceptance_mass: 0.0,
        })
    }

    pub fn with_max_rejections(mut self, max_rejections: u64) -> Self {
        self.max_rejections = max_rejections.max(1);
        self
    }

    fn acceptance_probability(&self, log_volume: f64) -> f64 {
        let score = self.rho * log_volume;
        match self.variant {
            OnlineVariant::MaxNormalized => (score - self.log_reference).exp().min(1.0),
            // w / (w + W) = 1 / (1 + W / w)
            OnlineVariant::Logistic => 1.0 / (1.0 + (self.log_reference - score).exp()),
        }
    }

    /// Next accepted latent.
    pub fn draw(&mut self) -> Result<DVector<f64>> {
        let domain = &self.pool.header().domain;
        let mut rejections = 0u64;
        loop {
            let z = domain.sample(&mut self.rng);
            let u: f64 = self.rng.random();
            let p = self.acceptance_probability(self.scorer.log_volume(&z)?);
            self.proposals += 1;
            self.acceptance_mass += p;
            let accept = match self.variant {
                OnlineVariant::MaxNormalized => u < p,
                OnlineVariant::Logistic => p >= u,
            };
            if accept {
                self.accepted += 1;
                return Ok(z);
            }
            rejections += 1;
            if rejections >= self.max_rejections {
                return Err(Error::Timeout {
                    rejections,
                    acceptance_rate: self.acceptance_rate_estimate(),
                });
            }
        }
    }

    /// Mean acceptance probability over every proposal made so far.
    pub fn acceptance_rate_estimate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.acceptance_mass / self.proposals as f64
        }
    }

    pub fn proposals(&self) -> u64 {
        self.proposals
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }
}

/// Single accepted latent from a fresh online sampler.
pub fn sample_online(
    pool: &SamplePool,
    net: &CpaNetwork,
    features: Option<&CpaNetwork>,
    rho: f64,
    seed: u64,
    variant: OnlineVariant,
) -> Result<DVector<f64>> {
    OnlineSampler::new(pool, net, features, rho, variant, seed)?.draw()
}
