use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LatentDomain;
use crate::cpa_net::CpaNetwork;
use crate::error::{Error, Result};
use crate::seed;
use crate::spectral::{self, SpectrumTopK};

pub const POOL_FORMAT_VERSION: u32 = 1;

/// Space in which Jacobian volumes are measured.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Space {
    /// Generator output.
    Output,
    /// Generator followed by a feature network, identified by its fingerprint.
    Composed { feature: String },
}

impl Space {
    pub fn composed_with(features: &CpaNetwork) -> Self {
        Space::Composed { feature: features.fingerprint() }
    }
}

/// Resolves `space` to the network whose Jacobian is measured.
pub(crate) fn resolve_space(net: &CpaNetwork, features: Option<&CpaNetwork>, space: &Space) -> Result<CpaNetwork> {
    match space {
        Space::Output => Ok(net.clone()),
        Space::Composed { feature } => {
            let f = features.ok_or_else(|| {
                Error::Config(format!("pool space references feature network {feature} but none was supplied"))
            })?;
            if &f.fingerprint() != feature {
                return Err(Error::Config(format!(
                    "feature network fingerprint {} does not match pool space {feature}",
                    f.fingerprint()
                )));
            }
            net.compose(f)
        }
    }
}

/// Knobs for [`build_pool`].
#[derive(Clone, Debug, PartialEq)]
pub struct PoolOptions {
    /// Number of candidate latents `N`.
    pub n: usize,
    /// Number of top singular values per candidate.
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub space: Space,
    /// Height of the semi-orthogonal sketch applied before decomposition.
    pub sketch_rows: Option<usize>,
}

impl PoolOptions {
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        PoolOptions { n, k, eps: spectral::DEFAULT_EPS, seed, space: Space::Output, sketch_rows: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolHeader {
    pub version: u32,
    pub net_fingerprint: String,
    pub domain: LatentDomain,
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    pub space: Space,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch_rows: Option<usize>,
}

/// One candidate latent with the volume score of its region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionRecord {
    pub z: Vec<f64>,
    pub code_hash: u64,
    pub log_volume: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_sigma: Option<Vec<f64>>,
}

impl RegionRecord {
    pub fn latent(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.z)
    }
}

/// `N` candidate latents with their log-volumes; the substrate both samplers
/// resample from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePool {
    header: PoolHeader,
    records: Vec<RegionRecord>,
}

/// Everything needed to score a fresh latent the same way the pool did.
pub(crate) struct Scorer {
    net: CpaNetwork,
    sketch: Option<DMatrix<f64>>,
    k: usize,
    eps: f64,
}

impl Scorer {
    pub(crate) fn new(
        net: &CpaNetwork,
        features: Option<&CpaNetwork>,
        space: &Space,
        k: usize,
        eps: f64,
        sketch_rows: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let net = resolve_space(net, features, space)?;
        let out_dim = net.output_dim();
        let sketch = match sketch_rows {
            Some(rows) => Some(spectral::random_semi_orthogonal(
                rows,
                out_dim,
                seed::derive_seed(seed, "pool/sketch", &[]),
            )?),
            None => None,
        };
        let space_dim = sketch_rows.unwrap_or(out_dim);
        let max_k = space_dim.min(net.input_dim());
        if k == 0 || k > max_k {
            return Err(Error::input(format!("k = {k} outside 1..={max_k} for this space")));
        }
        if !(eps > 0.0) {
            return Err(Error::input(format!("eps must be positive, got {eps}")));
        }
        Ok(Scorer { net, sketch, k, eps })
    }

    pub(crate) fn spectrum(&self, z: &DVector<f64>) -> Result<SpectrumTopK> {
        let slope = self.net.affine_map_unchecked(z).slope;
        match &self.sketch {
            Some(w) => spectral::sketch_spectrum(&slope, w, self.k),
            None => spectral::top_k_singular_values(&slope, self.k),
        }
    }

    pub(crate) fn log_volume(&self, z: &DVector<f64>) -> Result<f64> {
        Ok(self.spectrum(z)?.log_volume(self.eps))
    }

    fn record(&self, z: DVector<f64>) -> Result<RegionRecord> {
        let spectrum = self.spectrum(&z)?;
        let log_volume = spectrum.log_volume(self.eps);
        if !log_volume.is_finite() {
            return Err(Error::Numerical(format!("non-finite log-volume at z = {z:?}")));
        }
        Ok(RegionRecord {
            code_hash: self.net.region_code_unchecked(&z).hash64(),
            z: z.iter().copied().collect(),
            log_volume,
            top_sigma: Some(spectrum.values().to_vec()),
        })
    }
}

/// Draws `opts.n` latents from `domain` and scores each by the log-volume of
/// its region's Jacobian in the selected space.
///
/// Latents come from a single sequential stream; scoring runs in parallel and
/// is merged in candidate order, so the result depends only on the seed.
pub fn build_pool(
    net: &CpaNetwork,
    features: Option<&CpaNetwork>,
    domain: &LatentDomain,
    opts: &PoolOptions,
) -> Result<SamplePool> {
    if opts.n == 0 {
        return Err(Error::input("pool size N must be at least 1"));
    }
    domain.validate()?;
    if domain.dim() != net.input_dim() {
        return Err(Error::input(format!(
            "domain dim {} does not match network input dim {}",
            domain.dim(),
            net.input_dim()
        )));
    }
    let scorer = Scorer::new(net, features, &opts.space, opts.k, opts.eps, opts.sketch_rows, opts.seed)?;
    let mut rng = seed::stream(opts.seed, "pool/latents", &[]);
    let latents: Vec<DVector<f64>> = (0..opts.n).map(|_| domain.sample(&mut rng)).collect();
    let records = latents
        .into_par_iter()
        .map(|z| scorer.record(z))
        .collect::<Result<Vec<_>>>()?;
    Ok(SamplePool {
        header: PoolHeader {
            version: POOL_FORMAT_VERSION,
            net_fingerprint: net.fingerprint(),
            domain: domain.clone(),
            n: opts.n,
            k: opts.k,
            eps: opts.eps,
            space: opts.space.clone(),
            seed: opts.seed,
            sketch_rows: opts.sketch_rows,
        },
        records,
    })
}

impl SamplePool {
    /// Assembles a pool from precomputed records.
    pub fn from_parts(header: PoolHeader, records: Vec<RegionRecord>) -> Result<Self> {
        let pool = SamplePool { header, records };
        pool.validate()?;
        Ok(pool)
    }

    fn validate(&self) -> Result<()> {
        if self.header.version != POOL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "pool format version {} is not supported (expected {POOL_FORMAT_VERSION})",
                self.header.version
            )));
        }
        if self.records.is_empty() {
            return Err(Error::State("pool has no records".into()));
        }
        if self.header.n != self.records.len() {
            return Err(Error::Config(format!(
                "pool header says N = {} but holds {} records",
                self.header.n,
                self.records.len()
            )));
        }
        let dim = self.header.domain.dim();
        if let Some(i) = self.records.iter().position(|r| r.z.len() != dim || !r.log_volume.is_finite()) {
            return Err(Error::Config(format!("pool record {i} is malformed")));
        }
        Ok(())
    }

    pub fn header(&self) -> &PoolHeader {
        &self.header
    }

    pub fn records(&self) -> &[RegionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn log_volumes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.log_volume).collect()
    }

    /// Number of distinct activation codes discovered.
    pub fn distinct_regions(&self) -> usize {
        self.records.iter().map(|r| r.code_hash).collect::<HashSet<_>>().len()
    }

    /// Config error unless `net` is the network the pool was built from.
    pub fn check_network(&self, net: &CpaNetwork) -> Result<()> {
        let fp = net.fingerprint();
        if fp != self.header.net_fingerprint {
            return Err(Error::Config(format!(
                "pool was built for model {} but model {fp} was supplied",
                self.header.net_fingerprint
            )));
        }
        Ok(())
    }

    /// Softmax of `rho * log_volume` over the pool.
    pub fn polarity_weights(&self, rho: f64) -> Result<Vec<f64>> {
        super::polarity_weights(&self.log_volumes(), rho)
    }

    pub(crate) fn scorer(&self, net: &CpaNetwork, features: Option<&CpaNetwork>) -> Result<Scorer> {
        self.check_network(net)?;
        let h = &self.header;
        Scorer::new(net, features, &h.space, h.k, h.eps, h.sketch_rows, h.seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let pool: SamplePool = crate::io::read_json(path.as_ref())?;
        pool.validate()?;
        Ok(pool)
    }
}
