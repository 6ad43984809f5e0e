//! Experiment runs: precision/recall Pareto sweeps, N/k ablations, mode
//! reports, distribution-shift sweeps and path-length sweeps.
//!
//! Every run is a pure function of an [`Experiment`] (config plus loaded
//! networks) and returns rows in grid order. Random streams are keyed on the
//! master seed and grid *values*, so a grid point produces the same row no
//! matter which other points share the grid.

mod dataset;

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpa_net::{load_model, CpaNetwork};
use crate::error::{Error, Result};
use crate::metrics::{self, EndpointSpace, SampleSet};
use crate::polarity::{build_pool, LatentDomain, PolaritySampler, PoolOptions, SamplePool, Space};
use crate::seed::{self, real_key};
use crate::spectral;

pub use dataset::{Generator, SyntheticDataset};

/// Space the polarity volumes are measured in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolaritySpace {
    #[default]
    Output,
    /// Generator composed with the feature network.
    Features,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOptions {
    #[serde(default = "default_k_nn")]
    pub k_nn: usize,
    /// Neighbours averaged in nearest-neighbour distances.
    #[serde(default = "default_j")]
    pub j: usize,
    /// Interpolation step for path length.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_n_pairs")]
    pub n_pairs: usize,
    #[serde(default)]
    pub endpoint_space: EndpointSpace,
}

fn default_k_nn() -> usize {
    3
}
fn default_j() -> usize {
    3
}
fn default_epsilon() -> f64 {
    1e-4
}
fn default_n_pairs() -> usize {
    1000
}
fn default_eps() -> f64 {
    spectral::DEFAULT_EPS
}
fn default_psi_grid() -> Vec<f64> {
    vec![1.0]
}
fn default_modes() -> usize {
    16
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            k_nn: default_k_nn(),
            j: default_j(),
            epsilon: default_epsilon(),
            n_pairs: default_n_pairs(),
            endpoint_space: EndpointSpace::Latent,
        }
    }
}

/// Everything a run needs, as read from a JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_model: Option<PathBuf>,
    /// Precomputed pool; used for grid points whose domain matches it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PathBuf>,
    pub domain: LatentDomain,
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch_rows: Option<usize>,
    #[serde(default)]
    pub polarity_space: PolaritySpace,
    pub rho_grid: Vec<f64>,
    /// Truncation levels. For box domains only `1.0` (no truncation) is valid.
    #[serde(default = "default_psi_grid")]
    pub psi_grid: Vec<f64>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub k_grid: Vec<usize>,
    /// Generated samples per grid point.
    pub samples: usize,
    #[serde(default)]
    pub metrics: MetricOptions,
    /// Reference set metrics are measured against (the biased one in shift runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<SyntheticDataset>,
    /// Second, balanced reference for shift runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balanced_reference: Option<SyntheticDataset>,
    /// Entries in a mode report.
    #[serde(default = "default_modes")]
    pub modes: usize,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Minimal config: output-space polarity, defaults everywhere else.
    pub fn new(model: impl Into<PathBuf>, domain: LatentDomain, seed: u64) -> Self {
        ExperimentConfig {
            model: model.into(),
            feature_model: None,
            pool: None,
            domain,
            n: 200_000,
            k: 30,
            eps: default_eps(),
            seed,
            sketch_rows: None,
            polarity_space: PolaritySpace::Output,
            rho_grid: vec![0.0],
            psi_grid: default_psi_grid(),
            n_grid: Vec::new(),
            k_grid: Vec::new(),
            samples: 1000,
            metrics: MetricOptions::default(),
            reference: None,
            balanced_reference: None,
            modes: default_modes(),
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.domain.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.rho_grid.is_empty() || self.psi_grid.is_empty() {
            return bad("rho_grid and psi_grid must be non-empty".into());
        }
        if self.rho_grid.iter().any(|r| !r.is_finite()) {
            return bad("rho_grid entries must be finite".into());
        }
        if self.psi_grid.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return bad("psi_grid entries must lie in (0, 1]".into());
        }
        if self.domain.bounds().is_some() && self.psi_grid.iter().any(|&p| p != 1.0) {
            return bad("truncation (psi < 1) requires a gaussian domain".into());
        }
        if self.samples == 0 || self.n == 0 {
            return bad("samples and n must be at least 1".into());
        }
        if self.polarity_space == PolaritySpace::Features && self.feature_model.is_none() {
            return bad("polarity_space = features needs a feature_model".into());
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: ExperimentConfig = crate::io::read_json(path)?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.model);
        cfg.feature_model.as_mut().map(resolve);
        cfg.pool.as_mut().map(resolve);
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        crate::io::from_json_str(text, "experiment config")
    }
}

/// A config with its networks (and optional pool) loaded.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub net: CpaNetwork,
    pub features: Option<CpaNetwork>,
    pub pool: Option<SamplePool>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, net: CpaNetwork, features: Option<CpaNetwork>) -> Result<Self> {
        config.validate()?;
        if config.domain.dim() != net.input_dim() {
            return Err(Error::Config(format!(
                "domain dim {} does not match model input dim {}",
                config.domain.dim(),
                net.input_dim()
            )));
        }
        if let Some(f) = &features {
            if f.input_dim() != net.output_dim() {
                return Err(Error::Config("feature model input dim does not match generator output".into()));
            }
        }
        if config.polarity_space == PolaritySpace::Features && features.is_none() {
            return Err(Error::Config("polarity_space = features needs a feature model".into()));
        }
        Ok(Experiment { config, net, features, pool: None })
    }

    /// Loads every file the config names.
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        let net = load_model(&config.model)?;
        let features = config.feature_model.as_ref().map(load_model).transpose()?;
        let pool = config.pool.as_ref().map(SamplePool::load).transpose()?;
        let mut exp = Experiment::new(config, net, features)?;
        if let Some(p) = pool {
            exp = exp.with_pool(p)?;
        }
        Ok(exp)
    }

    /// Attaches a precomputed pool after checking it belongs to this model.
    pub fn with_pool(mut self, pool: SamplePool) -> Result<Self> {
        pool.check_network(&self.net)?;
        if pool.header().space != self.space() {
            return Err(Error::Config("pool space does not match the experiment's polarity space".into()));
        }
        self.pool = Some(pool);
        Ok(self)
    }

    fn space(&self) -> Space {
        match (self.config.polarity_space, &self.features) {
            (PolaritySpace::Features, Some(f)) => Space::composed_with(f),
            _ => Space::Output,
        }
    }

    /// Maps latents into the space metrics are computed in.
    pub fn embed(&self, latents: &[DVector<f64>], label: &str) -> Result<SampleSet> {
        let points = latents
            .iter()
            .map(|z| {
                let x = self.net.forward(z)?;
                match &self.features {
                    Some(f) => f.forward(&x),
                    None => Ok(x),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        SampleSet::new(label, points)
    }

    fn metric_dim(&self) -> usize {
        self.features.as_ref().map_or(self.net.output_dim(), CpaNetwork::output_dim)
    }

    fn dataset(&self, spec: Option<&SyntheticDataset>, name: &str) -> Result<SampleSet> {
        let spec = spec.ok_or_else(|| Error::Config(format!("run needs a {name} dataset")))?;
        if spec.dim() != self.metric_dim() {
            return Err(Error::Input(format!(
                "{name} has dim {}, metric space has dim {}",
                spec.dim(),
                self.metric_dim()
            )));
        }
        spec.generate(name, seed::derive_seed(self.config.seed, name, &[]))
    }

    pub fn reference(&self) -> Result<SampleSet> {
        self.dataset(self.config.reference.as_ref(), "reference")
    }

    fn domain_for(&self, psi: f64) -> Result<LatentDomain> {
        match self.config.domain.bounds() {
            Some(_) if psi == 1.0 => Ok(self.config.domain.clone()),
            Some(_) => Err(Error::Config("truncation requires a gaussian domain".into())),
            None => self.config.domain.truncated(psi),
        }
    }

    /// Pool for truncation level `psi` with `n` candidates and top-`k`
    /// spectra; reuses the attached pool when it matches exactly.
    pub fn pool_for(&self, psi: f64, n: usize, k: usize, component: &str) -> Result<SamplePool> {
        let domain = self.domain_for(psi)?;
        if let Some(p) = &self.pool {
            let h = p.header();
            if h.domain == domain && h.n == n && h.k == k && h.eps == self.config.eps {
                return Ok(p.clone());
            }
        }
        let opts = PoolOptions {
            n,
            k,
            eps: self.config.eps,
            seed: seed::derive_seed(self.config.seed, component, &[real_key(psi), n as u64]),
            space: self.space(),
            sketch_rows: self.config.sketch_rows,
        };
        build_pool(&self.net, self.features.as_ref(), &domain, &opts)
    }

    fn sample_seed(&self, component: &str, psi: f64) -> u64 {
        seed::derive_seed(self.config.seed, component, &[real_key(psi)])
    }
}

/// One point of a precision/recall sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub rho: f64,
    pub psi: f64,
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub frechet: f64,
}

/// Sweeps every `(rho, psi)` pair: `samples` latents drawn from the pool of
/// the `psi`-truncated prior under polarity `rho`, scored against the
/// reference set.
pub fn run_pareto(exp: &Experiment) -> Result<Vec<ParetoRow>> {
    let cfg = &exp.config;
    let reference = exp.reference()?;
    let mut rows = Vec::new();
    for &psi in &cfg.psi_grid {
        let pool = exp.pool_for(psi, cfg.n, cfg.k, "pool")?;
        let sample_seed = exp.sample_seed("pareto/sample", psi);
        let batch = cfg
            .rho_grid
            .par_iter()
            .map(|&rho| {
                let sampler = PolaritySampler::new(&pool, rho)?;
                let fake = exp.embed(&sampler.sample_batch(cfg.samples, sample_seed), "generated")?;
                let (precision, recall) = metrics::precision_recall(&reference, &fake, cfg.metrics.k_nn)?;
                let frechet = metrics::frechet_distance(&reference, &fake)?;
                Ok(ParetoRow { rho, psi, seed: cfg.seed, precision, recall, frechet })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(batch);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub n: usize,
    pub k: usize,
    pub rho: f64,
    pub psi: f64,
    pub seed: u64,
    pub frechet: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Metrics for every `(N, k, rho)`; pools are rebuilt per `N`, and for a
/// fixed `N` all `k` share the same candidate latents.
pub fn run_ablation(exp: &Experiment) -> Result<Vec<AblationRow>> {
    let cfg = &exp.config;
    if cfg.n_grid.is_empty() || cfg.k_grid.is_empty() {
        return Err(Error::Config("ablation needs non-empty n_grid and k_grid".into()));
    }
    let psi = cfg.psi_grid[0];
    let reference = exp.reference()?;
    let sample_seed = exp.sample_seed("ablation/sample", psi);
    let mut rows = Vec::new();
    for &n in &cfg.n_grid {
        for &k in &cfg.k_grid {
            let pool = exp.pool_for(psi, n, k, "ablation/pool")?;
            let batch = cfg
                .rho_grid
                .par_iter()
                .map(|&rho| {
                    let sampler = PolaritySampler::new(&pool, rho)?;
                    let fake = exp.embed(&sampler.sample_batch(cfg.samples, sample_seed), "generated")?;
                    let (precision, recall) = metrics::precision_recall(&reference, &fake, cfg.metrics.k_nn)?;
                    let frechet = metrics::frechet_distance(&reference, &fake)?;
                    Ok(AblationRow { n, k, rho, psi, seed: cfg.seed, frechet, precision, recall })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.extend(batch);
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub rank: usize,
    pub pool_index: usize,
    pub weight: f64,
    pub log_volume: f64,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub nn_distance: f64,
}

/// Highest-weight pool latents under one polarity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub rho: f64,
    pub psi: f64,
    pub seed: u64,
    pub distinct_regions: usize,
    pub mean_nn_distance: f64,
    pub entries: Vec<ModeEntry>,
}

impl ModeReport {
    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self)
    }
}

/// Reports the `config.modes` highest-weight latents at polarity `rho`, their
/// outputs and their mean distance to the `j` nearest reference points.
pub fn run_modes(exp: &Experiment, rho: f64) -> Result<ModeReport> {
    let cfg = &exp.config;
    let psi = cfg.psi_grid[0];
    let reference = exp.reference()?;
    let pool = exp.pool_for(psi, cfg.n, cfg.k, "pool")?;
    let sampler = PolaritySampler::new(&pool, rho)?;
    let top: Vec<usize> = sampler.ranked_indices().into_iter().take(cfg.modes.max(1)).collect();
    let latents: Vec<DVector<f64>> = top.iter().map(|&i| pool.records()[i].latent()).collect();
    let outputs = exp.embed(&latents, "modes")?;
    let nn = metrics::nn_distances(&outputs, &reference, cfg.metrics.j)?;
    let entries = top
        .iter()
        .enumerate()
        .map(|(rank, &i)| ModeEntry {
            rank,
            pool_index: i,
            weight: sampler.weights()[i],
            log_volume: pool.records()[i].log_volume,
            z: pool.records()[i].z.clone(),
            x: outputs.points()[rank].iter().copied().collect(),
            nn_distance: nn[rank],
        })
        .collect();
    Ok(ModeReport {
        rho,
        psi,
        seed: cfg.seed,
        distinct_regions: pool.distinct_regions(),
        mean_nn_distance: nn.iter().sum::<f64>() / nn.len() as f64,
        entries,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub rho: f64,
    pub psi: f64,
    pub seed: u64,
    pub frechet_biased: f64,
    pub frechet_uniform: f64,
}

/// Fréchet distance of polarity-sampled outputs to a biased and a balanced
/// reference, for every `rho`.
pub fn run_shift(exp: &Experiment) -> Result<Vec<ShiftRow>> {
    let cfg = &exp.config;
    let biased = exp.reference()?;
    let balanced = exp.dataset(cfg.balanced_reference.as_ref(), "balanced_reference")?;
    if biased.dim() != balanced.dim() {
        return Err(Error::Input("references have different dimensions".into()));
    }
    let psi = cfg.psi_grid[0];
    let pool = exp.pool_for(psi, cfg.n, cfg.k, "pool")?;
    let sample_seed = exp.sample_seed("shift/sample", psi);
    cfg.rho_grid
        .par_iter()
        .map(|&rho| {
            let sampler = PolaritySampler::new(&pool, rho)?;
            let fake = exp.embed(&sampler.sample_batch(cfg.samples, sample_seed), "generated")?;
            Ok(ShiftRow {
                rho,
                psi,
                seed: cfg.seed,
                frechet_biased: metrics::frechet_distance(&biased, &fake)?,
                frechet_uniform: metrics::frechet_distance(&balanced, &fake)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PplRow {
    pub rho: f64,
    pub psi: f64,
    pub seed: u64,
    pub mean_ppl: f64,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Path-length distribution per `rho`, with both interpolation endpoints drawn
/// from the polarity sampler.
pub fn run_ppl(exp: &Experiment) -> Result<Vec<PplRow>> {
    let cfg = &exp.config;
    let psi = cfg.psi_grid[0];
    let pool = exp.pool_for(psi, cfg.n, cfg.k, "pool")?;
    let sample_seed = exp.sample_seed("ppl/endpoints", psi);
    let path_seed = exp.sample_seed("ppl/t", psi);
    let n_pairs = cfg.metrics.n_pairs.max(1);
    cfg.rho_grid
        .par_iter()
        .map(|&rho| {
            let sampler = PolaritySampler::new(&pool, rho)?;
            let ends = sampler.sample_batch(2 * n_pairs, sample_seed);
            let pairs: Vec<_> = ends.chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())).collect();
            let pl = metrics::path_length(
                &exp.net,
                exp.features.as_ref(),
                &pairs,
                cfg.metrics.epsilon,
                cfg.metrics.endpoint_space,
                path_seed,
            )?;
            let s = metrics::Summary::of(&pl.scores)?;
            Ok(PplRow {
                rho,
                psi,
                seed: cfg.seed,
                mean_ppl: pl.mean,
                median: s.median,
                q05: s.q05,
                q25: s.q25,
                q75: s.q75,
                q95: s.q95,
            })
        })
        .collect()
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let mut cfg = ExperimentConfig::new("model.json", LatentDomain::standard_gaussian(3), 42);
        cfg.rho_grid = vec![-1.0, 0.0, 0.1 + 0.2];
        cfg.psi_grid = vec![0.3, 1.0];
        cfg.reference = Some(SyntheticDataset::new(Generator::UniformBox { lo: vec![0.0], hi: vec![1.0] }, 10));
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::new("m", LatentDomain::symmetric_box(1, 1.0).unwrap(), 0);
        cfg.psi_grid = vec![0.5];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.psi_grid = vec![];
        assert!(cfg.validate().is_err());
        cfg.psi_grid = vec![1.0];
        cfg.rho_grid = vec![];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_k_grid_rejected() {
        let mut cfg = ExperimentConfig::new("m", LatentDomain::symmetric_box(1, 1.0).unwrap(), 0);
        cfg.n_grid = vec![10];
        let exp = Experiment::new(cfg, crate::toy::two_piece(), None).unwrap();
        assert!(matches!(run_ablation(&exp), Err(Error::Config(_))));
    }
}
