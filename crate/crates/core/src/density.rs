//! Analytic output densities for networks whose regions can be enumerated,
//! and histogram estimates from sampled latents.
//!
//! With a uniform prior on a box `D` and a latent law reweighted by
//! `pdet(A_w)^rho` per region, the output density at `x` is
//!
//! ```text
//! p(x) = sum_w pdet(A_w)^(rho - 1) [A_w^+ (x - b_w) in w ∩ D] / Z_rho
//! Z_rho = vol(D) * sum_w mass_w * pdet(A_w)^rho
//! ```
//!
//! where `pdet` is the product of nonzero singular values and `mass_w` the
//! fraction of the box covered by region `w`. `Z_rho` follows from the change
//! of variables on each region.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cpa_net::{ActivationCode, AffineMap, CpaNetwork};
use crate::error::{Error, Result};
use crate::polarity::LatentDomain;
use crate::seed;
use crate::spectral;

/// Largest latent dimension the grid enumerator accepts.
pub const MAX_ATLAS_DIM: usize = 3;
/// Smallest per-dimension grid resolution.
pub const MIN_RESOLUTION: usize = 32;
/// Sub-cells per axis probed (one jittered point each) in grid cells that
/// border a code change, indexed by latent dimension.
const REFINE_SUBDIVISIONS: [usize; 4] = [1, 32, 12, 5];
/// Relative residual allowed when testing that `x` lies on a region's image.
pub const ON_IMAGE_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AtlasRegion {
    pub code: ActivationCode,
    pub code_hash: u64,
    pub map: AffineMap,
    pub pinv: DMatrix<f64>,
    /// All singular values of the slope, descending.
    pub sigma: Vec<f64>,
    /// `sum log(sigma_i + eps)` over all singular values.
    pub log_volume: f64,
    /// `sum log sigma_i` over the nonzero singular values.
    pub half_log_pdet: f64,
    pub prior_mass: f64,
}

/// Every region of a network over a box, with its prior mass.
#[derive(Clone, Debug)]
pub struct RegionAtlas {
    net: CpaNetwork,
    lo: Vec<f64>,
    hi: Vec<f64>,
    resolution: usize,
    regions: Vec<AtlasRegion>,
    complete: bool,
}

struct Probe {
    counts: HashMap<ActivationCode, (f64, DVector<f64>)>,
    order: Vec<ActivationCode>,
}

fn probe_grid(net: &CpaNetwork, lo: &[f64], hi: &[f64], res: usize) -> Probe {
    let dim = lo.len();
    let cells = res.pow(dim as u32);
    let width: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| (h - l) / res as f64).collect();
    let unravel = |mut idx: usize| {
        let mut coords = vec![0usize; dim];
        for c in coords.iter_mut().rev() {
            *c = idx % res;
            idx /= res;
        }
        coords
    };
    let point = |coords: &[usize], offset: &[f64]| {
        DVector::from_iterator(
            dim,
            (0..dim).map(|d| lo[d] + (coords[d] as f64 + offset[d]) * width[d]),
        )
    };
    let centers: Vec<ActivationCode> = (0..cells)
        .into_par_iter()
        .map(|i| net.region_code_unchecked(&point(&unravel(i), &vec![0.5; dim])))
        .collect();

    // per-cell list of (code, weight, representative) contributions
    let contributions: Vec<Vec<(ActivationCode, f64, DVector<f64>)>> = (0..cells)
        .into_par_iter()
        .map(|i| {
            let coords = unravel(i);
            let center = point(&coords, &vec![0.5; dim]);
            let mut stride = 1;
            let mut boundary = false;
            for d in (0..dim).rev() {
                if coords[d] > 0 && centers[i - stride] != centers[i] {
                    boundary = true;
                }
                if coords[d] + 1 < res && centers[i + stride] != centers[i] {
                    boundary = true;
                }
                stride *= res;
            }
            if !boundary {
                return vec![(centers[i].clone(), 1.0, center)];
            }
            let sub = REFINE_SUBDIVISIONS[dim];
            let probes = sub.pow(dim as u32);
            let share = 1.0 / probes as f64;
            let mut rng = seed::stream(res as u64, "density/refine", &[i as u64]);
            let mut out = Vec::with_capacity(probes);
            for p in 0..probes {
                let mut rest = p;
                let offset: Vec<f64> = (0..dim)
                    .map(|_| {
                        let s = rest % sub;
                        rest /= sub;
                        (s as f64 + rng.random_range(0.0..1.0)) / sub as f64
                    })
                    .collect();
                let z = point(&coords, &offset);
                out.push((net.region_code_unchecked(&z), share, z));
            }
            out
        })
        .collect();

    let mut counts: HashMap<ActivationCode, (f64, DVector<f64>)> = HashMap::new();
    let mut order = Vec::new();
    for (code, w, z) in contributions.into_iter().flatten() {
        match counts.get_mut(&code) {
            Some(entry) => entry.0 += w,
            None => {
                order.push(code.clone());
                counts.insert(code, (w, z));
            }
        }
    }
    Probe { counts, order }
}

/// Enumerates the regions of `net` over a box domain by probing a regular
/// grid (plus a stratified jittered sub-grid in cells next to a code change) at `resolution`
/// and again at twice that resolution. The atlas is flagged complete when the
/// finer pass found no code the coarser pass missed; masses come from the
/// finer pass.
pub fn enumerate_regions(net: &CpaNetwork, domain: &LatentDomain, resolution: usize) -> Result<RegionAtlas> {
    let (lo, hi) = domain
        .bounds()
        .ok_or_else(|| Error::Domain("region enumeration requires a uniform box domain".into()))?;
    let dim = lo.len();
    if dim != net.input_dim() {
        return Err(Error::input(format!(
            "domain dim {dim} does not match network input dim {}",
            net.input_dim()
        )));
    }
    if dim > MAX_ATLAS_DIM {
        return Err(Error::Scale(format!(
            "exact atlases need latent dim <= {MAX_ATLAS_DIM} (got {dim}); use a sampled pool instead"
        )));
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::input(format!("resolution must be at least {MIN_RESOLUTION}")));
    }
    let coarse = probe_grid(net, lo, hi, resolution);
    let fine = probe_grid(net, lo, hi, 2 * resolution);
    let complete = fine.order.iter().all(|c| coarse.counts.contains_key(c));

    let total: f64 = fine.counts.values().map(|(w, _)| w).sum();
    let mut regions = Vec::with_capacity(fine.order.len());
    for code in fine.order {
        let (weight, z) = &fine.counts[&code];
        let map = net.affine_map_unchecked(z);
        let sigma = spectral::singular_values(&map.slope)?;
        regions.push(AtlasRegion {
            code_hash: code.hash64(),
            code,
            pinv: spectral::pseudo_inverse(&map.slope)?,
            log_volume: sigma.iter().map(|s| (s + spectral::DEFAULT_EPS).ln()).sum(),
            half_log_pdet: spectral::half_log_pdet(&sigma),
            sigma,
            map,
            prior_mass: weight / total,
        });
    }
    Ok(RegionAtlas {
        net: net.clone(),
        lo: lo.to_vec(),
        hi: hi.to_vec(),
        resolution,
        regions,
        complete,
    })
}

impl RegionAtlas {
    pub fn regions(&self) -> &[AtlasRegion] {
        &self.regions
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn network(&self) -> &CpaNetwork {
        &self.net
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    /// Region containing `z`, if the atlas knows its code.
    pub fn region_of(&self, z: &DVector<f64>) -> Option<usize> {
        let code = self.net.region_code_unchecked(z);
        self.regions.iter().position(|r| r.code == code)
    }

    /// Density evaluator for polarity `rho`, with the normalizer cached.
    pub fn density(&self, rho: f64) -> Result<DensityEvaluator<'_>> {
        if !self.complete {
            return Err(Error::State("atlas is incomplete; refine the resolution".into()));
        }
        if !rho.is_finite() {
            return Err(Error::input(format!("polarity must be finite, got {rho}")));
        }
        let logs: Vec<f64> = self
            .regions
            .iter()
            .filter(|r| r.prior_mass > 0.0)
            .map(|r| r.prior_mass.ln() + rho * r.half_log_pdet)
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = self.volume().ln() + max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(DensityEvaluator { atlas: self, rho, log_norm })
    }

    /// Structured export of the atlas (mirrors the pool layout).
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct RegionOut<'a> {
            code_hash: u64,
            code: String,
            log_volume: f64,
            prior_mass: f64,
            sigma: &'a [f64],
            slope: Vec<Vec<f64>>,
            offset: Vec<f64>,
        }
        #[derive(Serialize)]
        struct AtlasOut<'a> {
            version: u32,
            net_fingerprint: String,
            domain: LatentDomain,
            resolution: usize,
            complete: bool,
            eps: f64,
            regions: Vec<RegionOut<'a>>,
        }
        let out = AtlasOut {
            version: 1,
            net_fingerprint: self.net.fingerprint(),
            domain: LatentDomain::UniformBox { lo: self.lo.clone(), hi: self.hi.clone() },
            resolution: self.resolution,
            complete: self.complete,
            eps: spectral::DEFAULT_EPS,
            regions: self
                .regions
                .iter()
                .map(|r| RegionOut {
                    code_hash: r.code_hash,
                    code: r.code.to_string(),
                    log_volume: r.log_volume,
                    prior_mass: r.prior_mass,
                    sigma: &r.sigma,
                    slope: r.map.slope.row_iter().map(|row| row.iter().copied().collect()).collect(),
                    offset: r.map.offset.iter().copied().collect(),
                })
                .collect(),
        };
        crate::io::to_json_string(&out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Point evaluator of the polarity-reweighted output density.
pub struct DensityEvaluator<'a> {
    atlas: &'a RegionAtlas,
    rho: f64,
    log_norm: f64,
}

impl DensityEvaluator<'_> {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        let atlas = self.atlas;
        if x.len() != atlas.net.output_dim() {
            return Err(Error::input(format!(
                "query has dim {}, network output dim is {}",
                x.len(),
                atlas.net.output_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("query has non-finite entries"));
        }
        let tol = ON_IMAGE_TOL * (1.0 + x.norm());
        let mut density = 0.0;
        for region in &atlas.regions {
            let shifted = x - &region.map.offset;
            let z = &region.pinv * &shifted;
            let inside = z.iter().zip(atlas.lo.iter().zip(&atlas.hi)).all(|(v, (l, h))| l <= v && v <= h);
            if !inside {
                continue;
            }
            if (&region.map.slope * &z - &shifted).norm() > tol {
                continue;
            }
            if atlas.net.region_code_unchecked(&z) != region.code {
                continue;
            }
            density += ((self.rho - 1.0) * region.half_log_pdet - self.log_norm).exp();
        }
        Ok(density)
    }
}

/// Output density at `x` under polarity `rho`.
pub fn analytic_density(atlas: &RegionAtlas, x: &DVector<f64>, rho: f64) -> Result<f64> {
    atlas.density(rho)?.eval(x)
}

/// Regions ranked for mode inspection: ascending log-volume for `rho < 0`
/// (modes first), descending for `rho > 0`, atlas order for `rho == 0`.
/// Ties keep atlas order.
pub fn mode_regions(atlas: &RegionAtlas, rho: f64) -> Vec<&AtlasRegion> {
    let mut ranked: Vec<&AtlasRegion> = atlas.regions.iter().collect();
    if rho < 0.0 {
        ranked.sort_by(|a, b| a.log_volume.total_cmp(&b.log_volume));
    } else if rho > 0.0 {
        ranked.sort_by(|a, b| b.log_volume.total_cmp(&a.log_volume));
    }
    ranked
}

/// Axis-aligned regular binning of an output box.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: Vec<usize>,
}

impl HistogramSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != bins.len() {
            return Err(Error::input("histogram bounds and bin counts must share one dimension"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) || bins.contains(&0) {
            return Err(Error::input("histogram bins must have positive volume"));
        }
        Ok(HistogramSpec { lo, hi, bins })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn width(&self, d: usize) -> f64 {
        (self.hi[d] - self.lo[d]) / self.bins[d] as f64
    }

    pub fn bin_volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.width(d)).product()
    }

    /// Flat (last axis fastest) bin index of `x`, or `None` outside the box.
    pub fn locate(&self, x: &DVector<f64>) -> Option<usize> {
        let mut flat = 0;
        for d in 0..self.dim() {
            let v = x[d];
            if !(v >= self.lo[d] && v <= self.hi[d]) {
                return None;
            }
            let b = (((v - self.lo[d]) / self.width(d)) as usize).min(self.bins[d] - 1);
            flat = flat * self.bins[d] + b;
        }
        Some(flat)
    }

    /// Lower and upper corners of bin `flat`.
    pub fn bin_bounds(&self, mut flat: usize) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let mut lo = vec![0.0; dim];
        let mut hi = vec![0.0; dim];
        for d in (0..dim).rev() {
            let b = flat % self.bins[d];
            flat /= self.bins[d];
            lo[d] = self.lo[d] + b as f64 * self.width(d);
            hi[d] = if b + 1 == self.bins[d] { self.hi[d] } else { self.lo[d] + (b + 1) as f64 * self.width(d) };
        }
        (lo, hi)
    }
}

/// Normalized histogram; `mass` sums to one over in-range points.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub spec: HistogramSpec,
    pub mass: Vec<f64>,
    /// Points that fell outside the binned box (excluded from `mass`).
    pub outside: usize,
}

impl Histogram {
    pub fn from_points(points: &[DVector<f64>], spec: &HistogramSpec) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::input("histogram needs at least one point"));
        }
        let mut counts = vec![0u64; spec.len()];
        let mut outside = 0;
        for x in points {
            if x.len() != spec.dim() {
                return Err(Error::input("point dimension does not match histogram"));
            }
            match spec.locate(x) {
                Some(i) => counts[i] += 1,
                None => outside += 1,
            }
        }
        let inside = (points.len() - outside) as f64;
        if inside == 0.0 {
            return Err(Error::input("no point fell inside the histogram range"));
        }
        Ok(Histogram {
            spec: spec.clone(),
            mass: counts.iter().map(|&c| c as f64 / inside).collect(),
            outside,
        })
    }

    /// CSV with columns `bin_lo, bin_hi, mass` (suffixed per axis when
    /// the histogram has more than one dimension).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let dim = self.spec.dim();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::new();
        if dim == 1 {
            header.extend(["bin_lo".to_string(), "bin_hi".to_string()]);
        } else {
            for d in 0..dim {
                header.push(format!("bin_lo_{d}"));
                header.push(format!("bin_hi_{d}"));
            }
        }
        header.push("mass".into());
        w.write_record(&header)?;
        for (i, m) in self.mass.iter().enumerate() {
            let (lo, hi) = self.spec.bin_bounds(i);
            let mut row = Vec::with_capacity(2 * dim + 1);
            for d in 0..dim {
                row.push(lo[d].to_string());
                row.push(hi[d].to_string());
            }
            row.push(m.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Histogram of `net` applied to the given latent draws.
pub fn mc_density(net: &CpaNetwork, draws: &[DVector<f64>], spec: &HistogramSpec) -> Result<Histogram> {
    if draws.is_empty() {
        return Err(Error::input("mc_density needs at least one draw"));
    }
    let outputs = draws.iter().map(|z| net.forward(z)).collect::<Result<Vec<_>>>()?;
    Histogram::from_points(&outputs, spec)
}

/// Probability of every bin under the analytic density, by midpoint
/// quadrature with `subdivisions` points per axis inside each bin.
pub fn analytic_bin_masses(
    evaluator: &DensityEvaluator<'_>,
    spec: &HistogramSpec,
    subdivisions: usize,
) -> Result<Vec<f64>> {
    let dim = spec.dim();
    let sub = subdivisions.max(1);
    let per_bin = sub.pow(dim as u32);
    (0..spec.len())
        .into_par_iter()
        .map(|bin| {
            let (lo, hi) = spec.bin_bounds(bin);
            let cell: f64 = lo.iter().zip(&hi).map(|(l, h)| (h - l) / sub as f64).product();
            let mut sum = 0.0;
            for j in 0..per_bin {
                let mut rest = j;
                let mut x = DVector::zeros(dim);
                for d in (0..dim).rev() {
                    let s = rest % sub;
                    rest /= sub;
                    x[d] = lo[d] + (s as f64 + 0.5) * (hi[d] - lo[d]) / sub as f64;
                }
                sum += evaluator.eval(&x)?;
            }
            Ok(sum * cell)
        })
        .collect()
}

/// `0.5 * sum |p_i - q_i|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::input("distributions have different supports"));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
