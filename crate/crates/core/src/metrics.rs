//! Distribution metrics between sample sets: Fréchet distance, k-NN
//! precision/recall, nearest-neighbour distances and path length.

use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpa_net::CpaNetwork;
use crate::error::{Error, Result};
use crate::seed;

/// Ridge added to a covariance estimated from no more points than dimensions.
pub const COVARIANCE_RIDGE: f64 = 1e-10;

/// Nonempty set of equal-length finite vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    points: Vec<DVector<f64>>,
    label: String,
}

impl SampleSet {
    pub fn new(label: impl Into<String>, points: Vec<DVector<f64>>) -> Result<Self> {
        let label = label.into();
        let dim = points
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::input(format!("sample set {label:?} is empty")))?;
        if dim == 0 {
            return Err(Error::input(format!("sample set {label:?} has zero-dimensional points")));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::input(format!("sample set {label:?} mixes dimensions")));
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::input(format!("sample set {label:?} has non-finite entries")));
        }
        Ok(SampleSet { points, label })
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Reads a headered CSV whose every column is a coordinate.
    pub fn read_csv<R: Read>(label: impl Into<String>, reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse { context: format!("csv row {}", i + 2), message: e.to_string() })?;
            points.push(DVector::from_vec(row));
        }
        SampleSet::new(label, points)
    }

    /// Writes the points as CSV with columns `x0, x1, ...`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_points_csv(&self.points, "x", writer)
    }

    fn mean_and_covariance(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.len();
        let dim = self.dim();
        let mean = self.points.iter().fold(DVector::zeros(dim), |acc, p| acc + p) / n as f64;
        let mut cov = DMatrix::zeros(dim, dim);
        for p in &self.points {
            let c = p - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        if n > 1 {
            cov /= (n - 1) as f64;
        }
        if n <= dim {
            cov += DMatrix::identity(dim, dim) * COVARIANCE_RIDGE;
        }
        (mean, cov)
    }
}

pub(crate) fn write_points_csv<W: Write>(points: &[DVector<f64>], prefix: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = points.first().map_or(0, |p| p.len());
    w.write_record((0..dim).map(|d| format!("{prefix}{d}")))?;
    for p in points {
        w.write_record(p.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn check_dims(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::input(format!(
            "sample sets {:?} and {:?} have dims {} and {}",
            a.label,
            b.label,
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians fitted to the two sets:
/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})`.
pub fn frechet_distance(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    check_dims(a, b)?;
    let (mu_a, cov_a) = a.mean_and_covariance();
    let (mu_b, cov_b) = b.mean_and_covariance();
    // tr (S_a S_b)^{1/2} = tr (S_a^{1/2} S_b S_a^{1/2})^{1/2}, a symmetric PSD form
    let root_a = psd_sqrt(&cov_a);
    let inner = &root_a * &cov_b * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let d = (mu_a - mu_b).norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

fn distinct(points: &[DVector<f64>]) -> Vec<&DVector<f64>> {
    let mut seen = HashSet::new();
    points
        .iter()
        .filter(|p| seen.insert(p.iter().map(|v| v.to_bits()).collect::<Vec<_>>()))
        .collect()
}

/// Distance to the k-th nearest other point, for every distinct point.
fn knn_radii(points: &[&DVector<f64>], k: usize) -> Vec<f64> {
    let m = points.len();
    if m < 2 {
        return vec![0.0; m];
    }
    let k = k.min(m - 1);
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..m)
                .filter(|&j| j != i)
                .map(|j| (points[i] - points[j]).norm_squared())
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            kth.sqrt()
        })
        .collect()
}

fn coverage(queries: &[DVector<f64>], centers: &[&DVector<f64>], radii: &[f64]) -> f64 {
    let covered = queries
        .par_iter()
        .filter(|q| {
            centers
                .iter()
                .zip(radii)
                .any(|(c, r)| (*q - *c).norm_squared() <= r * r)
        })
        .count();
    covered as f64 / queries.len() as f64
}

/// k-NN manifold precision and recall.
///
/// Each set's manifold is the union of balls around its points with radius
/// equal to the distance to the `k_nn`-th nearest other point of the same
/// set. Precision is the fraction of `fake` points inside the real manifold,
/// recall the fraction of `real` points inside the fake manifold. Radii are
/// computed over distinct points, so exact duplicates leave the manifold
/// estimate unchanged.
pub fn precision_recall(real: &SampleSet, fake: &SampleSet, k_nn: usize) -> Result<(f64, f64)> {
    check_dims(real, fake)?;
    if k_nn == 0 {
        return Err(Error::input("k_nn must be at least 1"));
    }
    if k_nn >= real.len() || k_nn >= fake.len() {
        return Err(Error::input(format!(
            "k_nn = {k_nn} needs more points (real {}, fake {})",
            real.len(),
            fake.len()
        )));
    }
    let real_centers = distinct(&real.points);
    let fake_centers = distinct(&fake.points);
    let real_radii = knn_radii(&real_centers, k_nn);
    let fake_radii = knn_radii(&fake_centers, k_nn);
    let precision = coverage(&fake.points, &real_centers, &real_radii);
    let recall = coverage(&real.points, &fake_centers, &fake_radii);
    Ok((precision, recall))
}

/// Mean distance from each generated point to its `j` nearest training points.
pub fn nn_distances(generated: &SampleSet, training: &SampleSet, j: usize) -> Result<Vec<f64>> {
    check_dims(generated, training)?;
    if j == 0 || j > training.len() {
        return Err(Error::input(format!("j = {j} outside 1..={}", training.len())));
    }
    Ok(generated
        .points
        .par_iter()
        .map(|g| {
            let mut d: Vec<f64> = training.points.iter().map(|t| (g - t).norm()).collect();
            if j < d.len() {
                d.select_nth_unstable_by(j - 1, f64::total_cmp);
            }
            d[..j].iter().sum::<f64>() / j as f64
        })
        .collect())
}

/// Where interpolation endpoints live.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointSpace {
    #[default]
    Latent,
    /// Output of the first `split` generator layers.
    Intermediate { split: usize },
}

/// Location and spread summary of a score distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("cannot summarize an empty list"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (sorted.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Ok(Summary {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: q(0.5),
            q05: q(0.05),
            q25: q(0.25),
            q75: q(0.75),
            q95: q(0.95),
        })
    }
}

/// Squared feature displacement per unit step along latent interpolations.
#[derive(Clone, Debug, PartialEq)]
pub struct PathLength {
    pub scores: Vec<f64>,
    pub mean: f64,
}

/// For each endpoint pair and a fresh `t ~ U[0,1]`, scores
/// `|F(G(lerp(w1, w2, t))) - F(G(lerp(w1, w2, t + eps)))|^2 / eps^2`, with the
/// endpoints mapped into `space` first.
pub fn path_length(
    net: &CpaNetwork,
    features: Option<&CpaNetwork>,
    pairs: &[(DVector<f64>, DVector<f64>)],
    epsilon: f64,
    space: EndpointSpace,
    seed: u64,
) -> Result<PathLength> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::input(format!("epsilon must be positive, got {epsilon}")));
    }
    if pairs.is_empty() {
        return Err(Error::input("path length needs at least one endpoint pair"));
    }
    let (head, tail) = match space {
        EndpointSpace::Latent => (None, net.clone()),
        EndpointSpace::Intermediate { split } => {
            let (h, t) = net.split_at(split)?;
            (Some(h), t)
        }
    };
    let mapped = match features {
        Some(f) => tail.compose(f)?,
        None => tail,
    };
    let to_endpoint = |z: &DVector<f64>| match &head {
        Some(h) => h.forward(z),
        None => Ok(z.clone()),
    };
    let mut rng = seed::stream(seed, "metrics/path_length", &[]);
    let mut scores = Vec::with_capacity(pairs.len());
    for (z1, z2) in pairs {
        let (w1, w2) = (to_endpoint(z1)?, to_endpoint(z2)?);
        let t: f64 = rng.random_range(0.0..1.0);
        let lerp = |s: f64| &w1 + (&w2 - &w1) * s;
        let a = mapped.forward(&lerp(t))?;
        let b = mapped.forward(&lerp(t + epsilon))?;
        scores.push((a - b).norm_squared() / (epsilon * epsilon));
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(PathLength { scores, mean })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnSummary {
    pub mean: f64,
    pub median: f64,
    /// `(bin_lo, bin_hi, count)` over `[0, max]`.
    pub histogram: Vec<(f64, f64, usize)>,
}

impl NnSummary {
    pub fn of(distances: &[f64], bins: usize) -> Result<Self> {
        let s = Summary::of(distances)?;
        let bins = bins.max(1);
        let max = distances.iter().copied().fold(0.0, f64::max);
        let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for d in distances {
            counts[((d / width) as usize).min(bins - 1)] += 1;
        }
        Ok(NnSummary {
            mean: s.mean,
            median: s.median,
            histogram: counts
                .into_iter()
                .enumerate()
                .map(|(i, c)| (i as f64 * width, (i + 1) as f64 * width, c))
                .collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub rho: Option<f64>,
    pub psi: Option<f64>,
    pub space: String,
    pub seeds: Vec<u64>,
}

/// Metrics of one generated set against a reference set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frechet: f64,
    pub precision: f64,
    pub recall: f64,
    pub nn_summary: NnSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl: Option<Summary>,
    pub config: ReportConfig,
}

impl MetricReport {
    pub fn compute(real: &SampleSet, fake: &SampleSet, k_nn: usize, j: usize, config: ReportConfig) -> Result<Self> {
        let frechet = frechet_distance(real, fake)?;
        let (precision, recall) = precision_recall(real, fake, k_nn)?;
        let nn = nn_distances(fake, real, j)?;
        Ok(MetricReport {
            frechet,
            precision,
            recall,
            nn_summary: NnSummary::of(&nn, 20)?,
            ppl: None,
            config,
        })
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self)
    }
}
