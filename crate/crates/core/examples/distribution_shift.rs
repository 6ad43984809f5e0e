//! Correcting a biased generator toward a balanced reference.
//!
//! At `rho = 0` the generator reproduces a 75/20 cluster imbalance; sweeping
//! polarity moves mass between the clusters.

use polarity_sampling::cpa_net::save_model;
use polarity_sampling::harness::{run_shift, write_csv, Experiment, ExperimentConfig, Generator, SyntheticDataset};
use polarity_sampling::polarity::LatentDomain;
use polarity_sampling::toy;

fn mixture(weights: Vec<f64>, means: &[f64], stds: &[f64]) -> SyntheticDataset {
    SyntheticDataset::new(
        Generator::GaussianMixture {
            weights,
            means: means.iter().map(|m| vec![*m]).collect(),
            stds: stds.iter().map(|s| vec![*s]).collect(),
        },
        4000,
    )
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("polarity-shift");
    std::fs::create_dir_all(&dir)?;
    let model = dir.join("biased.json");
    save_model(&toy::biased_clusters(), &model)?;

    let mut cfg = ExperimentConfig::new(model, LatentDomain::symmetric_box(1, 1.0)?, 1);
    cfg.n = 100_000;
    cfg.k = 1;
    cfg.rho_grid = (-8..=4).map(|i| i as f64 * 0.25).collect();
    cfg.samples = 4000;
    cfg.reference = Some(mixture(vec![0.75, 0.05, 0.2], &[-3.0, 0.0, 2.72], &[0.173, 1.559, 0.0115]));
    cfg.balanced_reference = Some(mixture(vec![0.5, 0.5], &[-3.0, 2.72], &[0.173, 0.0115]));
    cfg.output_dir = dir;
    let rows = run_shift(&Experiment::load(cfg)?)?;
    write_csv(&rows, std::io::stdout())?;
    Ok(())
}
