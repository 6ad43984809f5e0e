//! Precision/recall trade-off traced by polarity alone.
//!
//! The folded generator puts a narrow mode and a wide anti-mode region over
//! the same output interval; the reference covers both.

use polarity_sampling::cpa_net::save_model;
use polarity_sampling::harness::{run_pareto, write_csv, Experiment, ExperimentConfig, Generator, SyntheticDataset};
use polarity_sampling::polarity::LatentDomain;
use polarity_sampling::toy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("polarity-pareto");
    std::fs::create_dir_all(&dir)?;
    let model = dir.join("bimodal.json");
    save_model(&toy::bimodal(), &model)?;

    let mut cfg = ExperimentConfig::new(model, LatentDomain::symmetric_box(1, 1.0)?, 0);
    cfg.n = 50_000;
    cfg.k = 1;
    cfg.rho_grid = vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
    cfg.samples = 1500;
    cfg.reference = Some(SyntheticDataset::new(
        Generator::GaussianMixture {
            weights: vec![0.5, 0.5],
            means: vec![vec![-0.01], vec![-0.75]],
            stds: vec![vec![0.005], vec![0.375]],
        },
        1500,
    ));
    cfg.output_dir = dir;
    let rows = run_pareto(&Experiment::load(cfg)?)?;
    write_csv(&rows, std::io::stdout())?;
    Ok(())
}
