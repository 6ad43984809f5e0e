//! Interpolation smoothness near modes and anti-modes.

use polarity_sampling::cpa_net::save_model;
use polarity_sampling::harness::{run_ppl, write_csv, Experiment, ExperimentConfig};
use polarity_sampling::polarity::LatentDomain;
use polarity_sampling::toy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("polarity-ppl");
    std::fs::create_dir_all(&dir)?;
    let model = dir.join("two_piece.json");
    save_model(&toy::two_piece(), &model)?;

    let mut cfg = ExperimentConfig::new(model, LatentDomain::symmetric_box(1, 1.0)?, 5);
    cfg.n = 50_000;
    cfg.k = 1;
    cfg.rho_grid = vec![-20.0, -2.0, 0.0, 2.0, 20.0];
    cfg.metrics.n_pairs = 5000;
    cfg.output_dir = dir;
    let rows = run_ppl(&Experiment::load(cfg)?)?;
    write_csv(&rows, std::io::stdout())?;
    Ok(())
}
