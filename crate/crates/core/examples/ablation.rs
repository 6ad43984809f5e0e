//! Effect of the pool size `N` and the number of singular values `k`.
//!
//! In `two_region_plane(0.1)` the second singular value is 0.1 in both
//! regions, so dropping it (`k = 1`) leaves every row unchanged.

use polarity_sampling::cpa_net::save_model;
use polarity_sampling::harness::{run_ablation, write_csv, Experiment, ExperimentConfig, Generator, SyntheticDataset};
use polarity_sampling::polarity::LatentDomain;
use polarity_sampling::toy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("polarity-ablation");
    std::fs::create_dir_all(&dir)?;
    let model = dir.join("plane.json");
    save_model(&toy::two_region_plane(0.1), &model)?;

    let mut cfg = ExperimentConfig::new(model, LatentDomain::symmetric_box(2, 1.0)?, 3);
    cfg.rho_grid = vec![-1.0, 0.0, 1.0];
    cfg.n_grid = vec![100, 1000, 10_000];
    cfg.k_grid = vec![1, 2];
    cfg.samples = 1000;
    cfg.reference = Some(SyntheticDataset::new(
        Generator::UniformBox { lo: vec![-2.0, -0.1], hi: vec![0.5, 0.1] },
        1000,
    ));
    cfg.output_dir = dir;
    let rows = run_ablation(&Experiment::load(cfg)?)?;
    write_csv(&rows, std::io::stdout())?;
    Ok(())
}
