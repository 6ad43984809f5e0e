//! Highest-weight latents at a strongly negative polarity, against the
//! unweighted pool order.

use polarity_sampling::cpa_net::save_model;
use polarity_sampling::harness::{run_modes, Experiment, ExperimentConfig, Generator, SyntheticDataset};
use polarity_sampling::polarity::LatentDomain;
use polarity_sampling::toy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("polarity-modes");
    std::fs::create_dir_all(&dir)?;
    let model = dir.join("bimodal.json");
    save_model(&toy::bimodal(), &model)?;

    let mut cfg = ExperimentConfig::new(model, LatentDomain::symmetric_box(1, 1.0)?, 2);
    cfg.n = 20_000;
    cfg.k = 1;
    cfg.modes = 8;
    cfg.reference = Some(SyntheticDataset::new(
        Generator::GaussianMixture { weights: vec![1.0], means: vec![vec![-0.01]], stds: vec![vec![0.005]] },
        500,
    ));
    cfg.output_dir = dir;
    let exp = Experiment::load(cfg)?;

    for rho in [-20.0, 0.0] {
        let report = run_modes(&exp, rho)?;
        println!("rho {rho}: mean nn distance {:.4}", report.mean_nn_distance);
        for e in &report.entries {
            println!("  #{} z {:+.4} x {:+.4} log volume {:+.3}", e.rank, e.z[0], e.x[0], e.log_volume);
        }
    }
    Ok(())
}
