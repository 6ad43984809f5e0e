//! Fréchet distance, k-NN precision/recall and nearest-neighbour distances
//! between two synthetic sample sets.

use polarity_sampling::harness::{Generator, SyntheticDataset};
use polarity_sampling::metrics::{MetricReport, ReportConfig};

fn main() -> polarity_sampling::Result<()> {
    let ring = SyntheticDataset::new(Generator::UniformRing { center: vec![0.0, 0.0], inner: 1.0, outer: 1.5 }, 1000);
    let grid = SyntheticDataset::new(Generator::GridClusters { per_side: 3, spacing: 1.0, std: 0.1 }, 1000);
    let real = ring.generate("ring", 1)?;
    let fake = grid.generate("grid", 2)?;
    let config = ReportConfig { rho: None, psi: None, space: "plane".into(), seeds: vec![1, 2] };
    let report = MetricReport::compute(&real, &fake, 3, 3, config)?;
    println!("{}", report.to_json());
    Ok(())
}
