//! Volumes measured through a feature network, with and without a sketch.
//!
//! A random ReLU generator is composed with a wide feature map; the sketch
//! projects each slope onto a few random directions before decomposition.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use polarity_sampling::cpa_net::{Activation, CpaNetwork};
use polarity_sampling::polarity::{build_pool, LatentDomain, PoolOptions, Space};

fn main() -> polarity_sampling::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let generator = CpaNetwork::random(&[3, 16, 16, 8], Activation::LeakyRelu(0.1), &mut rng)?;
    let features = CpaNetwork::random(&[8, 64, 32], Activation::Relu, &mut rng)?;
    let domain = LatentDomain::standard_gaussian(3);

    let composed = generator.compose(&features)?;
    println!("composed network: {} layers, {} gated units", composed.layers().len(), composed.nonlinear_units());

    let base = PoolOptions { space: Space::composed_with(&features), ..PoolOptions::new(2000, 3, 9) };
    let full = build_pool(&generator, Some(&features), &domain, &base)?;
    let sketched = build_pool(&generator, Some(&features), &domain, &PoolOptions { sketch_rows: Some(8), ..base })?;

    let (a, b) = (full.log_volumes(), sketched.log_volumes());
    let mean_gap = a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
    println!("{} regions among {} candidates", full.distinct_regions(), full.len());
    println!("mean log-volume lost to the 8-row sketch: {mean_gap:.3}");
    Ok(())
}
