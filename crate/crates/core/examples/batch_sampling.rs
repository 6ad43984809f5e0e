//! Build a pool for a two-piece generator and resample it at several polarities.
//!
//! Negative polarity favours the contracting half (`z >= 0`), positive
//! polarity the expanding one.

use polarity_sampling::polarity::{build_pool, LatentDomain, PolaritySampler, PoolOptions};
use polarity_sampling::toy;

fn main() -> polarity_sampling::Result<()> {
    let net = toy::two_piece();
    let domain = LatentDomain::symmetric_box(1, 1.0)?;
    let pool = build_pool(&net, None, &domain, &PoolOptions::new(50_000, 1, 7))?;
    println!("pool: {} candidates, {} regions", pool.len(), pool.distinct_regions());

    for rho in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let sampler = PolaritySampler::new(&pool, rho)?;
        let latents = sampler.sample_batch(20_000, 1);
        let contracting = latents.iter().filter(|z| z[0] >= 0.0).count() as f64 / latents.len() as f64;
        // region mass is 1/2 each, slopes 2 and 1/2
        let expected = 1.0 / (1.0 + 4f64.powf(rho));
        println!("rho {rho:+.1}: contracting share {contracting:.3} (expected {expected:.3})");
    }
    Ok(())
}
