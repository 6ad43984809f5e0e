//! Rejection sampling without materialising a resampled batch.
//!
//! The pool only supplies the normaliser; each proposal is scored afresh.
//! The logistic acceptance rule accepts roughly once per pool size, so
//! it gets fewer draws.

use polarity_sampling::polarity::{build_pool, LatentDomain, OnlineSampler, OnlineVariant, PoolOptions};
use polarity_sampling::toy;

fn main() -> polarity_sampling::Result<()> {
    let net = toy::two_region_plane(1.0);
    let domain = LatentDomain::symmetric_box(2, 1.0)?;
    let pool = build_pool(&net, None, &domain, &PoolOptions::new(20_000, 2, 3))?;

    for (variant, count) in [(OnlineVariant::MaxNormalized, 5000), (OnlineVariant::Logistic, 500)] {
        let mut sampler = OnlineSampler::new(&pool, &net, None, -1.0, variant, 11)?;
        let draws = (0..count).map(|_| sampler.draw()).collect::<Result<Vec<_>, _>>()?;
        let share = draws.iter().filter(|z| z[0] >= 0.0).count() as f64 / draws.len() as f64;
        println!(
            "{variant:?}: contracting share {share:.3}, {} proposals, mean acceptance {:.4}",
            sampler.proposals(),
            sampler.acceptance_rate_estimate()
        );
    }
    Ok(())
}
