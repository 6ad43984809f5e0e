//! Enumerate the regions of a small generator and evaluate its output
//! density under polarity in closed form, next to a Monte-Carlo histogram.

use polarity_sampling::density::{
    analytic_bin_masses, enumerate_regions, mc_density, mode_regions, total_variation, HistogramSpec,
};
use polarity_sampling::polarity::{build_pool, LatentDomain, PolaritySampler, PoolOptions};
use polarity_sampling::toy;

fn main() -> polarity_sampling::Result<()> {
    let net = toy::biased_clusters();
    let domain = LatentDomain::symmetric_box(1, 1.0)?;
    let atlas = enumerate_regions(&net, &domain, 64)?;
    for r in atlas.regions() {
        println!("region {:016x}: slope {:.2}, prior mass {:.4}", r.code_hash, r.sigma[0], r.prior_mass);
    }

    let rho = -1.0;
    let top = mode_regions(&atlas, rho)[0];
    println!("mode region at rho {rho}: slope {:.2}", top.sigma[0]);

    let spec = HistogramSpec::new(vec![-3.4], vec![2.8], vec![31])?;
    let analytic = analytic_bin_masses(&atlas.density(rho)?, &spec, 64)?;
    let pool = build_pool(&net, None, &domain, &PoolOptions::new(200_000, 1, 5))?;
    let draws = PolaritySampler::new(&pool, rho)?.sample_batch(200_000, 6);
    let empirical = mc_density(&net, &draws, &spec)?;
    println!("total variation, analytic vs sampled: {:.4}", total_variation(&analytic, &empirical.mass)?);
    Ok(())
}
