use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polarity_sampling::cpa_net::{load_model, CpaNetwork};
use polarity_sampling::density::{analytic_bin_masses, enumerate_regions, Histogram, HistogramSpec};
use polarity_sampling::harness::{self, Experiment, ExperimentConfig};
use polarity_sampling::metrics::{MetricReport, ReportConfig, SampleSet};
use polarity_sampling::polarity::{
    build_pool, LatentDomain, OnlineSampler, OnlineVariant, PolaritySampler, PoolOptions, SamplePool, Space,
};
use polarity_sampling::{seed, Error, Result};

#[derive(Parser)]
#[command(name = "polarity", version, about = "Polarity sampling for piecewise-affine generators")]
struct Cli {
    /// Generator model (JSON).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Feature network applied after the generator.
    #[arg(long, global = true)]
    feature_model: Option<PathBuf>,
    /// Sample pool file.
    #[arg(long, global = true)]
    pool: Option<PathBuf>,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted (harness runs default to the config's output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pool operations.
    Pool {
        #[command(subcommand)]
        action: PoolAction,
    },
    /// Draw latents (and outputs) under polarity rho.
    Sample(SampleArgs),
    /// Analytic density operations.
    Density {
        #[command(subcommand)]
        action: DensityAction,
    },
    /// Precision/recall sweep over the rho and psi grids.
    Pareto,
    /// N and k ablation.
    Ablate,
    /// Highest-weight latents at one polarity.
    Modes {
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
    },
    /// Frechet distance to a biased and a balanced reference per rho.
    Shift,
    /// Path-length distribution per rho.
    Ppl,
    /// Metric report of a generated CSV against a reference CSV.
    Metrics {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
        #[arg(long, default_value_t = 3)]
        k_nn: usize,
        #[arg(long, default_value_t = 3)]
        j: usize,
    },
}

#[derive(Subcommand)]
enum PoolAction {
    Build(PoolBuildArgs),
}

#[derive(Args)]
struct DomainArgs {
    #[arg(long, value_enum, default_value_t = DomainKind::Box)]
    domain: DomainKind,
    /// Per-dimension bound (box) or mean (gaussian).
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    lo: f64,
    /// Per-dimension bound (box) or std (gaussian).
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    hi: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainKind {
    Box,
    Gaussian,
}

#[derive(Args)]
struct PoolBuildArgs {
    #[command(flatten)]
    domain: DomainArgs,
    #[arg(long, default_value_t = 200_000)]
    n: usize,
    /// Singular values kept; defaults to 30, capped at the rank bound.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = polarity_sampling::spectral::DEFAULT_EPS)]
    eps: f64,
    #[arg(long)]
    sketch_rows: Option<usize>,
    /// Measure volumes through the feature model.
    #[arg(long)]
    features_space: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Use the online rejection sampler instead of pool resampling.
    #[arg(long)]
    online: bool,
    #[arg(long, value_enum, default_value_t = Variant::MaxNormalized)]
    variant: Variant,
    #[arg(long)]
    max_rejections: Option<u64>,
    #[command(flatten)]
    build: PoolBuildArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Logistic,
    MaxNormalized,
}

#[derive(Subcommand)]
enum DensityAction {
    /// Evaluates the density at CSV points, or bin masses over a 1-D grid.
    Eval(DensityArgs),
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    #[command(flatten)]
    domain: DomainArgs,
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    /// CSV of output points; prints `density` per row.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Histogram bins per output axis when no points are given.
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    range_lo: Vec<f64>,
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    range_hi: Vec<f64>,
    #[arg(long, default_value_t = 16)]
    subdivisions: usize,
    /// Also writes the region atlas as JSON.
    #[arg(long)]
    atlas: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
            }
            Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io { path: p.into(), source: e })?))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn finish(mut w: Box<dyn Write>) -> Result<()> {
    w.flush().map_err(|e| Error::Io { path: "<output>".into(), source: e })
}

fn require_model(cli: &Cli) -> Result<CpaNetwork> {
    let path = cli.model.as_ref().ok_or_else(|| Error::Config("--model is required".into()))?;
    load_model(path)
}

fn features(cli: &Cli) -> Result<Option<CpaNetwork>> {
    cli.feature_model.as_ref().map(load_model).transpose()
}

fn domain(args: &DomainArgs, dim: usize) -> Result<LatentDomain> {
    match args.domain {
        DomainKind::Box => LatentDomain::uniform_box(vec![args.lo; dim], vec![args.hi; dim]),
        DomainKind::Gaussian => LatentDomain::gaussian(vec![args.lo; dim], vec![args.hi; dim]),
    }
}

fn load_checked_pool(path: &Path, net: &CpaNetwork) -> Result<SamplePool> {
    let pool = SamplePool::load(path)?;
    pool.check_network(net)?;
    Ok(pool)
}

fn make_pool(cli: &Cli, args: &PoolBuildArgs, net: &CpaNetwork, feats: Option<&CpaNetwork>) -> Result<SamplePool> {
    let space = match (args.features_space, feats) {
        (false, _) => Space::Output,
        (true, Some(f)) => Space::composed_with(f),
        (true, None) => return Err(Error::Config("--features-space needs --feature-model".into())),
    };
    let space_dim = feats.map_or(net.output_dim(), CpaNetwork::output_dim);
    let opts = PoolOptions {
        n: args.n,
        k: args.k.unwrap_or(30.min(space_dim).min(net.input_dim())),
        eps: args.eps,
        seed: cli.seed.unwrap_or(0),
        space,
        sketch_rows: args.sketch_rows,
    };
    build_pool(net, feats, &domain(&args.domain, net.input_dim())?, &opts)
}

fn experiment(cli: &Cli) -> Result<Experiment> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = &cli.model {
        cfg.model = m.clone();
    }
    if let Some(f) = &cli.feature_model {
        cfg.feature_model = Some(f.clone());
    }
    if let Some(p) = &cli.pool {
        cfg.pool = Some(p.clone());
    }
    Experiment::load(cfg)
}

fn harness_out(cli: &Cli, exp: &Experiment, name: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| exp.config.output_dir.join(name))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Pool { action: PoolAction::Build(args) } => {
            let net = require_model(cli)?;
            let feats = features(cli)?;
            let pool = make_pool(cli, args, &net, feats.as_ref())?;
            let out = cli.out.as_ref().ok_or_else(|| Error::Config("pool build needs --out".into()))?;
            pool.save(out)?;
            eprintln!("{} records, {} distinct regions", pool.len(), pool.distinct_regions());
            Ok(())
        }
        Command::Sample(args) => sample(cli, args),
        Command::Density { action: DensityAction::Eval(args) } => density(cli, args),
        Command::Pareto => {
            let exp = experiment(cli)?;
            harness::write_csv(&harness::run_pareto(&exp)?, writer(Some(&harness_out(cli, &exp, "pareto.csv")))?)
        }
        Command::Ablate => {
            let exp = experiment(cli)?;
            harness::write_csv(&harness::run_ablation(&exp)?, writer(Some(&harness_out(cli, &exp, "ablation.csv")))?)
        }
        Command::Shift => {
            let exp = experiment(cli)?;
            harness::write_csv(&harness::run_shift(&exp)?, writer(Some(&harness_out(cli, &exp, "shift.csv")))?)
        }
        Command::Ppl => {
            let exp = experiment(cli)?;
            harness::write_csv(&harness::run_ppl(&exp)?, writer(Some(&harness_out(cli, &exp, "ppl.csv")))?)
        }
        Command::Modes { rho } => {
            let exp = experiment(cli)?;
            let report = harness::run_modes(&exp, *rho)?;
            let mut w = writer(Some(&harness_out(cli, &exp, "modes.json")))?;
            writeln!(w, "{}", report.to_json()).map_err(|e| Error::Io { path: "<output>".into(), source: e })?;
            finish(w)
        }
        Command::Metrics { real, fake, k_nn, j } => {
            let open = |p: &PathBuf| File::open(p).map_err(|e| Error::Io { path: p.clone(), source: e });
            let real = SampleSet::read_csv("real", open(real)?)?;
            let fake = SampleSet::read_csv("fake", open(fake)?)?;
            let config = ReportConfig { rho: None, psi: None, space: "input".into(), seeds: cli.seed.into_iter().collect() };
            let report = MetricReport::compute(&real, &fake, *k_nn, *j, config)?;
            let mut w = writer(cli.out.as_deref())?;
            writeln!(w, "{}", report.to_json()).map_err(|e| Error::Io { path: "<output>".into(), source: e })?;
            finish(w)
        }
    }
}

fn sample(cli: &Cli, args: &SampleArgs) -> Result<()> {
    let net = require_model(cli)?;
    let feats = features(cli)?;
    let pool = match &cli.pool {
        Some(p) => load_checked_pool(p, &net)?,
        None => make_pool(cli, &args.build, &net, feats.as_ref())?,
    };
    let draw_seed = seed::derive_seed(cli.seed.unwrap_or(0), "cli/sample", &[]);
    let latents = if args.online {
        let variant = match args.variant {
            Variant::Logistic => OnlineVariant::Logistic,
            Variant::MaxNormalized => OnlineVariant::MaxNormalized,
        };
        let mut s = OnlineSampler::new(&pool, &net, feats.as_ref(), args.rho, variant, draw_seed)?;
        if let Some(m) = args.max_rejections {
            s = s.with_max_rejections(m);
        }
        (0..args.count).map(|_| s.draw()).collect::<Result<Vec<_>>>()?
    } else {
        PolaritySampler::new(&pool, args.rho)?.sample_batch(args.count, draw_seed)
    };
    let mut csv = csv::Writer::from_writer(writer(cli.out.as_deref())?);
    let header: Vec<String> = (0..net.input_dim())
        .map(|d| format!("z{d}"))
        .chain((0..net.output_dim()).map(|d| format!("x{d}")))
        .collect();
    csv.write_record(&header)?;
    for z in &latents {
        let x = net.forward(z)?;
        csv.write_record(z.iter().chain(x.iter()).map(|v| v.to_string()))?;
    }
    csv.flush().map_err(|e| Error::Io { path: "<output>".into(), source: e })
}

fn density(cli: &Cli, args: &DensityArgs) -> Result<()> {
    let net = require_model(cli)?;
    let atlas = enumerate_regions(&net, &domain(&args.domain, net.input_dim())?, args.resolution)?;
    if let Some(p) = &args.atlas {
        atlas.save(p)?;
    }
    let eval = atlas.density(args.rho)?;
    let mut w = writer(cli.out.as_deref())?;
    let io_err = |e| Error::Io { path: "<output>".into(), source: e };
    if let Some(points) = &args.points {
        let file = File::open(points).map_err(|e| Error::Io { path: points.clone(), source: e })?;
        let set = SampleSet::read_csv("points", file)?;
        writeln!(w, "density").map_err(io_err)?;
        for x in set.points() {
            writeln!(w, "{}", eval.eval(x)?).map_err(io_err)?;
        }
        return finish(w);
    }
    let dim = net.output_dim();
    if args.range_lo.len() != dim || args.range_hi.len() != dim {
        return Err(Error::Config(format!("--range-lo and --range-hi need {dim} values each")));
    }
    let spec = HistogramSpec::new(args.range_lo.clone(), args.range_hi.clone(), vec![args.bins; dim])?;
    let mass = analytic_bin_masses(&eval, &spec, args.subdivisions)?;
    Histogram { spec, mass, outside: 0 }.write_csv(w)
}
