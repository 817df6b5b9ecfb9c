use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tgs_glmb::assignment::{AssociationMap, CostMatrix};
use tgs_glmb::bench::{bench_kernels, write_bench_csv};
use tgs_glmb::config::ExperimentConfig;
use tgs_glmb::experiment::run_experiment;
use tgs_glmb::gibbs::{dedup, oracle_distance, run, SamplerConfig, Variant};
use tgs_glmb::glmb::{run_filter, write_diagnostics_csv, write_estimates_csv};
use tgs_glmb::metrics::{estimate_trajectories, ospa2, ospa_series, truth_trajectories};
use tgs_glmb::rng::derive_seed;
use tgs_glmb::scenario::{
    generate_measurements, generate_truth, read_measurements_csv, read_truth_csv, write_measurements_csv,
    write_truth_csv,
};
use tgs_glmb::{Error, Result};

/// GLMB multi-object tracking with Gibbs-sampled truncation.
#[derive(Parser)]
#[command(name = "glmb", version)]
struct Cli {
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML configuration file (see --print-defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the default configuration and exit.
    #[arg(long)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate ground truth and measurements into truth.csv and measurements.csv.
    Simulate,
    /// Run the filter on a measurement CSV.
    Filter(FilterArgs),
    /// Run one sampler on a cost-matrix file and list the distinct maps.
    Sample(SampleArgs),
    /// Time the sampling kernels on random cost matrices.
    Bench(BenchArgs),
    /// Compare every sampler with the exact distribution of a small cost matrix.
    OracleCheck(OracleArgs),
    /// Monte Carlo study as configured.
    Experiment,
}

#[derive(Args)]
struct FilterArgs {
    /// Measurement CSV (scan,zx,zy).
    measurements: PathBuf,
    /// Truth CSV; when given, OSPA and OSPA(2) are reported.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "tgs+")]
    variant: Variant,
}

#[derive(Args)]
struct SampleArgs {
    /// Cost-matrix file: a "P M" header, then P rows of M + 2 entries.
    matrix: PathBuf,
    #[arg(long, default_value = "tgs+")]
    variant: Variant,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "100,200,400")]
    p: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "100,200,400")]
    m: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    iterations: usize,
    #[arg(long, value_delimiter = ',', default_value = "tgs+,rgs+,dgs+fwd,dgs+bwd,sgs+")]
    variants: Vec<Variant>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

#[derive(Args)]
struct OracleArgs {
    /// Cost-matrix file, same format as for `sample`
    matrix: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    iterations: usize,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<fs::File>)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path, BufWriter::new(file)))
}

fn write_with(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<PathBuf> {
    let (path, mut w) = create(dir, name)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn read_matrix(path: &Path) -> Result<CostMatrix> {
    CostMatrix::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

fn simulate(cfg: &ExperimentConfig) -> Result<()> {
    let params = cfg.scenario_params(derive_seed(cfg.seed, &[0, 0]));
    let truth = generate_truth(&params);
    let frames = generate_measurements(&truth, &params.sensor, derive_seed(cfg.seed, &[0, 1]));
    let a = write_with(&cfg.output_dir, "truth.csv", |w| write_truth_csv(w, &truth))?;
    let b = write_with(&cfg.output_dir, "measurements.csv", |w| write_measurements_csv(w, &frames))?;
    println!("{} trajectories over {} scans", truth.tracks.len(), params.duration);
    println!("wrote {} and {}", a.display(), b.display());
    Ok(())
}

fn filter(cfg: &ExperimentConfig, args: &FilterArgs) -> Result<()> {
    let params = cfg.scenario_params(cfg.seed);
    let frames = read_measurements_csv(open(&args.measurements)?, Some(params.duration))?;
    let budget = cfg.budget(args.variant, cfg.seed);
    let reports = run_filter(&frames, &params.filter_models(), &budget)?;
    let a = write_with(&cfg.output_dir, "estimates.csv", |w| write_estimates_csv(w, &reports))?;
    let b = write_with(&cfg.output_dir, "diagnostics.csv", |w| write_diagnostics_csv(w, &reports))?;
    println!("wrote {} and {}", a.display(), b.display());
    if let Some(path) = &args.truth {
        let truth = read_truth_csv(open(path)?)?;
        let (p, c) = (cfg.metrics.ospa_order, cfg.metrics.ospa_cutoff);
        let series = ospa_series(&truth, &reports, p, c)?;
        let mean = series.iter().sum::<f64>() / series.len().max(1) as f64;
        let last = params.duration.saturating_sub(1);
        let d2 = ospa2(&truth_trajectories(&truth), &estimate_trajectories(&reports), 0..=last, p, c)?;
        println!("mean OSPA {mean:.3} m, OSPA(2) {d2:.3} m");
    }
    Ok(())
}

fn sample(cfg: &ExperimentConfig, args: &SampleArgs) -> Result<()> {
    let eta = read_matrix(&args.matrix)?;
    let sc = SamplerConfig::new(args.variant, args.iterations)
        .with_mixture(args.alpha, args.beta)
        .with_seed(cfg.seed);
    let batch = run(&AssociationMap::undetected(eta.rows()), &eta, &sc)?;
    let mut unique = dedup(&batch, &eta);
    unique.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight));
    let path = write_with(&cfg.output_dir, "samples.csv", |w| {
        writeln!(w, "map,log_weight")?;
        for u in &unique {
            writeln!(w, "{},{}", u.map, u.log_weight)?;
        }
        Ok(())
    })?;
    println!("{} distinct maps in {} iterates; wrote {}", unique.len(), batch.len(), path.display());
    Ok(())
}

fn bench(cfg: &ExperimentConfig, args: &BenchArgs) -> Result<()> {
    let records = bench_kernels(&args.p, &args.m, args.iterations, &args.variants, args.reps, cfg.seed)?;
    let path = write_with(&cfg.output_dir, "bench.csv", |w| write_bench_csv(w, &records))?;
    for r in &records {
        println!("{:8} P={:4} M={:4} {:.3e} s/iteration", r.variant, r.p, r.m, r.seconds_per_iteration);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn oracle_check(cfg: &ExperimentConfig, args: &OracleArgs) -> Result<()> {
    let eta = read_matrix(&args.matrix)?;
    for v in Variant::ALL {
        let sc = SamplerConfig::new(v, args.iterations)
            .with_mixture(cfg.truncation.alpha, cfg.truncation.beta)
            .with_seed(cfg.seed);
        println!("{:8} total variation {:.5}", v, oracle_distance(&eta, &sc)?);
    }
    Ok(())
}

fn experiment(cfg: &ExperimentConfig) -> Result<()> {
    let res = run_experiment(cfg)?;
    println!("{} trial records", res.records.len());
    for f in &res.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{}", ExperimentConfig::defaults_toml());
        return ExitCode::SUCCESS;
    }
    let Some(command) = &cli.command else {
        eprintln!("no subcommand given; see --help");
        return ExitCode::from(2);
    };
    let result = load_config(&cli).and_then(|cfg| match command {
        Command::Simulate => simulate(&cfg),
        Command::Filter(a) => filter(&cfg, a),
        Command::Sample(a) => sample(&cfg, a),
        Command::Bench(a) => bench(&cfg, a),
        Command::OracleCheck(a) => oracle_check(&cfg, a),
        Command::Experiment => experiment(&cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
