use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tbnn_core::data;
use tbnn_core::experiments::{
    emit_report, parse_seeds, run_experiment_in, ExperimentConfig, ExperimentKind, ReportFormat,
};
use tbnn_core::filtering::{apply_fir_filter, matrix_exponential};
use tbnn_core::geometry::{build_geometric_graph, local_pca, DimAggregate, PcaKernel};
use tbnn_core::sheaf::{assemble_sheaf_laplacian, SheafStructure};
use tbnn_core::spectral::{eigendecompose, evaluate_response};
use tbnn_core::{BundleSignal, ExpMethod, FrequencyResponse, PointCloud};

#[derive(Parser)]
#[command(name = "tbnn", version, about = "Tangent bundle filters and neural networks on point clouds")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write report.json / report.csv.
    Run(RunArgs),
    /// Sample a point cloud to CSV.
    Sample(SampleArgs),
    /// Build a sheaf artifact (JSON) from a point-cloud CSV.
    Sheaf(SheafArgs),
    /// Dump the smallest-magnitude eigenvalues, optionally with a filter response.
    Spectrum(SpectrumArgs),
    /// Apply FIR taps to a bundle signal.
    Filter(FilterArgs),
}

#[derive(Args)]
struct RunArgs {
    /// denoise-torus, reconstruct-wind, forecast-wind, classify or converge.
    kind: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Inclusive range `a..b` or comma list.
    #[arg(long)]
    seeds: Option<String>,
    /// Use the generated wind field when no wind CSV is available.
    #[arg(long)]
    synthetic_wind: bool,
    #[arg(long)]
    wind_csv: Option<PathBuf>,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Manifold {
    Torus,
    Klein,
    UnitTorus,
    FlatTorus,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum)]
    manifold: Manifold,
    #[arg(long, default_value_t = 100.0)]
    expected_n: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    a: f64,
    #[arg(long, default_value_t = 0.3)]
    b: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Discretization {
    #[arg(long, default_value_t = 0.5)]
    eps_n: f64,
    #[arg(long, default_value_t = 0.8)]
    eps_pca: f64,
    /// Intrinsic dimension, or estimated with `--gamma` when omitted.
    #[arg(long)]
    d_hat: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    #[arg(long, default_value = "median")]
    dim_aggregate: String,
}

#[derive(Args)]
struct SheafArgs {
    #[arg(long)]
    points: PathBuf,
    #[command(flatten)]
    disc: Discretization,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Sheaf artifact JSON.
    #[arg(long)]
    sheaf: PathBuf,
    /// Number of eigenvalues; all when omitted.
    #[arg(long)]
    count: Option<usize>,
    /// Comma-separated taps; adds a response column.
    #[arg(long, allow_hyphen_values = true)]
    taps: Option<String>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    sheaf: PathBuf,
    /// Bundle signal CSV (`node,component,f1..fF`).
    #[arg(long)]
    signal: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    taps: String,
    #[arg(long, default_value = "pade")]
    exp_method: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_taps(text: &str) -> Result<FrequencyResponse> {
    let taps = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad tap `{t}`")))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyResponse::new(taps)?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_sheaf(path: &Path) -> Result<SheafStructure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SheafStructure::from_json(&text)?)
}

fn run(args: RunArgs) -> Result<()> {
    let kind: ExperimentKind = args.kind.parse()?;
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path, Some(kind))
            .with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::defaults(kind),
    };
    for kv in &args.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("override `{kv}` is not key=value"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if args.synthetic_wind {
        cfg.synthetic_wind = true;
    }
    if let Some(p) = args.wind_csv {
        cfg.wind_csv = Some(p);
    }
    cfg.validate()?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(args.out.join("config.txt"), cfg.to_text())?;
    let report = run_experiment_in(&cfg, Some(&args.out))?;
    emit_report(&report, ReportFormat::Json, args.out.join("report.json"))?;
    emit_report(&report, ReportFormat::Csv, args.out.join("report.csv"))?;
    for (name, agg) in &report.aggregate {
        println!("{name:>24}  {:.6e} ± {:.2e}  (n={})", agg.mean, agg.std, agg.count);
    }
    for (name, v) in &report.summary {
        println!("{name:>24}  {v:.6e}");
    }
    println!("discarded {} of {} runs in {:.1}s", report.discarded, report.runs.len(), report.wall_clock_s);
    Ok(())
}

fn sample(args: SampleArgs) -> Result<()> {
    let cloud = match args.manifold {
        Manifold::Torus => data::sample_torus(args.expected_n, args.a, args.b, args.seed)?,
        Manifold::Klein => data::sample_klein(args.expected_n, args.seed)?,
        Manifold::UnitTorus => data::sample_unit_torus(args.expected_n, args.a, args.b, args.seed)?,
        Manifold::FlatTorus => data::sample_flat_torus(args.expected_n, 1.0, args.seed)?,
    };
    cloud.write_csv(File::create(&args.out)?)?;
    println!("wrote {} points to {}", cloud.len(), args.out.display());
    Ok(())
}

fn sheaf(args: SheafArgs) -> Result<()> {
    let cloud = PointCloud::read_csv(File::open(&args.points)?)?;
    let d = &args.disc;
    let kernel: PcaKernel = d.kernel.parse()?;
    let agg: DimAggregate = d.dim_aggregate.parse()?;
    let graph = build_geometric_graph(&cloud, d.eps_n)?;
    let pca = local_pca(&cloud, d.eps_pca, kernel)?;
    let basis = match d.d_hat {
        Some(k) => pca.basis(k)?,
        None => pca.estimated_basis(d.gamma, agg)?,
    };
    let (sheaf, _) = assemble_sheaf_laplacian(graph, basis)?;
    fs::write(&args.out, sheaf.to_json()?)?;
    println!(
        "wrote sheaf with n={}, d_hat={} to {}",
        sheaf.node_count(),
        sheaf.d_hat(),
        args.out.display()
    );
    Ok(())
}

fn spectrum(args: SpectrumArgs) -> Result<()> {
    let sheaf = load_sheaf(&args.sheaf)?;
    let dec = eigendecompose(&sheaf.laplacian(), args.count)?;
    let lambdas = dec.eigenvalues();
    let response = args.taps.as_deref().map(parse_taps).transpose()?;
    let mut w = output(args.out.as_deref())?;
    match &response {
        Some(r) => {
            writeln!(w, "index,lambda,response")?;
            for (i, (l, h)) in lambdas.iter().zip(evaluate_response(r, lambdas)).enumerate() {
                writeln!(w, "{i},{l:.16e},{h:.16e}")?;
            }
        }
        None => {
            writeln!(w, "index,lambda")?;
            for (i, l) in lambdas.iter().enumerate() {
                writeln!(w, "{i},{l:.16e}")?;
            }
        }
    }
    Ok(())
}

fn filter(args: FilterArgs) -> Result<()> {
    let sheaf = load_sheaf(&args.sheaf)?;
    let method: ExpMethod = args.exp_method.parse()?;
    let signal = BundleSignal::read_csv(File::open(&args.signal)?)?;
    if signal.node_count() != sheaf.node_count() || signal.d_hat() != sheaf.d_hat() {
        bail!(
            "signal has n={}, d_hat={} but the sheaf has n={}, d_hat={}",
            signal.node_count(),
            signal.d_hat(),
            sheaf.node_count(),
            sheaf.d_hat()
        );
    }
    let shift = matrix_exponential(&sheaf.laplacian(), method)?;
    let out = apply_fir_filter(&shift, &parse_taps(&args.taps)?, &signal)?;
    out.write_csv(output(args.out.as_deref())?)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Run(a) => run(a),
        Command::Sample(a) => sample(a),
        Command::Sheaf(a) => sheaf(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Filter(a) => filter(a),
    }
}
