use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use latentid::estimators::{self, FitOptions};
use latentid::exec::with_threads;
use latentid::harness::{self, McConfig, ReportFormat};
use latentid::identifiability::{self, Abscissae, DerivativeMethod, JacobianOptions, Tolerance, Verdict};
use latentid::models::parse_model;
use latentid::moments::{self, MomentVector, WvConvention, WvOptions};
use latentid::simulate::{self, SeedSpec};
use latentid::{Execution, LatentModel};

#[derive(Parser)]
#[command(
    name = "latentid",
    version,
    about = "Latent time-series and spatial models: moments, identifiability, estimation"
)]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = harness::DEFAULT_MASTER_SEED)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output file (directory for `mc`); standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a time series, or a spatial field at given coordinates.
    Simulate(SimulateArgs),
    /// Theoretical moments of a model as `kind,abscissa,value` CSV.
    Moments(MomentsArgs),
    /// Jacobian rank report; exits with 2 when rank deficient.
    Ident(IdentArgs),
    /// Fit a model to data with GMWM or GMM.
    Fit(FitArgs),
    /// Monte-Carlo MSE study.
    Mc(McArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model_file: PathBuf,
    /// Series length (time-series models).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// `x,y` per line (spatial models).
    #[arg(long)]
    coords: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MomentArg {
    Acvf,
    Sdf,
    Wv,
    Spatial,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Quadratic,
    Calibrated,
}

impl ConventionArg {
    fn get(self) -> WvConvention {
        match self {
            ConventionArg::Quadratic => WvConvention::QUADRATIC_FORM,
            ConventionArg::Calibrated => WvConvention::CALIBRATED,
        }
    }
}

#[derive(Args)]
struct MomentsArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long, value_enum)]
    kind: MomentArg,
    /// Largest lag (acvf).
    #[arg(long, default_value_t = 10)]
    max_lag: usize,
    /// Number of wavelet scales (wv).
    #[arg(long, default_value_t = 10)]
    scales: u32,
    /// Comma-separated frequencies (sdf) or distances (spatial).
    #[arg(long, value_delimiter = ',')]
    at: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ConventionArg::Quadratic)]
    convention: ConventionArg,
}

#[derive(Args)]
struct IdentArgs {
    #[arg(long)]
    model_file: PathBuf,
    /// Moment family; defaults to acvf for stationary, wv for other time
    /// series and spatial for spatial models.
    #[arg(long, value_enum)]
    kind: Option<MomentArg>,
    /// Comma-separated abscissae (lags, levels, frequencies or distances).
    #[arg(long, value_delimiter = ',')]
    at: Vec<f64>,
    /// Finite differences for every column.
    #[arg(long)]
    finite_difference: bool,
    /// Rank threshold relative to the largest singular value.
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Also write the singular values as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Gmwm,
    Gmm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightArg {
    Default,
    Identity,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    estimator: EstimatorArg,
    #[arg(long)]
    model_file: PathBuf,
    /// One value per line.
    #[arg(long)]
    data: PathBuf,
    /// Wavelet scales for GMWM (default floor(log2 n) - 5, at least the parameter count).
    #[arg(long)]
    scales: Option<u32>,
    /// Largest lag for GMM (default: number of parameters).
    #[arg(long)]
    lags: Option<usize>,
    #[arg(long, value_enum, default_value_t = WeightArg::Default)]
    weights: WeightArg,
    /// Also write `parameter,estimate` CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    /// Configuration file (`key = value` plus a `[model]` section).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment: latent1 or latent2.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Run replications on the calling thread only.
    #[arg(long)]
    sequential: bool,
    /// Skip the SVG chart.
    #[arg(long)]
    no_svg: bool,
}

fn read_model(path: &Path) -> Result<LatentModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_model(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .with_context(|| format!("{}:{}: not a number", path.display(), i + 1))
        })
        .collect()
}

fn read_coords(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut coords = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            bail!("{}:{}: expected x,y", path.display(), i + 1);
        }
        coords.push([
            parts[0]
                .parse()
                .with_context(|| format!("{}:{}", path.display(), i + 1))?,
            parts[1]
                .parse()
                .with_context(|| format!("{}:{}", path.display(), i + 1))?,
        ]);
    }
    Ok(coords)
}

fn simulate_cmd(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let model = read_model(&args.model_file)?;
    let seed = SeedSpec::new(cli.seed, args.stream);
    let mut text = String::new();
    if model.domain() == latentid::Domain::Spatial {
        let Some(path) = &args.coords else {
            bail!("spatial models need --coords");
        };
        let coords = read_coords(path)?;
        let values = simulate::simulate_spatial_field(&model, &model.theta(), &coords, seed)?;
        text.push_str("x,y,value\n");
        for (c, v) in coords.iter().zip(values) {
            text.push_str(&format!("{},{},{}\n", c[0], c[1], v));
        }
    } else {
        let Some(n) = args.n else {
            bail!("time-series models need --n");
        };
        for v in simulate::simulate_time_series(&model, &model.theta(), n, seed)? {
            text.push_str(&format!("{v}\n"));
        }
    }
    emit(cli.out.as_deref(), &text)
}

fn moments_cmd(cli: &Cli, args: &MomentsArgs) -> Result<()> {
    let model = read_model(&args.model_file)?;
    let theta = model.theta();
    let v: MomentVector = match args.kind {
        MomentArg::Acvf => moments::acvf(&model, &theta, args.max_lag)?,
        MomentArg::Sdf => moments::sdf(&model, &theta, &args.at)?,
        MomentArg::Wv => moments::wv_theoretical_with(
            &model,
            &theta,
            args.scales,
            &WvOptions {
                convention: args.convention.get(),
                ..WvOptions::default()
            },
        )?,
        MomentArg::Spatial => moments::spatial_cov(&model, &theta, &args.at)?,
    };
    emit(cli.out.as_deref(), &v.to_csv())
}

fn ident_cmd(cli: &Cli, args: &IdentArgs) -> Result<ExitCode> {
    let model = read_model(&args.model_file)?;
    let kind = match args.kind {
        Some(k) => k,
        None if model.domain() == latentid::Domain::Spatial => MomentArg::Spatial,
        None if model.kinds().all(|k| k.is_stationary()) => MomentArg::Acvf,
        None => MomentArg::Wv,
    };
    let moment_kind = match kind {
        MomentArg::Acvf => latentid::MomentKind::Acvf,
        MomentArg::Sdf => latentid::MomentKind::Sdf,
        MomentArg::Wv => latentid::MomentKind::Wv,
        MomentArg::Spatial => latentid::MomentKind::SpatialCov,
    };
    let abscissae = if args.at.is_empty() {
        identifiability::default_abscissae(&model, moment_kind)
    } else {
        match kind {
            MomentArg::Acvf => Abscissae::Lags(args.at.iter().map(|&h| h as usize).collect()),
            MomentArg::Wv => Abscissae::Levels(args.at.iter().map(|&j| j as u32).collect()),
            MomentArg::Sdf => Abscissae::Frequencies(args.at.clone()),
            MomentArg::Spatial => Abscissae::Distances(args.at.clone()),
        }
    };
    let options = JacobianOptions {
        method: if args.finite_difference {
            DerivativeMethod::FiniteDifference
        } else {
            DerivativeMethod::Mixed
        },
        ..JacobianOptions::default()
    };
    let tol = args.rel_tol.map_or(Tolerance::Default, Tolerance::Relative);
    let report = identifiability::identifiability_report(&model, &model.theta(), &abscissae, tol, &options)?;
    let class = model.classify();
    let mut text = format!("model              {}\n", model.param_labels().join(" "));
    text.push_str(&format!("class              {}", class.label));
    if !class.notes.is_empty() {
        text.push_str(&format!(" ({})", class.notes));
    }
    text.push('\n');
    text.push_str(&report.to_text());
    emit(cli.out.as_deref(), &text)?;
    if let Some(path) = &args.csv {
        fs::write(path, report.singular_values_csv())?;
    }
    Ok(match report.verdict {
        Verdict::FullColumnRank => ExitCode::SUCCESS,
        Verdict::RankDeficient => ExitCode::from(2),
    })
}

fn fit_cmd(cli: &Cli, args: &FitArgs) -> Result<()> {
    let model = read_model(&args.model_file)?;
    let data = read_numbers(&args.data)?;
    let options = FitOptions {
        seed: cli.seed,
        ..FitOptions::default()
    };
    let fit = match args.estimator {
        EstimatorArg::Gmwm => {
            let j = args
                .scales
                .unwrap_or_else(|| estimators::default_levels(data.len(), model.n_params()));
            let wv = estimators::wv_estimate(&data, j)?;
            let weights = match args.weights {
                WeightArg::Default => {
                    let w = estimators::default_weights(&wv);
                    for warning in w.warnings() {
                        eprintln!("warning: {warning}");
                    }
                    w.matrix
                }
                WeightArg::Identity => DMatrix::identity(wv.num_scales(), wv.num_scales()),
            };
            estimators::gmwm_fit(&model, &wv, &weights, &options)?
        }
        EstimatorArg::Gmm => {
            let lags = args.lags.unwrap_or(model.n_params());
            let acvf = estimators::sample_acvf(&data, lags)?;
            let w = DMatrix::identity(acvf.len(), acvf.len());
            estimators::gmm_fit(&model, &acvf, &w, &options)?
        }
    };
    for warning in &fit.warnings {
        eprintln!("warning: {warning}");
    }
    let labels = model.param_labels();
    let width = labels.iter().map(String::len).max().unwrap_or(9).max(9);
    let mut text = format!("{:<width$}  estimate\n", "parameter");
    let mut csv = String::from("parameter,estimate\n");
    for (label, value) in labels.iter().zip(&fit.theta_hat) {
        text.push_str(&format!("{label:<width$}  {value}\n"));
        csv.push_str(&format!("{label},{value}\n"));
    }
    text.push_str(&format!(
        "objective {}  iterations {}  converged {}  starts {}\n",
        fit.objective_value, fit.iterations, fit.converged, fit.start_points_used
    ));
    emit(cli.out.as_deref(), &text)?;
    if let Some(path) = &args.csv {
        fs::write(path, csv)?;
    }
    Ok(())
}

fn mc_cmd(cli: &Cli, args: &McArgs) -> Result<()> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut c = harness::parse_config(&text)?;
            if !text.lines().any(|l| l.trim_start().starts_with("master_seed")) {
                c.master_seed = cli.seed;
            }
            c
        }
        (None, Some(name)) => {
            let mut c = McConfig::preset(name).with_context(|| format!("unknown preset {name}"))?;
            c.master_seed = cli.seed;
            c
        }
        (None, None) => bail!("mc needs --config or --preset"),
    };
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if !args.sizes.is_empty() {
        config.sample_sizes = args.sizes.clone();
    }
    if args.sequential {
        config.execution = Execution::Sequential;
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("mc_out"));
    let result = with_threads(cli.threads, || harness::run_monte_carlo(&config))?;
    let format = ReportFormat {
        csv: true,
        svg: !args.no_svg,
    };
    for path in harness::emit_report(&result, &dir, format)? {
        println!("wrote {}", path.display());
    }
    for f in &result.flags {
        println!(
            "{:<5} {:<14} monotone_decrease={}{}",
            f.estimator.label(),
            f.parameter,
            f.decreasing,
            f.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default()
        );
    }
    for (est, n, failed) in &result.failures {
        if *failed > 0 {
            println!("{est} n={n}: {failed} failed fits");
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(cli, a)?,
        Command::Moments(a) => moments_cmd(cli, a)?,
        Command::Ident(a) => return ident_cmd(cli, a),
        Command::Fit(a) => fit_cmd(cli, a)?,
        Command::Mc(a) => mc_cmd(cli, a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
