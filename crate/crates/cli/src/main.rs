use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use negbin_core::forecast::{evaluate_fixed, evaluate_rolling, write_forecast_csv};
use negbin_core::inference::{fit_mle, read_params_kv, run_simulation_study, write_study_csv, FitOptions};
use negbin_core::inversion::{bench_compare, bench_grid};
use negbin_core::process::transition_row;
use negbin_core::simulate::{simulate_path, substream};
use negbin_core::{Alignment, Error, GridPreset, ModelParams, RollingConfig, SampleSchedule, TimeSeries};

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "negbin", version, about = "Continuous-time negative binomial count processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one stationary path to a `time,count` CSV.
    Simulate(SimulateArgs),
    /// Fit (r, q, c) by maximum likelihood.
    Fit(FitArgs),
    /// Fit many simulated replicates and summarize the estimates.
    Study(StudyArgs),
    /// Print one row of transition probabilities.
    Transition(TransitionArgs),
    /// Rolling-origin forecast evaluation (MSE and log predictive score).
    Forecast(ForecastArgs),
    /// Time exact against inversion-based likelihood construction.
    Bench(BenchArgs),
}

#[derive(Args, Clone, Copy)]
struct ParamArgs {
    #[arg(long)]
    r: f64,
    #[arg(long)]
    q: f64,
    #[arg(long)]
    c: f64,
}

impl ParamArgs {
    fn model(&self) -> Result<ModelParams, Error> {
        ModelParams::new(self.r, self.q, self.c)
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum ScheduleKind {
    Equal,
    Exponential,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Number of observations.
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "equal")]
    schedule: ScheduleKind,
    /// Spacing for the equal schedule.
    #[arg(long)]
    dt: Option<f64>,
    /// Arrival rate for the exponential schedule.
    #[arg(long)]
    rate: Option<f64>,
}

impl ScheduleArgs {
    fn build(&self) -> Result<SampleSchedule, CliError> {
        let schedule = match (self.schedule, self.dt, self.rate) {
            (ScheduleKind::Equal, Some(dt), None) => SampleSchedule::Equal { dt, n: self.n },
            (ScheduleKind::Exponential, None, Some(rate)) => SampleSchedule::ExponentialArrivals { rate, n: self.n },
            (ScheduleKind::Equal, _, _) => return Err(CliError::invalid("the equal schedule takes --dt and no --rate")),
            (ScheduleKind::Exponential, _, _) => {
                return Err(CliError::invalid("the exponential schedule takes --rate and no --dt"))
            }
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Random seed; drawn from system entropy and reported when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Input `time,count` CSV.
    #[arg(long)]
    input: PathBuf,
    /// Condition on the first observation instead of including its stationary density.
    #[arg(long)]
    no_initial: bool,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    /// Seed of the start design.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iteration cap for each simplex search.
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    /// Key-value result file; the result is printed to stdout as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    reps: usize,
    /// Comma-separated prefix lengths to fit; defaults to the full length.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long)]
    no_initial: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TransitionArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    t: f64,
    #[arg(long)]
    x0: u64,
    /// Bound on the probability mass left out of the printed row.
    #[arg(long, default_value_t = 1e-10)]
    eps: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy)]
enum AlignmentArg {
    Target,
    Origin,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    input: PathBuf,
    /// Observations in the initial training window.
    #[arg(long)]
    train: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    horizons: Vec<usize>,
    /// Refit on the expanding window at every origin (the default).
    #[arg(long, overrides_with = "no_refit")]
    refit: bool,
    /// Fit once on the training window.
    #[arg(long, overrides_with = "refit")]
    no_refit: bool,
    /// Use fixed parameters from a `fit --out` file instead of estimating them.
    #[arg(long, conflicts_with_all = ["refit", "no_refit"])]
    params: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "target")]
    alignment: AlignmentArg,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy)]
enum PresetArg {
    Small,
    PaperLike,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "small")]
    grid_preset: PresetArg,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INVALID, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::Io(_) => EXIT_IO,
            _ => EXIT_INVALID,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError { code: EXIT_IO, message: e.to_string() }
    }
}

type CmdResult = Result<u8, CliError>;

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError { code: EXIT_IO, message: format!("{}: {e}", p.display()) })?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_series(path: &Path) -> Result<TimeSeries, CliError> {
    let file = File::open(path).map_err(|e| CliError { code: EXIT_IO, message: format!("{}: {e}", path.display()) })?;
    TimeSeries::read_csv(BufReader::new(file)).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed = {s}");
        s
    })
}

fn fit_options(starts: usize, seed: u64, include_initial: bool) -> FitOptions {
    FitOptions { n_starts: starts, seed, include_initial, ..FitOptions::default() }
}

fn simulate(args: SimulateArgs) -> CmdResult {
    let params = args.params.model()?;
    let schedule = args.schedule.build()?;
    let seed = resolve_seed(args.seed);
    let series = simulate_path(&mut substream(seed, 0), &params, &schedule, None)?;
    let mut out = open_output(&args.out)?;
    series.write_csv(&mut out)?;
    out.flush()?;
    Ok(0)
}

fn fit(args: FitArgs) -> CmdResult {
    let series = read_series(&args.input)?;
    let options = FitOptions { max_iters: args.max_iters, ..fit_options(args.starts, args.seed, !args.no_initial) };
    let result = fit_mle(&series, &options)?;
    let mut text = Vec::new();
    result.write_kv(&mut text)?;
    io::stdout().write_all(&text)?;
    if let Some(path) = &args.out {
        let mut out = open_output(&Some(path.clone()))?;
        out.write_all(&text)?;
        out.flush()?;
    }
    if result.converged {
        Ok(0)
    } else {
        eprintln!("warning: the fit did not converge");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn study(args: StudyArgs) -> CmdResult {
    let params = args.params.model()?;
    let schedule = args.schedule.build()?;
    let sizes = if args.sizes.is_empty() { vec![schedule.len()] } else { args.sizes };
    let seed = resolve_seed(args.seed);
    let options = fit_options(args.starts, 0, !args.no_initial);
    let summaries = run_simulation_study(seed, &params, &schedule, args.reps, &sizes, &options)?;
    let mut out = open_output(&args.out)?;
    write_study_csv(&summaries, &mut out)?;
    out.flush()?;
    let excluded: usize = summaries.iter().map(|s| s.n_excluded).sum();
    if excluded > 0 {
        for s in summaries.iter().filter(|s| s.n_excluded > 0) {
            eprintln!("warning: size {}: {} of {} replicate fits did not converge", s.size, s.n_excluded, s.n_requested);
        }
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(0)
}

fn transition(args: TransitionArgs) -> CmdResult {
    let params = args.params.model()?;
    let row = transition_row(&params, args.t, args.x0, args.eps)?;
    let mut out = open_output(&args.out)?;
    writeln!(out, "x1,prob")?;
    for (x1, p) in row.probs.iter().enumerate() {
        writeln!(out, "{x1},{p:e}")?;
    }
    writeln!(out, "# truncation_mass = {:e}", row.truncation_mass)?;
    out.flush()?;
    Ok(0)
}

fn forecast(args: ForecastArgs) -> CmdResult {
    let series = read_series(&args.input)?;
    let alignment = match args.alignment {
        AlignmentArg::Target => Alignment::Target,
        AlignmentArg::Origin => Alignment::Origin,
    };
    let eval = match &args.params {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| CliError { code: EXIT_IO, message: format!("{}: {e}", path.display()) })?;
            let params = read_params_kv(BufReader::new(file))?;
            evaluate_fixed(&series, &params, args.train, &args.horizons, alignment)?
        }
        None => {
            let mut config = RollingConfig::new(args.train, args.horizons.clone());
            config.refit_each_origin = !args.no_refit;
            config.alignment = alignment;
            config.fit = fit_options(args.starts, args.seed, true);
            evaluate_rolling(&series, &config)?
        }
    };
    let mut out = open_output(&args.out)?;
    write_forecast_csv(&eval, &mut out)?;
    out.flush()?;
    for w in &eval.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if eval.warnings.is_empty() { 0 } else { EXIT_NOT_CONVERGED })
}

fn bench(args: BenchArgs) -> CmdResult {
    let preset = match args.grid_preset {
        PresetArg::Small => GridPreset::Small,
        PresetArg::PaperLike => GridPreset::PaperLike,
    };
    let report = bench_compare(&bench_grid(preset), args.reps)?;
    let mut out = open_output(&args.out)?;
    report.write_csv(&mut out)?;
    out.flush()?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Study(a) => study(a),
        Command::Transition(a) => transition(a),
        Command::Forecast(a) => forecast(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
