use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use extrema_dp::cv::cv_choose_r;
use extrema_dp::io::{parse_bounds, read_csv_table};
use extrema_dp::{
    bonferroni_lower_limit, emit_plot_data, naive_lower_limit, ppb_lower_limit, run_experiment, substream,
    BootstrapNoise, Composition, CvConfig, Dataset, Epsilon, Error, ExperimentConfig, ExperimentReport,
    ExtremaModel, GaussianData, NuisanceRegressionData, PartitionedGaussianData, PlotAxis, PpbOptions,
    RegressionData, Result, Tuning,
};

#[derive(Parser)]
#[command(name = "extrema-dp", version, about = "Differentially private confidence limits for a maximum parameter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-sided lower confidence limit for the largest parameter.
    Ci {
        #[arg(value_enum)]
        model: ModelArg,
        #[command(flatten)]
        common: DataArgs,
        /// Bias-correction exponent: a number in (0, 0.5] such as 1/10, `full`, or `cv`.
        #[arg(long, default_value = "1/10")]
        r: String,
        #[arg(long, value_enum, default_value = "ppb")]
        method: MethodArg,
        #[arg(long = "B", default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        cv: CvArgs,
    },
    /// Cross-validated choice of r.
    Cv {
        #[arg(value_enum)]
        model: ModelArg,
        #[command(flatten)]
        common: DataArgs,
        #[command(flatten)]
        cv: CvArgs,
    },
    /// Monte Carlo coverage experiment from a TOML config; writes a report CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured replication count.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Tidy plotting table from a report CSV.
    PlotData {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "epsilon")]
        axis: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Gaussian,
    Regression,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ppb,
    SemiNaive,
    Rppb,
    Naive,
    Bonferroni,
}

#[derive(Args)]
struct DataArgs {
    /// CSV with a header row; regression input has y as the last column.
    #[arg(long)]
    input: PathBuf,
    /// Total privacy budget (`inf` disables noise).
    #[arg(long)]
    epsilon: Option<String>,
    /// Budget shares per privatized statistic, e.g. 1,1 or 1,1,1.
    #[arg(long, value_delimiter = ',')]
    split: Option<Vec<f64>>,
    /// Clamping box: `lo:hi` for every column or one `lo:hi` per column.
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
    /// Only the first K columns are of interest and privatized.
    #[arg(long, value_name = "K")]
    partial: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Candidate r values, e.g. 1/30,1/15,1/10,1/5.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<String>>,
    #[arg(long, default_value_t = 200)]
    inner_draws: usize,
}

impl CvArgs {
    fn config(&self) -> Result<CvConfig> {
        let mut cfg = CvConfig { folds: self.folds, inner_draws: self.inner_draws, ..CvConfig::default() };
        if let Some(grid) = &self.grid {
            cfg.grid = grid
                .iter()
                .map(|s| match s.parse::<Tuning>()? {
                    Tuning::R(r) => Ok(r),
                    Tuning::FullCorrection => Err(Error::Parameter("grid values must be numeric".into())),
                })
                .collect::<Result<_>>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn epsilon(args: &DataArgs) -> Result<Epsilon> {
    args.epsilon
        .as_deref()
        .ok_or_else(|| Error::Parameter("a privacy budget is mandatory: pass --epsilon (or --epsilon inf for no privacy)".into()))?
        .parse()
}

fn load(model: ModelArg, args: &DataArgs) -> Result<Dataset> {
    let table = read_csv_table(&args.input)?;
    let width = table.ncols();
    let spec = args
        .bounds
        .as_deref()
        .ok_or_else(|| Error::Parameter("sensitivity undefined without bounds: pass --bounds lo:hi".into()))?;
    let bounds = parse_bounds(spec, width)?;
    let x = table.data;
    match model {
        ModelArg::Gaussian => match args.partial {
            None => Ok(Dataset::Gaussian(GaussianData::new(x, bounds)?)),
            Some(k1) => {
                check_partial(k1, width)?;
                let x1 = x.columns(0, k1).into_owned();
                let x2 = x.columns(k1, width - k1).into_owned();
                Ok(Dataset::PartialGaussian(PartitionedGaussianData::new(x1, x2, bounds.slice(0..k1)?)?))
            }
        },
        ModelArg::Regression => {
            if width < 2 {
                return Err(Error::Parameter("regression input needs at least one covariate and y".into()));
            }
            let k = width - 1;
            let y = x.column(k).into_owned();
            let y_bounds = (bounds.lower()[k], bounds.upper()[k]);
            match args.partial {
                None => Ok(Dataset::Regression(RegressionData::new(x.columns(0, k).into_owned(), y, bounds.slice(0..k)?, y_bounds)?)),
                Some(k1) => {
                    check_partial(k1, k)?;
                    let z = x.columns(0, k1).into_owned();
                    let nuisance = x.columns(k1, k - k1).into_owned();
                    Ok(Dataset::PartialRegression(NuisanceRegressionData::new(z, nuisance, y, bounds.slice(0..k1)?, y_bounds)?))
                }
            }
        }
    }
}

fn check_partial(k1: usize, width: usize) -> Result<()> {
    if k1 == 0 || k1 >= width {
        return Err(Error::Parameter(format!("--partial must lie in 1..{width}")));
    }
    Ok(())
}

fn ledger_lines(out: &mut String, model: &dyn ExtremaModel) {
    for c in model.ledger().charges() {
        let _ = writeln!(out, "charge {}: {}", c.statistic_id, c.epsilon);
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    print!("{text}");
    if let Some(path) = output {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn run_ci(
    model_arg: ModelArg,
    args: &DataArgs,
    r: &str,
    method: MethodArg,
    draws: usize,
    alpha: f64,
    cv: &CvArgs,
) -> Result<()> {
    let eps = epsilon(args)?;
    let data = load(model_arg, args)?;
    let mut rng = substream(args.seed, &[]);
    let model = data.fit(eps, args.split.as_deref(), &mut rng)?;
    let mut out = String::new();
    let spent = model.ledger().total_under(Composition::Sequential);
    let (mut parallel, mut sequential) = (spent, spent);

    let tuning = if r.trim() == "cv" {
        let cv = cv_choose_r(&data, eps, args.split.as_deref(), &cv.config()?, &mut rng)?;
        parallel = cv.parallel_total.max(spent);
        sequential = cv.sequential_total + spent;
        let _ = writeln!(out, "cv chosen r: {}", cv.chosen_r);
        Tuning::R(cv.chosen_r)
    } else {
        r.parse::<Tuning>()?
    };
    let opts = |noise| PpbOptions { alpha, draws, noise };
    let result = match method {
        MethodArg::Ppb => ppb_lower_limit(&model, tuning, opts(BootstrapNoise::Include), &mut rng)?,
        MethodArg::SemiNaive => ppb_lower_limit(&model, Tuning::SEMI_NAIVE, opts(BootstrapNoise::Include), &mut rng)?,
        MethodArg::Rppb => ppb_lower_limit(&model, tuning, opts(BootstrapNoise::Skip), &mut rng)?,
        MethodArg::Naive => naive_lower_limit(&model, alpha, true)?,
        MethodArg::Bonferroni => bonferroni_lower_limit(&model, alpha, true)?,
    };
    let _ = writeln!(out, "method: {}", result.method.label());
    if let Some(t) = result.tuning {
        let _ = writeln!(out, "r: {t}");
    }
    let _ = writeln!(out, "lower limit: {}", result.lower_limit);
    let _ = writeln!(out, "level: {}", result.level);
    let _ = writeln!(out, "estimated maximum: {}", result.beta_max);
    let _ = writeln!(out, "estimate: {:?}", model.beta());
    let _ = writeln!(out, "n: {}", model.sample_size());
    if result.draws > 0 {
        let _ = writeln!(out, "bootstrap draws: {} ({} failed)", result.draws, result.failed_draws);
    }
    let _ = writeln!(out, "epsilon: {eps}");
    ledger_lines(&mut out, &model);
    let _ = writeln!(out, "budget (parallel view): {parallel}");
    let _ = writeln!(out, "budget (sequential view): {sequential}");
    let _ = writeln!(out, "seed: {}", args.seed);
    emit(&out, args.output.as_deref())
}

fn run_cv(model_arg: ModelArg, args: &DataArgs, cv: &CvArgs) -> Result<()> {
    let eps = epsilon(args)?;
    let data = load(model_arg, args)?;
    let config = cv.config()?;
    let result = cv_choose_r(&data, eps, args.split.as_deref(), &config, &mut substream(args.seed, &[]))?;
    let mut out = String::new();
    let _ = writeln!(out, "chosen r: {}", result.chosen_r);
    for (r, c) in config.grid.iter().zip(&result.criteria) {
        let _ = writeln!(out, "criterion r={r}: {c}");
    }
    let _ = writeln!(out, "fold estimations: {}", 2 * config.folds);
    let _ = writeln!(out, "budget (parallel view): {}", result.parallel_total);
    let _ = writeln!(out, "budget (sequential view): {}", result.sequential_total);
    let _ = writeln!(out, "seed: {}", args.seed);
    emit(&out, args.output.as_deref())
}

fn run_simulate(config: &Path, reps: Option<usize>, seed: Option<u64>, output: Option<&Path>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_path(config)?;
    if let Some(r) = reps {
        cfg.reps = r;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = run_experiment(&cfg)?;
    emit(&report.to_csv()?, output)
}

fn run_plot(input: &Path, axis: &str, output: Option<&Path>) -> Result<()> {
    let report = ExperimentReport::from_csv(&std::fs::read_to_string(input)?)?;
    let axis: PlotAxis = axis.parse()?;
    emit(&emit_plot_data(&report, axis)?, output)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ci { model, common, r, method, draws, alpha, cv } => {
            run_ci(*model, common, r, *method, *draws, *alpha, cv)
        }
        Command::Cv { model, common, cv } => run_cv(*model, common, cv),
        Command::Simulate { config, reps, seed, output } => run_simulate(config, *reps, *seed, output.as_deref()),
        Command::PlotData { input, axis, output } => run_plot(input, axis, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
