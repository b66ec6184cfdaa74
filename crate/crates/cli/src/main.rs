//! `crvsadj`: fit the misclassification model, validate it, and export
//! adjustment inputs from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

/// Exit codes.
const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "crvsadj", version, about = "Sensitivity and specificity of maternal-death reporting in CRVS data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML run configuration; every key is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replaces every seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Format of tables written or printed.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Overwrite a completed run.
    #[arg(long)]
    pub force: bool,
    /// No progress messages.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    /// Leave out 20% of the studies at random, repeatedly.
    Random20,
    /// Leave out the most recent study of each country.
    LeaveLast,
    /// No-study predictions at increasing lags from the last study.
    Lags,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the global model and write a run directory.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        studies: PathBuf,
        #[arg(long)]
        crvs: Option<PathBuf>,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Refit one country with the hyperparameters of a global run.
    FitCountry {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        country: String,
        /// Studies of the country; defaults to those of the run.
        #[arg(long)]
        studies: Option<PathBuf>,
        #[arg(long)]
        crvs: Option<PathBuf>,
        /// Output directory; defaults to `<run>/fit_country_<id>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summaries for a country-year without studies, by lag.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated lags in years.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        lags: Vec<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adjustment factors from sensitivity, specificity and true PM.
    Adjust {
        #[command(flatten)]
        common: Common,
        /// Table with columns year, se, sp (an optional country column is kept).
        #[arg(long)]
        summaries: PathBuf,
        /// Table with columns year, p_truemat (and optionally country).
        #[arg(long, conflicts_with = "pm")]
        truemat: Option<PathBuf>,
        /// A constant true proportion maternal.
        #[arg(long)]
        pm: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Out-of-sample validation.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        studies: PathBuf,
        #[arg(long)]
        crvs: Option<PathBuf>,
        #[arg(long, value_enum)]
        scheme: Scheme,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CRVS completeness per country-year.
    Completeness {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        crvs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a dataset with known truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per country-year inputs of the downstream mortality model.
    ExportBmat {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot-ready estimates with 80% intervals.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A fit finished but did not converge.
#[derive(Debug)]
pub struct Unconverged {
    pub max_rhat: f64,
    pub threshold: f64,
}

impl std::fmt::Display for Unconverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "not converged: max R-hat {:.4} exceeds {}; results were written", self.max_rhat, self.threshold)
    }
}

impl std::error::Error for Unconverged {}

/// Bad arguments found after parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Unconverged>().is_some() {
            return EXIT_NUMERICAL;
        }
        if cause.downcast_ref::<Usage>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<crvsadj::Error>() {
            return match e {
                crvsadj::Error::Config(_) => EXIT_USAGE,
                e if e.is_numerical() => EXIT_NUMERICAL,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Fit { common, studies, crvs, out } => commands::fit(&common, &studies, crvs.as_deref(), &out),
        Command::FitCountry { common, run, country, studies, crvs, out } => {
            commands::fit_country(&common, &run, &country, studies.as_deref(), crvs.as_deref(), out.as_deref())
        }
        Command::Predict { common, run, lags, out } => commands::predict(&common, &run, &lags, out.as_deref()),
        Command::Adjust { common, summaries, truemat, pm, out } => {
            commands::adjust(&common, &summaries, truemat.as_deref(), pm, out.as_deref())
        }
        Command::Validate { common, studies, crvs, scheme, out } => {
            commands::validate(&common, &studies, crvs.as_deref(), scheme, out.as_deref())
        }
        Command::Completeness { common, crvs, out } => commands::completeness(&common, &crvs, out.as_deref()),
        Command::Simulate { common, out } => commands::simulate(&common, &out),
        Command::ExportBmat { common, run, out } => commands::export_bmat(&common, &run, out.as_deref()),
        Command::Summarize { common, run, out } => commands::summarize(&common, &run, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
