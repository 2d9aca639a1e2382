mod commands;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "reconplan", version, about = "Reconstruction planning by Bayesian optimization")]
struct Cli {
    /// Worker threads for seeds and sensitivity cells.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run Sobol' initialization plus EI+ iterations for each seed.
    Optimize(OptimizeArgs),
    /// Evaluate one design vector and print cycle-averaged apposition.
    Evaluate(EvaluateArgs),
    /// Personalize a template model to patient geometry.
    Register(RegisterArgs),
    /// PCSA and branch forces from a scan cross-section.
    Pcsa(PcsaArgs),
    /// Perturb model parameters by a fixed fraction and tabulate F_opt changes.
    Sensitivity(SensitivityArgs),
    /// Dice overlap between predicted and observed masks.
    Validate(ValidateArgs),
    /// Summarize a finished optimization run.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Run configuration JSON.
    #[arg(long, conflicts_with = "case", required_unless_present = "case")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub case: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// `fopt` or `fsf`.
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub sobol: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub case: PathBuf,
    /// Comma-separated design vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub phi: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Registration bundle JSON.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Personalization settings JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PcsaArgs {
    /// masseter, medial_pterygoid, temporalis or lateral_pterygoid.
    #[arg(long)]
    pub group: String,
    /// Measured cross-section in cm².
    #[arg(long, conflicts_with = "mesh", required_unless_present = "mesh")]
    pub scs: Option<f64>,
    /// Muscle surface mesh to section.
    #[arg(long, requires = "landmarks")]
    pub mesh: Option<PathBuf>,
    /// Plane landmarks JSON.
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    /// One or more case files.
    #[arg(long, required = true)]
    pub case: Vec<PathBuf>,
    /// `zero`, `phi-star`, or a comma-separated design vector.
    #[arg(long, default_value = "zero", allow_hyphen_values = true)]
    pub baseline: String,
    #[arg(long)]
    pub perturbation: Option<f64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Comma-separated parameter names; all eleven by default.
    #[arg(long, value_delimiter = ',')]
    pub parameters: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// `[SIDE=]PATH` to a mask header or a point CSV to splat.
    #[arg(long = "predicted-mask", required = true)]
    pub predicted: Vec<String>,
    /// `[SIDE=]PATH` to a mask header.
    #[arg(long = "observed-mask", required = true)]
    pub observed: Vec<String>,
    /// Gaussian width in mm for splatted point predictions.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Splat field threshold.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of an `optimize` run.
    #[arg(long)]
    pub run: PathBuf,
    /// Defaults to `<run>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let args = argv[1..].to_vec();
    let result = match cli.command {
        Command::Optimize(a) => commands::optimize(a, args),
        Command::Evaluate(a) => commands::evaluate(a, args),
        Command::Register(a) => commands::register(a, args),
        Command::Pcsa(a) => commands::pcsa(a, args),
        Command::Sensitivity(a) => commands::sensitivity(a, args),
        Command::Validate(a) => commands::validate(a, args),
        Command::Report(a) => commands::report(a, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", commands::describe(f.error()));
            ExitCode::from(f.code())
        }
    }
}
