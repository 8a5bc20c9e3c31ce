use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aircomp_dp::{load_scenario, Scenario, Seed};
use aircomp_dp_cli::{run_checks, run_tradeoff, run_train, Checks, CliError};
use clap::{Args, Parser, Subcommand};

const EXIT_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "aircomp-dp",
    version,
    about = "Differentially private over-the-air aggregation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// SNR-privacy tradeoff: analytical bounds and Monte Carlo SNR per grid point.
    Tradeoff(Common),
    /// Federated training curves for every client count and power policy.
    Train(Common),
    /// Run the built-in consistency checks.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Master seed; overrides the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials; overrides the scenario.
    #[arg(long)]
    trials: Option<u64>,
    /// Output CSV; overrides the scenario. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<Scenario, CliError> {
        let mut scenario = load_scenario(&self.scenario)?;
        if let Some(seed) = self.seed {
            scenario.experiment.master_seed = seed;
        }
        if let Some(trials) = self.trials {
            if trials == 0 {
                return Err(CliError::Usage("--trials must be >= 1".into()));
            }
            scenario.experiment.num_trials = trials;
        }
        if let Some(out) = &self.out {
            scenario.experiment.output_path = Some(out.clone());
        }
        Ok(scenario)
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|source| CliError::Io {
                path: p.to_owned(),
                source,
            })?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Tradeoff(args) => {
            let scenario = args.load()?;
            let out = open_output(scenario.experiment.output_path.as_deref())?;
            run_tradeoff(&scenario, out)?;
        }
        Command::Train(args) => {
            let scenario = args.load()?;
            let out = open_output(scenario.experiment.output_path.as_deref())?;
            run_train(&scenario, out)?;
        }
        Command::Validate(args) => {
            let scenario = args.load()?;
            let checks = Checks::new(scenario.experiment.num_trials, Seed(scenario.experiment.master_seed));
            let report = run_checks(&scenario, &checks)?;
            for r in &report.results {
                println!("{r}");
            }
            let failed = report.failures().count();
            println!("{} checks, {} failed", report.results.len(), failed);
            if let Some(path) = &scenario.experiment.output_path {
                report.write_csv(open_output(Some(path))?)?;
            }
            if failed > 0 {
                return Ok(EXIT_VALIDATION);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
