use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use confidence_lab::commands::{
    cmd_convergence, cmd_decompose, cmd_estimate, cmd_fit_mixture, cmd_metrics, cmd_simulate, CommandOutput,
};
use confidence_lab::config::RunConfig;
use confidence_lab::ingest::{write_atomic, OutputFormat};
use confidence_lab::Error;

/// Confidence estimators for sampled reasoning paths.
///
/// Log verbosity is read from CONFLAB_LOG (error, warn, info, debug, trace).
#[derive(Debug, Parser)]
#[command(name = "conflab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON oracle file: one oracle or an array of them.
    #[arg(long, global = true)]
    oracle: Option<PathBuf>,
    /// JSONL sampled paths (estimate, fit-mixture) or a results file (metrics).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<OutputFormat>,
    /// Side report file (selections, pruning reports or reliability bins).
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Skip malformed input lines instead of failing.
    #[arg(long, global = true)]
    lenient: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample oracles and score every estimator's selections.
    Simulate,
    /// Monte Carlo estimation error against the closed forms.
    Convergence,
    /// Exact split of reasoning error into estimation and model error.
    Decompose,
    /// Run the estimators on sampled paths from a JSONL file.
    Estimate,
    /// Fit the Weibull mixture to each problem's path probabilities.
    FitMixture,
    /// Accuracy, ECE and reliability bins of a results file.
    Metrics,
    /// Print the effective configuration as TOML.
    Config {
        /// Print the built-in defaults instead.
        #[arg(long)]
        print_defaults: bool,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(p) = &cli.oracle {
        config.oracle = Some(p.clone());
    }
    if let Some(p) = &cli.input {
        config.input = Some(p.clone());
    }
    if let Some(p) = &cli.out {
        config.out = Some(p.clone());
    }
    if let Some(f) = cli.format {
        config.format = f;
    }
    config.validate()?;
    Ok(config)
}

fn emit(output: CommandOutput, out: Option<&Path>, report: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => write_atomic(path, |w| w.write_all(&output.main).map_err(|e| Error::io(path, e)))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&output.main)
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    if let (Some(path), Some(bytes)) = (report, output.report) {
        if let Err(e) = write_atomic(path, |w| w.write_all(&bytes).map_err(|e| Error::io(path, e))) {
            // Leave nothing half-done behind.
            if let Some(out) = out {
                let _ = std::fs::remove_file(out);
            }
            return Err(e);
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = resolve_config(cli)?;
    let report = cli.report.is_some();
    let output = match &cli.command {
        Command::Simulate => cmd_simulate(&config, report)?,
        Command::Convergence => cmd_convergence(&config)?,
        Command::Decompose => cmd_decompose(&config)?,
        Command::Estimate => cmd_estimate(&config, cli.lenient, report)?,
        Command::FitMixture => cmd_fit_mixture(&config, cli.lenient)?,
        Command::Metrics => cmd_metrics(&config, report)?,
        Command::Config { print_defaults } => {
            let shown = if *print_defaults { RunConfig::default() } else { config.clone() };
            CommandOutput {
                main: shown.to_toml()?.into_bytes(),
                report: None,
            }
        }
    };
    emit(output, config.out.as_deref(), cli.report.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CONFLAB_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Parse(lines)) => {
            eprintln!("error: {} malformed line(s)", lines.len());
            for l in &lines {
                eprintln!("  {l}");
            }
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
