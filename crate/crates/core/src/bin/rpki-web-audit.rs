use std::num::NonZeroU32;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rpki_web_audit::pipeline::{run_stage, PipelineConfig, PipelineError, Stage};

/// Audit RPKI route-origin coverage of web hosting infrastructure.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline configuration (TOML).
    #[arg(long, global = true, env = "RPKI_AUDIT_CONFIG")]
    config: Option<PathBuf>,

    /// Directory for stage artifacts.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Ranks per bin in aggregated statistics.
    #[arg(long, global = true)]
    bin_size: Option<NonZeroU32>,

    /// Replay DNS answers from a JSON-lines fixture instead of querying.
    #[arg(long, global = true)]
    fixture_dns: Option<PathBuf>,

    /// Rows in the coverage report.
    #[arg(long, global = true)]
    top_n: Option<usize>,
}

#[derive(Clone, Copy, Debug, Subcommand)]
enum Command {
    /// Resolve the domain list.
    Resolve,
    /// Map resolved addresses to announced prefixes and origins.
    Map,
    /// Validate prefix/origin pairs against the ROA set.
    Validate,
    /// Label CDN-hosted domains.
    Classify,
    /// Compute per-bin statistics and the summary.
    Analyze,
    /// Write the coverage report.
    Report,
    /// Run every stage in order.
    All,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Self {
        match c {
            Command::Resolve => Stage::Resolve,
            Command::Map => Stage::Map,
            Command::Validate => Stage::Validate,
            Command::Classify => Stage::Classify,
            Command::Analyze => Stage::Analyze,
            Command::Report => Stage::Report,
            Command::All => Stage::All,
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(size) = cli.bin_size {
        config.bin_size = size;
    }
    if let Some(path) = &cli.fixture_dns {
        config.fixture_dns_path = Some(path.clone());
    }
    if let Some(n) = cli.top_n {
        config.top_n = n;
    }
    config.check()?;
    Ok(config)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let config = load_config(cli)?;
    let stage = Stage::from(cli.command);
    run_stage(stage, &config).with_context(|| format!("stage '{stage}' failed"))?;
    log::info!(
        "stage '{stage}' finished, artifacts in {}",
        config.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<PipelineError>()
                .map(PipelineError::exit_code)
                .unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}
