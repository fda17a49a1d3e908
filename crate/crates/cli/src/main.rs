use std::path::PathBuf;
use std::process::ExitCode;

use bosedyn_cli::config::{ConfigError, ExperimentConfig};
use bosedyn_cli::{execute, resolve_output_dir, Command};
use clap::{Parser, Subcommand};

/// Effective-dynamics experiments for trapped Bose gases.
///
/// Exit codes: 0 success, 1 configuration error, 2 invariant violation.
#[derive(Parser)]
#[command(name = "bosedyn", version)]
struct Cli {
    /// Output directory; overrides BOSEDYN_OUTPUT_DIR and the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment selected by the config's `mode`.
    Run { config: PathBuf },
    /// Closeness sweep over N (mode closeness_sweep).
    Sweep {
        config: PathBuf,
        /// Comma-separated, e.g. 200,400,800.
        #[arg(long, value_delimiter = ',')]
        n_values: Option<Vec<f64>>,
    },
    /// Fock-space identity checks.
    VerifyFock { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, path) = match cli.command {
        Cmd::Run { config } => (Command::Run, config),
        Cmd::Sweep { config, n_values } => (Command::Sweep(n_values), config),
        Cmd::VerifyFock { config } => (Command::VerifyFock, config),
    };
    let config = std::fs::read_to_string(&path)
        .map_err(|source| ConfigError::Io { path: path.clone(), source })
        .and_then(|text| serde_json::from_str::<ExperimentConfig>(&text).map_err(ConfigError::from));
    let dir = resolve_output_dir(cli.output_dir.as_deref(), config.as_ref().ok());
    let outcome = execute(&command, config, &dir);
    let m = &outcome.manifest;
    match &m.failure {
        Some(f) => eprintln!("{}: {f}", serde_json::to_string(&m.status).unwrap_or_default()),
        None => println!("complete; outputs in {}", outcome.output_dir.display()),
    }
    ExitCode::from(outcome.exit_code as u8)
}
