use std::fs;
use std::io::{self, Read, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use survpower_cli::{dispatch, ApiError, Command};
use survpower_core::sim::write_tau_hats;

#[derive(Parser)]
#[command(
    name = "survpower",
    version,
    about = "Sample size and power for marginal hazard ratios"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Io {
    /// Payload file, or `-` for stdin.
    #[arg(long, value_name = "FILE", default_value = "-")]
    json: String,
    /// Overrides the payload seed (obs, vif, curve, simulate).
    #[arg(long)]
    seed: Option<u64>,
    /// Write the result here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Randomized trial sample size.
    Rct(Io),
    /// Observational study sample size under a Beta score model.
    Obs(Io),
    /// Monte Carlo design effect of a weighting scheme.
    Vif(Io),
    /// Confounding-residual bounds and the sample-size range they imply.
    Bounds(Io),
    /// Size or power along a sweep of n, phi or hr.
    Curve(Io),
    /// Calibrated simulation of the power a sample size delivers.
    Simulate {
        #[command(flatten)]
        io: Io,
        /// Also write the per-replicate estimates as CSV.
        #[arg(long, value_name = "FILE")]
        tau_csv: Option<PathBuf>,
    },
    /// Serve the JSON API over HTTP.
    Serve {
        #[arg(long, env = "SURVPOWER_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Serve static files (the web UI) from this directory.
        #[arg(long, value_name = "DIR")]
        static_dir: Option<PathBuf>,
    },
}

fn read_payload(path: &str) -> io::Result<Vec<u8>> {
    if path == "-" {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf)?;
        Ok(buf)
    } else {
        fs::read(path)
    }
}

fn run(command: Command, io: &Io, tau_csv: Option<&PathBuf>) -> Result<(), ApiError> {
    let body = read_payload(&io.json).map_err(|e| ApiError::internal(format!("reading {}: {e}", io.json)))?;
    let outcome = dispatch(command, &body, io.seed)?;
    let mut text = outcome.render(io.pretty);
    text.push('\n');
    match &io.out {
        Some(path) => fs::write(path, text),
        None => io::stdout().write_all(text.as_bytes()),
    }
    .map_err(|e| ApiError::internal(format!("writing result: {e}")))?;
    if let (Some(path), Some(taus)) = (tau_csv, &outcome.tau_hats) {
        let file = fs::File::create(path).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
        write_tau_hats(file, taus)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, io, tau_csv) = match &cli.command {
        Cmd::Rct(io) => (Command::Rct, io, None),
        Cmd::Obs(io) => (Command::Obs, io, None),
        Cmd::Vif(io) => (Command::Vif, io, None),
        Cmd::Bounds(io) => (Command::Bounds, io, None),
        Cmd::Curve(io) => (Command::Curve, io, None),
        Cmd::Simulate { io, tau_csv } => (Command::Simulate, io, tau_csv.as_ref()),
        Cmd::Serve { bind, static_dir } => {
            let rt = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            return match rt.block_on(survpower_cli::serve::serve(*bind, static_dir.clone())) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            };
        }
    };
    match run(command, io, tau_csv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json(io.pretty));
            ExitCode::from(err.class.exit_code() as u8)
        }
    }
}
