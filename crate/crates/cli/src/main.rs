use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use qgraph_cli::{run, write_outputs, Command, Format, RunConfig};

/// Spectral flow and Maslov index computations for quantum graphs.
#[derive(Debug, Parser)]
#[command(name = "qgraph", version)]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Eigenvalue detection threshold on the secular gap.
    #[arg(long)]
    tol_eig: Option<f64>,
    /// Step of the spectral scan grid.
    #[arg(long)]
    grid: Option<f64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = fs::read_to_string(&args.config)
        .map_err(anyhow::Error::from)
        .and_then(|text| RunConfig::from_json(&text))
        .and_then(|c| c.resolve(args.command, args.tol_eig, args.grid));
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error ({}): {e:#}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let outcome = match run(config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code());
        }
    };
    match write_outputs(&outcome, &args.out, args.format) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("output error: {e:#}");
            return ExitCode::from(2);
        }
    }
    if let Some(f) = &outcome.failure {
        eprintln!("{f}");
    } else {
        println!("{}: pass", outcome.report.command);
    }
    ExitCode::from(outcome.exit_code())
}
