// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! `photostat`: simulate, ingest, cluster, correlate and analyse photon
//! time-tag and photon-number data.

mod commands;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "photostat", version, about = "Photon statistics from time-tag and photon-number cameras")]
struct Cli {
    /// Worker threads; only speed depends on it, never results.
    #[arg(long, global = true, env = "PHOTOSTAT_THREADS")]
    threads: Option<usize>,
    /// Print failures as a JSON object on stderr.
    #[arg(long, global = true)]
    error_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a time-tag stream or a frame stack from a source model.
    Simulate(commands::simulate::Args),
    /// Validate a stream (binary or CSV) and write it back canonically sorted.
    Ingest(commands::ingest::Args),
    /// Reconstruct photon events from raw hits.
    Cluster(commands::cluster::Args),
    /// Count n-fold coincidences and compute g^(n) per channel subset.
    Correlate(commands::correlate::Args),
    /// Photon-number histograms, moments and classification.
    Pnr(commands::pnr::Args),
    /// Summarise a results file written by `correlate` or `pnr`.
    Report(commands::report::Args),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(error::config("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| error::config(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Ingest(a) => commands::ingest::run(a),
        Command::Cluster(a) => commands::cluster::run(a),
        Command::Correlate(a) => commands::correlate::run(a),
        Command::Pnr(a) => commands::pnr::run(a),
        Command::Report(a) => commands::report::run(a),
    }
}

fn main() -> ExitCode {
    // Exit quietly when piped into `head` and friends instead of panicking
    // on the first failed print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let wants_json = std::env::args().any(|a| a == "--error-json");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = CliError::Config(e.render().to_string().trim_end().to_string());
            report(&err, wants_json);
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let json = cli.error_json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report(&err, json);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn report(err: &CliError, json: bool) {
    if json {
        eprintln!("{}", err.to_json());
    } else {
        eprintln!("photostat: {err}");
    }
}
