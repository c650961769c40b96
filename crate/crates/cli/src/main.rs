use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use masm_core::config::ExperimentConfig;
use masm_core::experiment::{self, Table};
use masm_core::Error;

/// Movable-antenna spatial modulation experiments.
#[derive(Parser, Debug)]
#[command(name = "masm", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Channel seeds: `0..10`, `0..=9` or `1,4,7`.
    #[arg(long, default_value = "0..10")]
    seeds: String,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Objective value per AO iteration for every (seed, L, M).
    Converge {
        #[command(flatten)]
        common: Common,
        /// Also write JSON lines `{seed, L, M, n, eta, wall_ms}` here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Fill the wall_ms column (output is then no longer reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Channel-averaged BER versus SNR.
    BerVsSnr {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of ma,fpa,gas,ma-tx,ma-rx.
        #[arg(long)]
        schemes: Option<String>,
        /// Comma-separated SNR list in dB.
        #[arg(long)]
        snr: Option<String>,
    },
    /// Channel-averaged BER versus the number of paths at one SNR.
    BerVsPaths {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        schemes: Option<String>,
        /// Comma-separated path counts.
        #[arg(long)]
        paths: Option<String>,
        /// SNR in dB.
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Full solve of one channel dumped as JSON.
    SingleRun {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn usage(e: Error) -> Failure {
    match e {
        Error::InvalidParameter(msg) => Failure::Usage(msg),
        other => Failure::Core(other),
    }
}

fn load(path: &Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), Failure> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| {
        Failure::Core(Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    })
}

fn emit_table(t: &Table, out: &Option<PathBuf>) -> Result<(), Failure> {
    emit(&t.to_csv(), out)
}

/// Returns the number of solver failures met.
fn run(cli: Cli) -> Result<usize, Failure> {
    match cli.cmd {
        Command::Converge { common, log, timing } => {
            let exp = load(&common.config)?;
            let seeds = experiment::parse_seeds(&common.seeds).map_err(usage)?;
            let out = experiment::converge(&exp, &seeds, common.workers, timing)?;
            emit_table(&out.table, &common.out)?;
            if let Some(p) = log {
                write(&p, &out.json_lines())?;
            }
            Ok(out.failures())
        }
        Command::BerVsSnr { common, schemes, snr } => {
            let exp = load(&common.config)?;
            let seeds = experiment::parse_seeds(&common.seeds).map_err(usage)?;
            let schemes = match schemes {
                Some(s) => experiment::parse_schemes(&s).map_err(usage)?,
                None => experiment::parse_schemes(&exp.sweep.schemes.join(",")).map_err(usage)?,
            };
            let snrs: Vec<f64> = match snr {
                Some(s) => experiment::parse_list(&s, "SNR").map_err(usage)?,
                None => exp.sweep.snr_db.clone(),
            };
            let out = experiment::ber_vs_snr(&exp, &schemes, &snrs, &seeds, common.workers)?;
            emit_table(&out.table, &common.out)?;
            Ok(out.failures())
        }
        Command::BerVsPaths { common, schemes, paths, snr } => {
            let exp = load(&common.config)?;
            let seeds = experiment::parse_seeds(&common.seeds).map_err(usage)?;
            let schemes = match schemes {
                Some(s) => experiment::parse_schemes(&s).map_err(usage)?,
                None => experiment::parse_schemes(&exp.sweep.schemes.join(",")).map_err(usage)?,
            };
            let paths: Vec<usize> = match paths {
                Some(s) => experiment::parse_list(&s, "path count").map_err(usage)?,
                None => exp.sweep.paths.clone(),
            };
            let snr = snr.unwrap_or(exp.sweep.paths_snr_db);
            let out = experiment::ber_vs_paths(&exp, &schemes, &paths, snr, &seeds, common.workers)?;
            emit_table(&out.table, &common.out)?;
            Ok(out.failures())
        }
        Command::SingleRun { config, seed, out } => {
            let exp = load(&config)?;
            let dump = experiment::single_run(&exp, seed)?;
            let failures = dump.record.failures.len();
            emit(&dump.to_json()?, &out)?;
            Ok(failures)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("masm: {n} solver failure(s); results were written from the best feasible iterates");
            ExitCode::from(3)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("masm: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e @ Error::Config(_))) => {
            eprintln!("masm: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e @ Error::SolverFailure { .. })) => {
            eprintln!("masm: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Core(e)) => {
            eprintln!("masm: {e}");
            ExitCode::from(1)
        }
    }
}
