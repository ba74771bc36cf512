use clap::{Parser, Subcommand};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use pilr::bench::{
    approximation_errors, emit_csv, run_experiment, summary_table, BenchConfig, Method, RunOptions,
};
use pilr::error::PilrError;

#[derive(Parser)]
#[command(name = "pilr", version, about = "Physics-informed linear regression benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the base seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write CSV here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Suppress progress and the summary table.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and emit per-seed and aggregate rows as CSV.
    Run { config: PathBuf },
    /// Report the variety dimension of every sweep cell.
    Dim { config: PathBuf },
    /// Print the hyperparameters selected for every seed.
    Sweep { config: PathBuf },
    /// Report the best-in-span approximation error of every sweep cell.
    ApproxError { config: PathBuf },
}

enum Failure {
    Config(PilrError),
    Runtime(PilrError),
}

impl From<PilrError> for Failure {
    fn from(e: PilrError) -> Self {
        match e {
            PilrError::Config(_) | PilrError::Io { .. } => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    match out {
        Some(path) => {
            let f = File::create(path).map_err(|e| {
                Failure::Runtime(PilrError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })
            })?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn io_err(e: io::Error) -> Failure {
    Failure::Runtime(PilrError::Io {
        path: "<output>".into(),
        message: e.to_string(),
    })
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = match &cli.command {
        Command::Run { config }
        | Command::Dim { config }
        | Command::Sweep { config }
        | Command::ApproxError { config } => config,
    };
    let cfg = BenchConfig::load(path).map_err(Failure::Config)?;
    let opts = RunOptions {
        jobs: cli.jobs,
        base_seed: cli.seed,
        progress: !cli.quiet,
    };
    match &cli.command {
        Command::Run { .. } => {
            let result = run_experiment(&cfg, &opts)?;
            emit_csv(&result.rows(), output(&cli.out)?)?;
            if !cli.quiet {
                eprint!("{}", summary_table(&result));
            }
        }
        Command::Dim { .. } => {
            let base = cli.seed.unwrap_or(cfg.base_seed);
            let mut out = output(&cli.out)?;
            writeln!(out, "cell,d,d_v,method,min_rank,max_rank").map_err(io_err)?;
            for (i, cell) in cfg.cells()?.iter().enumerate() {
                let ctx = pilr::bench::CellContext::build(cell, base)?;
                let dim = &ctx.dim;
                writeln!(
                    out,
                    "{i},{},{},{:?},{},{}",
                    dim.d,
                    dim.d_v,
                    dim.method,
                    dim.ranks.iter().min().unwrap_or(&0),
                    dim.ranks.iter().max().unwrap_or(&0)
                )
                .map_err(io_err)?;
            }
        }
        Command::Sweep { .. } => {
            let result = run_experiment(&cfg, &opts)?;
            let mut out = output(&cli.out)?;
            writeln!(out, "cell,method,seed,xi,nu,mse_val").map_err(io_err)?;
            for (i, _) in result.cells.iter().enumerate() {
                for method in [Method::Ridge, Method::Pilr] {
                    for r in result.seed_rows(method, i) {
                        writeln!(
                            out,
                            "{i},{},{},{:e},{:e},{:e}",
                            r.method,
                            r.seed.unwrap_or(0),
                            r.xi.unwrap_or(f64::NAN),
                            r.nu.unwrap_or(f64::NAN),
                            r.mse_val.unwrap_or(f64::NAN)
                        )
                        .map_err(io_err)?;
                    }
                }
            }
        }
        Command::ApproxError { .. } => {
            let mut out = output(&cli.out)?;
            writeln!(out, "cell,d,approx_mean,approx_std").map_err(io_err)?;
            for (i, (d, mean, std)) in approximation_errors(&cfg, cli.seed)?.into_iter().enumerate() {
                writeln!(out, "{i},{d},{mean:e},{std:e}").map_err(io_err)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
