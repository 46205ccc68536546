use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use qms_cli::{run, Command, Overrides};

#[derive(Debug, Parser)]
#[command(
    name = "qms-lab",
    version,
    about = "Quantum metric experiments on AF inductive sequences"
)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `sequence.depth`.
    #[arg(long)]
    depth: Option<usize>,
    /// Overrides `solver.tol`.
    #[arg(long)]
    tol: Option<f64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        depth: args.depth,
        tol: args.tol,
    };
    match run(args.command, &args.config, &overrides) {
        Ok(out) => {
            println!("{} rows -> {}", out.report.rows.len(), out.csv.display());
            println!("sidecar -> {}", out.json.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qms-lab {}: {e}", args.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
