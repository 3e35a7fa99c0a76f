use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fpu_tori::harness::{run, Kind};

#[derive(Parser)]
#[command(name = "fpu", version, about = "Elliptic tori of FPU chains: experiment drivers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Frequency variation over two windows along a semi-sinusoidal amplitude sweep
    ChaosScan(Args),
    /// One torus normalization with its norm table and transformation stack
    Normalize(Args),
    /// Convergence of the 2D torus normalization on an I* grid
    ToriGrid2d(Args),
    /// 1D torus family by continuation and by normal forms
    TorusFamily(Args),
    /// Monodromy eigenvalue angles along the 1D family
    Monodromy(Args),
    /// Minimal Birkhoff remainder over semi-sinusoidal initial conditions
    BirkhoffScan(Args),
}

#[derive(clap::Args)]
struct Args {
    /// `key = value` configuration; defaults apply to missing keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.cmd {
        Cmd::ChaosScan(a) => (Kind::ChaosScan, a),
        Cmd::Normalize(a) => (Kind::Normalize, a),
        Cmd::ToriGrid2d(a) => (Kind::ToriGrid2d, a),
        Cmd::TorusFamily(a) => (Kind::TorusFamily, a),
        Cmd::Monodromy(a) => (Kind::Monodromy, a),
        Cmd::BirkhoffScan(a) => (Kind::BirkhoffScan, a),
    };
    let text = match &args.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: {}: {e}", p.display());
                return ExitCode::from(1);
            }
        },
        None => String::new(),
    };
    let out = match run(kind, &text) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("error: {}: {e}", args.out.display());
        return ExitCode::from(1);
    }
    for (name, body) in &out.files {
        let path = args.out.join(name);
        if let Err(e) = std::fs::write(&path, body) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(1);
        }
        println!("{}", path.display());
    }
    for f in &out.failures {
        eprintln!("failed: {f}");
    }
    if out.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) }
}
