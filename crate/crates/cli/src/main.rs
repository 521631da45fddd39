use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ensemble_cli::{execute, Kind, RunOptions};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ensemble", version, about = "Controllability experiments for ensembles of control systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bracket determinant and verdict for given bodies and torque axis.
    RigidCheck(Common),
    /// Seeded Monte-Carlo estimate of how often random bodies are generating.
    RigidGeneric(Common),
    /// Moment-method control synthesis for a scalar model ensemble.
    ModelSynthesize(Common),
    /// Oscillatory realization of a bracket control.
    LieextReduce(Common),
    /// Convergence of the oscillatory realization as the period shrinks.
    LieextConverge(Common),
    /// Variation-of-constants factorization of a control-affine flow.
    FlowVerify(Common),
    /// Numerical rank of iterated brackets.
    RankCheck(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to out/<subcommand>.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed_override: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, c) = match cli.command {
        Command::RigidCheck(c) => (Kind::RigidCheck, c),
        Command::RigidGeneric(c) => (Kind::RigidGeneric, c),
        Command::ModelSynthesize(c) => (Kind::ModelSynthesize, c),
        Command::LieextReduce(c) => (Kind::LieextReduce, c),
        Command::LieextConverge(c) => (Kind::LieextConverge, c),
        Command::FlowVerify(c) => (Kind::FlowVerify, c),
        Command::RankCheck(c) => (Kind::RankCheck, c),
    };
    let opts = RunOptions {
        config: c.config,
        out_dir: c.out_dir,
        seed_override: c.seed_override,
        threads: c.threads,
    };
    match execute(kind, &opts) {
        Ok(res) if res.exit_code == 0 => {
            println!("{}", json!({"status": "ok", "kind": kind.as_str(), "out_dir": res.out_dir}));
            ExitCode::SUCCESS
        }
        Ok(res) => {
            let failed: Vec<_> = res.failed.iter().map(|c| json!({"check": c.name, "detail": c.detail})).collect();
            eprintln!(
                "{}",
                json!({"status": "scientific_failure", "kind": kind.as_str(), "out_dir": res.out_dir, "failed": failed})
            );
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{}", json!({"status": "error", "category": e.category(), "message": e.to_string()}));
            ExitCode::from(1)
        }
    }
}
