use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use topoexplain_cli::{run, Command, Overrides};

#[derive(Parser)]
#[command(
    name = "topoexplain",
    version,
    about = "Mapper graphs and dtm feature rankings for classifier outputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Build the Mapper graph and export GraphML, DOT and JSON.
    BuildMapper(RunArgs),
    /// Rank label-specific features over the m_hat grid.
    Rank(RunArgs),
    /// Compare explanation stability against the perturbation baseline.
    Stability(RunArgs),
    /// Generate the synthetic corpus and reference-model records.
    Synth(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for automatic (overrides `threads`).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (command, args) = match cli.command {
        Sub::BuildMapper(a) => (Command::BuildMapper, a),
        Sub::Rank(a) => (Command::Rank, a),
        Sub::Stability(a) => (Command::Stability, a),
        Sub::Synth(a) => (Command::Synth, a),
    };
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        threads: args.threads,
    };
    match run(command, &args.config, &overrides) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
